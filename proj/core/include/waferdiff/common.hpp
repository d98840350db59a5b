#pragma once

// Shared plumbing: matrix aliases, the error taxonomy, and a deterministic RNG.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace wd {

// Row-major so token rows and serialized blobs are contiguous in memory.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;
using Index = Eigen::Index;

enum class Label : std::uint8_t { normal = 0, anomalous = 1 };

// Error taxonomy. The CLI maps branches onto exit codes:
// UsageError -> 1, NumericError -> 2, IoError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};
struct SchemaError : UsageError {
  using UsageError::UsageError;
};
struct ParseError : UsageError {
  using UsageError::UsageError;
};
struct EmptySelectionError : UsageError {
  using UsageError::UsageError;
};
struct ShapeError : UsageError {
  using UsageError::UsageError;
};
struct RangeError : UsageError {
  using UsageError::UsageError;
};
struct ConfigError : UsageError {
  using UsageError::UsageError;
};

struct NumericError : Error {
  using Error::Error;
};
struct MetricError : NumericError {
  using NumericError::NumericError;
};

struct IoError : Error {
  using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

// Deterministic child-seed derivation (splitmix64 finalizer over seed and salt).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 0x632be59bd9b4e019ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seeded random stream. mt19937_64 supplies the bits; uniforms, normals, bounded
// ints, and shuffles are implemented here instead of with <random> distributions
// because those are implementation-defined and would break byte-identical outputs
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. One value per call (the sibling value is
  // discarded) so draw counts stay predictable for stream-splitting.
  double normal() {
    const double u1 = static_cast<double>((bits() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, n). Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw RangeError("Rng::below requires n > 0");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = bits();
    while (x >= limit) x = bits();
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  // Fill any writable dense expression, drawing in row-major order so a
  // row-block fill consumes the same stream values as element-wise draws.
  // (const-ref + const_cast is Eigen's documented way to pass writable
  // expressions such as blocks.)
  template <typename Derived>
  void fill_normal(const Eigen::MatrixBase<Derived>& expr) {
    auto& m = const_cast<Eigen::MatrixBase<Derived>&>(expr).derived();
    using S = typename Derived::Scalar;
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(normal());
  }

  template <typename Derived>
  void fill_uniform(const Eigen::MatrixBase<Derived>& expr, double lo,
                    double hi) {
    auto& m = const_cast<Eigen::MatrixBase<Derived>&>(expr).derived();
    using S = typename Derived::Scalar;
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c)
        m(r, c) = static_cast<S>(lo + (hi - lo) * uniform());
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace wd
