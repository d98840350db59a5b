#pragma once

// Minimal dense-network toolkit: linear layers with explicit backward passes,
// parameter-free row layernorm, SiLU, a parameter registry, and AdamW.
// Everything is batched: matrices carry one sample (or token) per row.

#include "waferdiff/common.hpp"

#include <string>
#include <vector>

namespace wd {

template <typename S>
S silu(S x) {
  return x / (S{1} + std::exp(-x));
}

template <typename S>
S silu_grad(S x) {
  const S sig = S{1} / (S{1} + std::exp(-x));
  return sig * (S{1} + x * (S{1} - sig));
}

template <typename S>
Mat<S> silu(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return silu(v); });
}

template <typename S>
Mat<S> silu_grad_m(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return silu_grad(v); });
}

// Named view of one parameter matrix and its gradient buffer.
template <typename S>
struct ParamRef {
  std::string name;
  Mat<S>* value;
  Mat<S>* grad;
};

// y = x W^T + b, x carrying one sample per row. Gradients accumulate until
// zero_grad so several backward calls per step compose.
template <typename S>
struct Linear {
  Mat<S> w;   // out x in
  Mat<S> b;   // 1 x out; empty when the layer has no bias
  Mat<S> gw;
  Mat<S> gb;

  bool has_bias() const { return b.size() > 0; }

  static Linear zeros(Index out, Index in, bool bias = true) {
    Linear l;
    l.w = Mat<S>::Zero(out, in);
    l.gw = Mat<S>::Zero(out, in);
    if (bias) {
      l.b = Mat<S>::Zero(1, out);
      l.gb = Mat<S>::Zero(1, out);
    }
    return l;
  }

  // Uniform fan-in scaling for weights and bias, U(-1/sqrt(in), 1/sqrt(in)).
  static Linear kaiming(Index out, Index in, Rng& rng, bool bias = true) {
    Linear l = zeros(out, in, bias);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    rng.fill_uniform(l.w, -bound, bound);
    if (bias) rng.fill_uniform(l.b, -bound, bound);
    return l;
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y;
    y.noalias() = x * w.transpose();
    if (has_bias()) y.rowwise() += b.row(0);
    return y;
  }

  // x is the stashed forward input; returns dL/dx.
  Mat<S> backward(const Mat<S>& x, const Mat<S>& dy) {
    gw.noalias() += dy.transpose() * x;
    if (has_bias()) gb.row(0) += dy.colwise().sum();
    Mat<S> dx;
    dx.noalias() = dy * w;
    return dx;
  }

  void collect(std::vector<ParamRef<S>>& refs, const std::string& prefix) {
    refs.push_back({prefix + ".w", &w, &gw});
    if (has_bias()) refs.push_back({prefix + ".b", &b, &gb});
  }

  void zero_grad() {
    gw.setZero();
    if (has_bias()) gb.setZero();
  }
};

// Parameter-free layer normalization across each row.
template <typename S>
struct RowNorm {
  static constexpr double kEps = 1e-5;

  struct Cache {
    Mat<S> y;
    Vec<S> inv_std;
  };

  static Mat<S> forward(const Mat<S>& x, Cache* cache = nullptr) {
    const auto d = static_cast<S>(x.cols());
    Vec<S> mean = x.rowwise().mean();
    Mat<S> centered = x.colwise() - mean;
    Vec<S> inv_std =
        (centered.rowwise().squaredNorm() / d).array() + static_cast<S>(kEps);
    inv_std = inv_std.array().rsqrt();
    Mat<S> y = centered.array().colwise() * inv_std.array();
    if (cache) {
      cache->y = y;
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  static Mat<S> backward(const Cache& cache, const Mat<S>& dy) {
    Vec<S> mean_dy = dy.rowwise().mean();
    Vec<S> mean_dy_y = (dy.array() * cache.y.array()).rowwise().mean();
    Mat<S> dx = ((dy.colwise() - mean_dy).array() -
                 cache.y.array().colwise() * mean_dy_y.array())
                    .colwise() *
                cache.inv_std.array();
    return dx;
  }
};

// Adam with decoupled weight decay. Slot order is fixed by the parameter list
// handed to the constructor; step() must receive the same list.
template <typename S>
class AdamW {
 public:
  AdamW(const std::vector<ParamRef<S>>& params, double lr, double weight_decay)
      : lr_(lr), wd_(weight_decay) {
    slots_.reserve(params.size());
    for (const auto& p : params)
      slots_.push_back({Mat<S>::Zero(p.value->rows(), p.value->cols()),
                        Mat<S>::Zero(p.value->rows(), p.value->cols())});
  }

  void step(const std::vector<ParamRef<S>>& params) {
    if (params.size() != slots_.size())
      throw ShapeError("AdamW::step: parameter list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mat<S>& w = *params[i].value;
      const Mat<S>& g = *params[i].grad;
      Mat<S>& m = slots_[i].m;
      Mat<S>& v = slots_[i].v;
      m = static_cast<S>(kBeta1) * m + static_cast<S>(1.0 - kBeta1) * g;
      v = (static_cast<S>(kBeta2) * v.array() +
           static_cast<S>(1.0 - kBeta2) * g.array().square())
              .matrix();
      w.array() -= static_cast<S>(lr_) *
                   ((m.array() / static_cast<S>(bc1)) /
                        ((v.array() / static_cast<S>(bc2)).sqrt() +
                         static_cast<S>(kEps)) +
                    static_cast<S>(wd_) * w.array());
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  struct Slot {
    Mat<S> m, v;
  };
  std::vector<Slot> slots_;
  double lr_;
  double wd_;
  long t_ = 0;
};

}  // namespace wd
