// Feature autoencoder (encode/decode against straight-line oracles, LN
// postcondition, gradients), the standardizer ablation, and the latent
// tokenize/detokenize layout.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "waferdiff/latent_codec.hpp"

using namespace wd;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line re-implementation of the encoder for one sample.
VecD oracle_encode(const Codec<double>& c, const VecD& x) {
  const Index hidden = c.enc1.w.rows();
  const Index latent = c.enc2.w.rows();
  VecD a(hidden);
  for (Index i = 0; i < hidden; ++i) {
    double s = c.enc1.b(0, i);
    for (Index j = 0; j < x.size(); ++j) s += c.enc1.w(i, j) * x[j];
    a[i] = s * sigmoid(s);
  }
  VecD pre(latent);
  for (Index i = 0; i < latent; ++i) {
    double s = c.enc2.b(0, i);
    for (Index j = 0; j < hidden; ++j) s += c.enc2.w(i, j) * a[j];
    pre[i] = s;
  }
  const double mean = pre.mean();
  double var = 0.0;
  for (Index i = 0; i < latent; ++i) var += (pre[i] - mean) * (pre[i] - mean);
  var /= static_cast<double>(latent);
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  VecD h(latent);
  for (Index i = 0; i < latent; ++i) h[i] = (pre[i] - mean) * inv;
  return h;
}

VecD oracle_decode(const Codec<double>& c, const VecD& h) {
  const Index hidden = c.dec1.w.rows();
  const Index out = c.dec2.w.rows();
  VecD a(hidden);
  for (Index i = 0; i < hidden; ++i) {
    double s = c.dec1.b(0, i);
    for (Index j = 0; j < h.size(); ++j) s += c.dec1.w(i, j) * h[j];
    a[i] = s * sigmoid(s);
  }
  VecD x(out);
  for (Index i = 0; i < out; ++i) {
    double s = c.dec2.b(0, i);
    for (Index j = 0; j < hidden; ++j) s += c.dec2.w(i, j) * a[j];
    x[i] = s;
  }
  return x;
}

}  // namespace

TEST_CASE("codec config derives the token grid") {
  CodecConfig cfg;
  cfg.input_dim = 1158;
  CHECK(cfg.latent_dim == 128);
  CHECK(cfg.channels == 4);
  CHECK(cfg.seq_len() == 32);  // ceil(128 / 4)
  CHECK(cfg.padded() == 0);

  CodecConfig odd;
  odd.input_dim = 16;
  odd.latent_dim = 5;
  odd.channels = 2;
  CHECK(odd.seq_len() == 3);
  CHECK(odd.padded() == 1);

  CodecConfig bad;
  bad.input_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("encode matches an independent oracle and is unit-normalized") {
  CodecConfig cfg;
  cfg.input_dim = 20;
  cfg.hidden_dim = 16;
  cfg.latent_dim = 12;
  cfg.channels = 4;
  Rng rng(5);
  const Codec<double> c = Codec<double>::init(cfg, rng);

  Rng data_rng(6);
  MatD x(7, 20);
  data_rng.fill_normal(x);
  const MatD h = c.encode(x);
  REQUIRE(h.rows() == 7);
  REQUIRE(h.cols() == 12);

  for (Index r = 0; r < x.rows(); ++r) {
    const VecD want = oracle_encode(c, x.row(r).transpose());
    const double rel = (h.row(r).transpose() - want).norm() / want.norm();
    CHECK(rel < 1e-6);
    // LN postcondition: per-sample mean 0, variance 1 (up to the epsilon).
    CHECK(std::abs(h.row(r).mean()) < 1e-6);
    const double var = h.row(r).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  MatD wrong(3, 19);
  wrong.setZero();
  CHECK_THROWS_AS(c.encode(wrong), ShapeError);
}

TEST_CASE("encode of zero input with zero biases is zero under the LN rule") {
  CodecConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden_dim = 8;
  cfg.latent_dim = 8;
  Rng rng(1);
  Codec<double> c = Codec<double>::init(cfg, rng);
  c.enc1.b.setZero();
  c.enc2.b.setZero();
  const MatD h = c.encode(MatD::Zero(2, 8));
  // Pre-LN vector is exactly 0; the epsilon keeps the division finite.
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decode matches an independent oracle; zero weights give the bias") {
  CodecConfig cfg;
  cfg.input_dim = 20;
  cfg.hidden_dim = 16;
  cfg.latent_dim = 12;
  Rng rng(8);
  Codec<double> c = Codec<double>::init(cfg, rng);

  Rng data_rng(9);
  MatD h(4, 12);
  data_rng.fill_normal(h);
  const MatD xhat = c.decode(h);
  REQUIRE(xhat.cols() == 20);
  for (Index r = 0; r < h.rows(); ++r) {
    const VecD want = oracle_decode(c, h.row(r).transpose());
    CHECK((xhat.row(r).transpose() - want).norm() / want.norm() < 1e-6);
  }

  c.dec1.w.setZero();
  c.dec1.b.setZero();
  c.dec2.w.setZero();
  const MatD collapsed = c.decode(h);
  for (Index r = 0; r < h.rows(); ++r)
    CHECK((collapsed.row(r) - c.dec2.b.row(0)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(c.decode(MatD::Zero(1, 11)), ShapeError);
}

TEST_CASE("small perturbations stay bounded through the pre-LN encoder") {
  CodecConfig cfg;
  cfg.input_dim = 10;
  cfg.hidden_dim = 12;
  cfg.latent_dim = 8;
  Rng rng(12);
  const Codec<double> c = Codec<double>::init(cfg, rng);

  Rng data_rng(13);
  MatD x(1, 10);
  data_rng.fill_normal(x);
  MatD delta(1, 10);
  data_rng.fill_normal(delta);
  delta *= 1e-4 / delta.norm();

  // Pre-LN output = enc2(silu(enc1 x)); silu is 1.1-Lipschitz, so the spectral
  // bound ||W2||*||W1||*1.1*||delta|| caps the change.
  const MatD pre_a = c.enc2.forward(silu(c.enc1.forward(x)));
  const MatD pre_b = c.enc2.forward(silu(c.enc1.forward(MatD(x + delta))));
  const double bound = 1.1 *
                       c.enc1.w.jacobiSvd().singularValues()(0) *
                       c.enc2.w.jacobiSvd().singularValues()(0) * delta.norm();
  CHECK((pre_b - pre_a).norm() <= bound * (1.0 + 1e-9));
}

TEST_CASE("autoencoder backward matches central finite differences") {
  CodecConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden_dim = 5;
  cfg.latent_dim = 4;
  cfg.channels = 2;
  Rng rng(31);
  Codec<double> c = Codec<double>::init(cfg, rng);

  Rng data_rng(32);
  MatD x(3, 6);
  data_rng.fill_normal(x);

  auto loss_of = [&]() {
    const MatD xhat = c.decode(c.encode(x));
    return (xhat - x).array().square().mean();
  };

  typename Codec<double>::Cache cache;
  const MatD h = c.encode(x, &cache);
  const MatD xhat = c.decode(h, &cache);
  c.zero_grad();
  c.backward_autoencoder(
      cache, (xhat - x) * (2.0 / static_cast<double>(xhat.size())));

  std::vector<ParamRef<double>> refs;
  c.collect(refs, "codec");
  const double h_step = 1e-6;
  for (const auto& ref : refs) {
    double max_rel = 0.0;
    for (Index i = 0; i < ref.value->rows(); ++i)
      for (Index j = 0; j < ref.value->cols(); ++j) {
        const double saved = (*ref.value)(i, j);
        (*ref.value)(i, j) = saved + h_step;
        const double up = loss_of();
        (*ref.value)(i, j) = saved - h_step;
        const double down = loss_of();
        (*ref.value)(i, j) = saved;
        const double fd = (up - down) / (2.0 * h_step);
        const double got = (*ref.grad)(i, j);
        const double denom = std::max({std::abs(fd), std::abs(got), 1e-8});
        max_rel = std::max(max_rel, std::abs(fd - got) / denom);
      }
    INFO("tensor ", ref.name);
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("standardizer round-trips the copied coordinates") {
  CodecConfig cfg;
  cfg.input_dim = 6;
  cfg.latent_dim = 8;  // wider than F: zero-padded
  cfg.channels = 2;
  Standardizer<double> st;
  st.cfg = cfg;
  st.mean = MatD::Zero(1, 6);
  st.std = MatD::Ones(1, 6);
  st.mean << 1, 2, 3, 4, 5, 6;
  st.std << 1, 2, 1, 2, 1, 2;

  MatD x(2, 6);
  x << 2, 6, 2, 0, 7, 0, 1, 2, 3, 4, 5, 6;
  const MatD h = st.encode(x);
  REQUIRE(h.cols() == 8);
  CHECK(h(0, 0) == 1.0);   // (2-1)/1
  CHECK(h(0, 1) == 2.0);   // (6-2)/2
  CHECK(h(0, 3) == -2.0);  // (0-4)/2
  CHECK(h(0, 6) == 0.0);   // padding
  CHECK(h(1, 0) == 0.0);   // exactly the mean row

  const MatD back = st.decode(h);
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-12);

  // Truncating arm: latent narrower than F loses the tail features to the
  // training mean.
  CodecConfig narrow = cfg;
  narrow.latent_dim = 4;
  Standardizer<double> tr = st;
  tr.cfg = narrow;
  const MatD back2 = tr.decode(tr.encode(x));
  CHECK(back2(0, 0) == 2.0);
  CHECK(back2(0, 4) == 5.0);  // restored as the mean
  CHECK(back2(0, 5) == 6.0);
}

TEST_CASE("tokenize lays latents out row-major with zero padding") {
  VecD h(5);
  h << 1, 2, 3, 4, 5;
  const MatD z = tokenize(h, 2);
  REQUIRE(z.rows() == 2);
  REQUIRE(z.cols() == 3);  // L = ceil(5/2)
  CHECK(z(0, 0) == 1.0);
  CHECK(z(0, 2) == 3.0);
  CHECK(z(1, 0) == 4.0);
  CHECK(z(1, 1) == 5.0);
  CHECK(z(1, 2) == 0.0);  // padded slot

  const VecD back = detokenize(z, 5);
  CHECK((back - h).cwiseAbs().maxCoeff() == 0.0);

  // Exact-fit roundtrip at the production shape.
  VecD big(128);
  Rng rng(3);
  for (Index i = 0; i < 128; ++i) big[i] = rng.normal();
  const MatD z128 = tokenize(big, 4);
  REQUIRE(z128.rows() == 4);
  REQUIRE(z128.cols() == 32);
  CHECK((detokenize(z128, 128) - big).cwiseAbs().maxCoeff() == 0.0);

  CHECK((detokenize(MatD::Zero(2, 3), 6)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(detokenize(z, 7), ShapeError);
  CHECK_THROWS_AS(tokenize(h, 0), ShapeError);
}

TEST_CASE("batched tokenize matches the single-sample layout") {
  Rng rng(14);
  MatD h(4, 5);
  rng.fill_normal(h);
  const MatD z = tokenize_batch(h, 2);
  REQUIRE(z.rows() == 4);
  REQUIRE(z.cols() == 6);  // C*L = 2*3
  for (Index r = 0; r < 4; ++r) {
    const MatD single = tokenize<double>(h.row(r).transpose(), 2);
    for (Index c = 0; c < 2; ++c)
      for (Index l = 0; l < 3; ++l)
        CHECK(z(r, c * 3 + l) == single(c, l));
  }
  const MatD back = detokenize_batch(z, 5);
  CHECK((back - h).cwiseAbs().maxCoeff() == 0.0);
}
