#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "psloss/gdw.hpp"
#include "psloss/loss.hpp"
#include "psloss/patching.hpp"
#include "oracles.hpp"

using namespace psloss;
using Catch::Approx;

namespace {

// Small differentiable fixture: pred = x * w segmented into patches, with
// the three structural losses built on one tape.
struct Fixture {
  Shape ws{4, 12};
  std::vector<double> xv, wv, tv;
  Tape tape;
  Tensor w, l_corr, l_var, l_mean;

  explicit Fixture(unsigned seed) {
    std::mt19937_64 rng(seed);
    xv = oracles::random_vector(2 * 4, rng);
    wv = oracles::random_vector(48, rng);
    tv = oracles::random_vector(2 * 1 * 12, rng);
    w = Tensor(ws, wv).attach(tape);
    build(w);
  }

  void build(const Tensor& weights) {
    Tensor x({2, 4}, xv);
    Tensor pred = reshape(matmul(x, weights), {2, 1, 12});
    PatchPlan plan;
    plan.patch_len = 4;
    plan.stride = 2;
    plan.patch_count = 5;
    Tensor truth({2, 1, 12}, tv);
    Tensor tp = segment(truth, plan).data;
    Tensor pp = segment(pred, plan).data;
    l_corr = corr_loss(tp, pp);
    l_var = var_loss(tp, pp);
    l_mean = mean_loss(tp, pp);
  }

  double loss_at(const std::vector<double>& weights, int which) {
    Fixture probe(*this, weights);
    if (which == 0) return probe.l_corr.value();
    if (which == 1) return probe.l_var.value();
    return probe.l_mean.value();
  }

 private:
  Fixture(const Fixture& src, const std::vector<double>& weights)
      : ws(src.ws), xv(src.xv), wv(weights), tv(src.tv) {
    w = Tensor(ws, wv);
    build(w);
  }
};

}  // namespace

TEST_CASE("gradient norms match finite-difference norms", "[gdw]") {
  Fixture fx(7);
  auto norms = grad_norms(fx.tape, fx.l_corr, fx.l_var, fx.l_mean,
                          {fx.w.node()});
  for (int which = 0; which < 3; ++which) {
    auto f = [&](const std::vector<double>& wv) {
      return fx.loss_at(wv, which);
    };
    auto fd = oracles::finite_diff_grad(f, fx.wv);
    double want = 0.0;
    for (double g : fd) want += g * g;
    want = std::sqrt(want);
    CHECK(norms[static_cast<std::size_t>(which)] ==
          Approx(want).epsilon(1e-4));
  }
}

TEST_CASE("identical losses give identical norms", "[gdw]") {
  Fixture fx(8);
  auto norms = grad_norms(fx.tape, fx.l_corr, fx.l_corr, fx.l_corr,
                          {fx.w.node()});
  CHECK(norms[0] == norms[1]);
  CHECK(norms[1] == norms[2]);
  CHECK(norms[0] > 0.0);
}

TEST_CASE("norm passes are independent and repeatable", "[gdw]") {
  Fixture fx(9);
  const double first = grad_norm(fx.tape, fx.l_var, {fx.w.node()});
  (void)grad_norm(fx.tape, fx.l_corr, {fx.w.node()});
  const double again = grad_norm(fx.tape, fx.l_var, {fx.w.node()});
  CHECK(first == again);
}

TEST_CASE("a constant-in-parameters loss has zero norm", "[gdw]") {
  Tape tape;
  Tensor w = Tensor({2, 2}, {1, 2, 3, 4}).attach(tape);
  Tensor konst = Tensor::scalar(5.0);
  Tensor loss = mean(mul(konst, konst));
  (void)w;
  CHECK_THROWS_AS(tape.backward(loss, {w.node()}), TapeError);

  Tensor attached_loss = sum(mul(w, Tensor::zeros({2, 2})));
  CHECK(grad_norm(tape, attached_loss, {w.node()}) == 0.0);
}

TEST_CASE("shifted perfect prediction zeroes the divergence gradient",
          "[gdw]") {
  std::mt19937_64 rng(10);
  auto tv = oracles::random_vector(2 * 1 * 12, rng);
  std::vector<double> pv(tv.size());
  for (std::size_t i = 0; i < tv.size(); ++i) pv[i] = tv[i] + 1.25;

  Tape tape;
  Tensor p = Tensor({2, 1, 12}, pv).attach(tape);
  PatchPlan plan;
  plan.patch_len = 4;
  plan.stride = 4;
  plan.patch_count = 3;
  Tensor tp = segment(Tensor({2, 1, 12}, tv), plan).data;
  Tensor pp = segment(p, plan).data;
  CHECK(grad_norm(tape, var_loss(tp, pp), {p.node()}) < 1e-10);
}

TEST_CASE("weights equalize effective gradient magnitudes", "[gdw]") {
  auto w = compute_weights({1.0, 1.0, 1.0}, 1.0, 1.0);
  CHECK(w[0] == Approx(1.0).margin(1e-9));
  CHECK(w[1] == Approx(1.0).margin(1e-9));
  CHECK(w[2] == Approx(1.0).margin(1e-9));

  const std::array<double, 3> norms{2.0, 1.0, 0.5};
  const double c = 0.8, v = 0.9;
  w = compute_weights(norms, c, v);
  const double g_bar = (2.0 + 1.0 + 0.5) / 3.0;
  CHECK(w[0] * norms[0] == Approx(g_bar).margin(1e-9));
  CHECK(w[1] * norms[1] == Approx(g_bar).margin(1e-9));
  CHECK(w[2] * norms[2] == Approx(g_bar * c * v).margin(1e-9));
}

TEST_CASE("degenerate norms fall back to unit weights", "[gdw]") {
  auto w = compute_weights({0.0, 0.0, 0.0}, 0.7, 0.6);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 1.0);
  CHECK(w[2] == Approx(0.42));

  // One live norm is enough to leave the degenerate branch.
  w = compute_weights({0.0, 3.0, 0.0}, 1.0, 1.0);
  CHECK(w[1] == Approx(1.0 / 3.0).margin(1e-9));
  CHECK(w[0] > 1e6);
}

TEST_CASE("inactive components get zero weight", "[gdw]") {
  auto w = compute_weights({2.0, 9.9, 1.0}, 1.0, 1.0, {true, false, true});
  const double g_bar = 1.5;
  CHECK(w[1] == 0.0);
  CHECK(w[0] == Approx(g_bar / 2.0).margin(1e-9));
  CHECK(w[2] == Approx(g_bar / 1.0).margin(1e-9));

  w = compute_weights({1.0, 1.0, 1.0}, 1.0, 1.0, {false, false, false});
  CHECK(w == std::array<double, 3>{0.0, 0.0, 0.0});
}

TEST_CASE("scale factors hit their landmark values", "[gdw]") {
  std::mt19937_64 rng(11);
  auto yv = oracles::random_vector(2 * 3 * 16, rng);
  Tensor y({2, 3, 16}, yv);

  ScaleFactors f = scale_factors(y, y);
  CHECK(f.c == Approx(1.0).margin(1e-9));
  CHECK(f.v == Approx(1.0).margin(1e-9));

  std::vector<double> negv(yv.size());
  for (std::size_t i = 0; i < yv.size(); ++i) negv[i] = -yv[i];
  f = scale_factors(y, Tensor({2, 3, 16}, negv));
  CHECK(f.c == Approx(0.0).margin(1e-9));
  CHECK(f.v == Approx(1.0).margin(1e-9));

  std::vector<double> twice(yv.size());
  for (std::size_t i = 0; i < yv.size(); ++i) twice[i] = 2.0 * yv[i];
  f = scale_factors(y, Tensor({2, 3, 16}, twice));
  CHECK(f.c == Approx(1.0).margin(1e-9));
  CHECK(f.v == Approx(0.8).margin(1e-9));

  CHECK_THROWS_AS(scale_factors(y, Tensor({2, 3}, std::vector<double>(6))),
                  ShapeError);
}

TEST_CASE("scale factors are shift invariant and bounded", "[gdw]") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 100; ++rep) {
    auto yv = oracles::random_vector(48, rng);
    auto pv = oracles::random_vector(48, rng);
    ScaleFactors f = scale_factors(Tensor({1, 1, 48}, yv),
                                   Tensor({1, 1, 48}, pv));
    CHECK(f.c >= -1e-9);
    CHECK(f.c <= 1.0 + 1e-9);
    CHECK(f.v >= 0.0);
    CHECK(f.v <= 1.0 + 1e-9);

    std::vector<double> ys(yv.size()), ps(pv.size());
    for (std::size_t i = 0; i < yv.size(); ++i) {
      ys[i] = yv[i] + 5.5;
      ps[i] = pv[i] + 5.5;
    }
    ScaleFactors g = scale_factors(Tensor({1, 1, 48}, ys),
                                   Tensor({1, 1, 48}, ps));
    CHECK(g.c == Approx(f.c).margin(1e-9));
    CHECK(g.v == Approx(f.v).margin(1e-9));
  }
}

TEST_CASE("total loss mixes base and structural terms", "[gdw]") {
  Tensor a = Tensor::scalar(0.5);
  Tensor b = Tensor::scalar(2.0);
  TotalLossConfig cfg;
  cfg.lambda = 3.0;
  CHECK(total_loss(a, b, cfg).value() == Approx(6.5));

  cfg.lambda = 0.0;
  CHECK(total_loss(a, b, cfg).value() == 0.5);

  cfg.lambda = -1.0;
  CHECK_THROWS_AS(total_loss(a, b, cfg), ConfigError);
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(total_loss(Tensor({2}, {1, 2}), b, cfg), ShapeError);
}

TEST_CASE("weights scale component gradients without coupling", "[gdw]") {
  Fixture fx(13);
  const std::vector<int> wrt{fx.w.node()};
  auto gc = fx.tape.backward(fx.l_corr, wrt).at(fx.w.node()).values();
  auto gv = fx.tape.backward(fx.l_var, wrt).at(fx.w.node()).values();
  auto gm = fx.tape.backward(fx.l_mean, wrt).at(fx.w.node()).values();

  const double alpha = 0.37, beta = 2.1, gamma = 0.05, lambda = 3.0;
  Tensor combined =
      mul(add(add(mul(fx.l_corr, Tensor::scalar(alpha)),
                  mul(fx.l_var, Tensor::scalar(beta))),
              mul(fx.l_mean, Tensor::scalar(gamma))),
          Tensor::scalar(lambda));
  auto gt = fx.tape.backward(combined, wrt).at(fx.w.node()).values();

  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double want = lambda * (alpha * gc[i] + beta * gv[i] + gamma * gm[i]);
    CHECK(gt[i] == Approx(want).margin(1e-12));
  }
}
