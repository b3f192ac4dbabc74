#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "psloss/metrics.hpp"
#include "oracles.hpp"

using namespace psloss;
using Catch::Approx;

namespace {

/** Total squared-Euclidean cost accumulated along a path. */
double path_cost(const WarpingPath& path, const std::vector<double>& a,
                 const std::vector<double>& b) {
  double acc = 0.0;
  for (const auto& [i, j] : path) {
    const double d = a[i] - b[j];
    acc += d * d;
  }
  return acc;
}

void check_admissible(const WarpingPath& path, std::size_t n, std::size_t m) {
  REQUIRE_FALSE(path.empty());
  CHECK(path.front() == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(path.back() == std::pair<std::size_t, std::size_t>{n - 1, m - 1});
  for (std::size_t k = 1; k < path.size(); ++k) {
    const std::size_t di = path[k].first - path[k - 1].first;
    const std::size_t dj = path[k].second - path[k - 1].second;
    CHECK(di <= 1);
    CHECK(dj <= 1);
    CHECK(di + dj >= 1);
  }
}

}  // namespace

TEST_CASE("dtw of identical series is zero along the diagonal", "[metrics]") {
  const std::vector<double> a{0.5, -1.25, 3.0, 0.0, 2.5};
  const DtwResult r = dtw(a, a);
  CHECK(r.cost == 0.0);
  REQUIRE(r.path.size() == a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(r.path[k].first == k);
    CHECK(r.path[k].second == k);
  }
  CHECK(tdi(r.path, a.size()) == 0.0);
}

TEST_CASE("dtw hand example", "[metrics]") {
  CHECK(dtw({0.0, 0.0}, {0.0, 1.0}).cost == Approx(1.0));
  // Single point against a pair: both elements of b must be visited.
  const DtwResult r = dtw({0.0}, {1.0, 2.0});
  CHECK(r.cost == Approx(5.0));
  REQUIRE(r.path.size() == 2);
  CHECK(r.path[0] == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(r.path[1] == std::pair<std::size_t, std::size_t>{0, 1});
}

TEST_CASE("dtw absorbs a pure time shift that mse would punish", "[metrics]") {
  const std::vector<double> a{0.0, 1.0, 0.0, 0.0};
  const std::vector<double> b{0.0, 0.0, 1.0, 0.0};
  const DtwResult r = dtw(a, b);
  CHECK(r.cost == 0.0);
  CHECK(path_cost(r.path, a, b) == 0.0);
  CHECK(tdi(r.path, a.size()) > 0.0);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(mse > 0.0);
}

TEST_CASE("dtw rejects empty input", "[metrics]") {
  CHECK_THROWS_AS(dtw({}, {1.0}), ShapeError);
  CHECK_THROWS_AS(dtw({1.0}, {}), ShapeError);
}

TEST_CASE("dtw matches exhaustive path enumeration on a small grid",
          "[metrics]") {
  // Every pair of length-3 series over {0, 1, 2}.
  std::vector<std::vector<double>> grid;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 3; ++z)
        grid.push_back({double(x), double(y), double(z)});
  for (const auto& a : grid)
    for (const auto& b : grid) {
      const DtwResult r = dtw(a, b);
      CHECK(r.cost == oracles::brute_dtw(a, b));
      CHECK(path_cost(r.path, a, b) == Approx(r.cost).margin(1e-12));
    }
}

TEST_CASE("dtw matches exhaustive enumeration on random real series",
          "[metrics]") {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> len(1, 6);
  for (int rep = 0; rep < 300; ++rep) {
    const auto a = oracles::random_vector(len(rng), rng);
    const auto b = oracles::random_vector(len(rng), rng);
    const DtwResult r = dtw(a, b);
    CHECK(r.cost == Approx(oracles::brute_dtw(a, b)).margin(1e-12));
    check_admissible(r.path, a.size(), b.size());
    CHECK(path_cost(r.path, a, b) == Approx(r.cost).margin(1e-12));
  }
}

TEST_CASE("dtw backtrack prefers the diagonal on ties", "[metrics]") {
  // All-zero series: every predecessor ties at zero, so the recovered
  // path must be the pure diagonal rather than a staircase.
  const std::vector<double> z(4, 0.0);
  const DtwResult r = dtw(z, z);
  REQUIRE(r.path.size() == 4);
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(r.path[k] == std::pair<std::size_t, std::size_t>{k, k});
}

TEST_CASE("dtw path is deterministic", "[metrics]") {
  std::mt19937_64 rng(77);
  const auto a = oracles::random_vector(12, rng);
  const auto b = oracles::random_vector(9, rng);
  const DtwResult r1 = dtw(a, b);
  const DtwResult r2 = dtw(a, b);
  CHECK(r1.cost == r2.cost);
  CHECK(r1.path == r2.path);
  check_admissible(r1.path, a.size(), b.size());
}

TEST_CASE("tdi hand values", "[metrics]") {
  const WarpingPath stair{{0, 0}, {1, 0}, {1, 1}};
  CHECK(tdi(stair, 2) == Approx(0.25));
  const WarpingPath diag{{0, 0}, {1, 1}, {2, 2}};
  CHECK(tdi(diag, 3) == 0.0);
  CHECK_THROWS_AS(tdi(diag, 0), ShapeError);
}

TEST_CASE("pcc basic identities", "[metrics]") {
  const std::vector<double> a{1.0, 2.0, 4.0, -3.0, 0.5};
  CHECK(pcc(a, a) == Approx(1.0));
  std::vector<double> scaled(a.size()), negated(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    scaled[i] = 2.0 * a[i] + 3.0;
    negated[i] = -a[i];
  }
  CHECK(pcc(a, scaled) == Approx(1.0));
  CHECK(pcc(a, negated) == Approx(-1.0));
  CHECK(pcc(a, {5.0, 5.0, 5.0, 5.0, 5.0}) == 0.0);
  CHECK(pcc({2.0, 2.0, 2.0, 2.0, 2.0}, a) == 0.0);
  CHECK_THROWS_AS(pcc({1.0, 2.0}, {1.0}), ShapeError);
  CHECK_THROWS_AS(pcc({}, {}), ShapeError);
}

TEST_CASE("pcc matches the direct formula on random input", "[metrics]") {
  std::mt19937_64 rng(505);
  for (int rep = 0; rep < 500; ++rep) {
    const auto a = oracles::random_vector(16, rng);
    const auto b = oracles::random_vector(16, rng);
    CHECK(pcc(a, b) == Approx(oracles::naive_pearson(a, b)).margin(1e-12));
  }
}

TEST_CASE("evaluate on a perfect forecast", "[metrics]") {
  std::mt19937_64 rng(606);
  const Tensor t({2, 3, 8}, oracles::random_vector(48, rng));
  const MetricsReport rep = evaluate(t, t);
  CHECK(rep.mse == 0.0);
  CHECK(rep.mae == 0.0);
  CHECK(rep.dtw == 0.0);
  CHECK(rep.tdi == 0.0);
  CHECK(rep.pcc == Approx(1.0));
}

TEST_CASE("evaluate aggregates per-series metrics", "[metrics]") {
  std::mt19937_64 rng(707);
  const std::size_t B = 2, C = 3, T = 8;
  const auto tv = oracles::random_vector(B * C * T, rng);
  const auto pv = oracles::random_vector(B * C * T, rng);
  const Tensor truth({B, C, T}, tv);
  const Tensor pred({B, C, T}, pv);
  const MetricsReport rep = evaluate(truth, pred);

  double mse = 0.0, mae = 0.0;
  for (std::size_t i = 0; i < tv.size(); ++i) {
    mse += (pv[i] - tv[i]) * (pv[i] - tv[i]);
    mae += std::fabs(pv[i] - tv[i]);
  }
  CHECK(rep.mse == Approx(mse / double(tv.size())).margin(1e-12));
  CHECK(rep.mae == Approx(mae / double(tv.size())).margin(1e-12));

  double dtw_sum = 0.0, tdi_sum = 0.0, pcc_sum = 0.0;
  for (std::size_t s = 0; s < B * C; ++s) {
    const std::vector<double> a(tv.begin() + std::ptrdiff_t(s * T),
                                tv.begin() + std::ptrdiff_t((s + 1) * T));
    const std::vector<double> b(pv.begin() + std::ptrdiff_t(s * T),
                                pv.begin() + std::ptrdiff_t((s + 1) * T));
    dtw_sum += oracles::brute_dtw(a, b);
    const DtwResult r = dtw(a, b);
    tdi_sum += tdi(r.path, T);
    pcc_sum += oracles::naive_pearson(a, b);
  }
  CHECK(rep.dtw == Approx(dtw_sum / double(B * C)).margin(1e-12));
  CHECK(rep.tdi == Approx(tdi_sum / double(B * C)).margin(1e-12));
  CHECK(rep.pcc == Approx(pcc_sum / double(B * C)).margin(1e-12));
}

TEST_CASE("evaluate validates shapes", "[metrics]") {
  const Tensor a({1, 2, 4}, std::vector<double>(8, 0.0));
  const Tensor b({1, 2, 5}, std::vector<double>(10, 0.0));
  const Tensor flat({2, 4}, std::vector<double>(8, 0.0));
  CHECK_THROWS_AS(evaluate(a, b), ShapeError);
  CHECK_THROWS_AS(evaluate(flat, flat), ShapeError);
}
