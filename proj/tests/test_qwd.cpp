#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "qwgan/errors.hpp"
#include "qwgan/qwd.hpp"

using namespace qwgan;
using namespace qwgan::qwd;
using Eigen::MatrixXd;

namespace {

QVector pt(double w, double x = 0, double y = 0, double z = 0) { return QVector{{w, x, y, z}}; }

DiscreteDistribution reals(std::vector<double> xs, std::vector<double> ps) {
  std::vector<QVector> pts;
  for (double x : xs) pts.push_back(pt(x));
  return DiscreteDistribution::real_pmf(1, pts, ps);
}

}  // namespace

TEST_CASE("distribution construction") {
  const auto d = DiscreteDistribution::real_pmf(1, {pt(0), pt(1), pt(2)}, std::vector<double>{0.5, 0.0, 0.5});
  CHECK(d.size() == 2);
  CHECK(d.mode() == MassMode::RealPmf);
  CHECK_THROWS_AS(DiscreteDistribution::real_pmf(1, {pt(0), pt(1)}, std::vector<double>{0.5, 0.6}), InputError);
  const auto r = DiscreteDistribution::real_pmf(1, {pt(0), pt(1)}, std::vector<double>{1.0, 3.0}, true);
  CHECK(r.mass()[1].w == 0.75);
  CHECK_THROWS_AS(DiscreteDistribution::real_pmf(1, {pt(0), pt(0)}, std::vector<double>{0.5, 0.5}), InputError);
  CHECK_THROWS_AS(DiscreteDistribution::real_pmf(1, {pt(0), pt(1)}, std::vector<double>{1.5, -0.5}), InputError);
  CHECK_THROWS_AS(DiscreteDistribution::real_pmf(2, {pt(0)}, std::vector<double>{1.0}), InputError);

  const DiscreteDistribution g(1, {pt(0), pt(1)}, QVector{{0.5, 1}, {0.5, 0, 2}});
  CHECK(g.mode() == MassMode::General);
  CHECK(g.total(1) == 1.0);
  CHECK(g.total(2) == 2.0);

  const std::vector<QVector> samples{pt(1), pt(2), pt(1), pt(3)};
  const auto e = DiscreteDistribution::empirical(samples);
  CHECK(e.size() == 3);
  CHECK(e.mass()[0].w == 0.5);
}

TEST_CASE("discretization layout") {
  const auto pr = reals({0, 1}, {0.5, 0.5});
  const auto pg = reals({2, 3}, {0.25, 0.75});
  const auto q = build_discretization(pr, pg, euclidean_cost(pr, pg));
  MatrixXd expect(4, 4);
  expect << 1, 1, 0, 0,
            0, 0, 1, 1,
            1, 0, 1, 0,
            0, 1, 0, 1;
  CHECK(q.upsilon == expect);
  CHECK(q.C(1) == 3.0);  // c(x1, y2)
  CHECK(q.C(2) == 1.0);  // c(x2, y1)
  CHECK(q.b[3].w == 0.75);

  const auto one = build_discretization(reals({0}, {1}), reals({5}, {1}), CostMatrix{MatrixXd::Ones(1, 1)});
  CHECK(one.upsilon.rows() == 2);
  CHECK(one.upsilon.cols() == 1);
  CHECK(one.upsilon.sum() == 2.0);

  QVector flat(6);
  for (std::size_t k = 0; k < 6; ++k) flat[k].w = static_cast<double>(k);
  const auto m = unflatten_plan(flat, 2, 3);
  CHECK(m(1, 0).w == 3.0);
}

TEST_CASE("mass imbalance names the component") {
  const DiscreteDistribution a(1, {pt(0)}, QVector{{1, 0.5}});
  const DiscreteDistribution b(1, {pt(1)}, QVector{{1, 0.25}});
  try {
    qwd_primal(a, b);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(e.component() == 1);
  }
}

TEST_CASE("primal examples") {
  const auto p = reals({0, 4}, {0.5, 0.5});
  CHECK(qwd_primal(p, p).value == doctest::Approx(0.0).epsilon(1e-12));

  const auto a = DiscreteDistribution::real_pmf(1, {pt(0)}, std::vector<double>{1.0});
  const auto b = DiscreteDistribution::real_pmf(1, {pt(1, 1, 1, 1)}, std::vector<double>{1.0});
  CHECK(qwd_primal(a, b).value == doctest::Approx(2.0));

  const auto pg = reals({1, 3}, {0.5, 0.5});
  const auto r = qwd_primal(p, pg);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.plan.gamma(0, 0).w == doctest::Approx(0.5));
  CHECK(r.plan.gamma(1, 1).w == doctest::Approx(0.5));
  CHECK(r.mode == MassMode::RealPmf);
}

TEST_CASE("dual examples") {
  const auto p = reals({0, 4}, {0.5, 0.5});
  const auto pg = reals({1, 3}, {0.5, 0.5});
  const auto cost = euclidean_cost(p, pg);
  const auto d = qwd_dual(p, pg, cost);
  CHECK(d.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dual_violation(d.potentials, cost) <= 1e-9);

  const auto same = qwd_dual(p, p);
  CHECK(std::abs(same.value) <= 1e-12);

  const auto rp = reduce_potentials(p, pg, d.potentials);
  CHECK(reduced_value(p, pg, rp) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t a = 0; a < rp.points.size(); ++a)
    for (std::size_t b = 0; b < rp.points.size(); ++b)
      CHECK(std::abs(rp.phi(a) - rp.phi(b)) <= qdist(rp.points[a], rp.points[b]) + 1e-9);
}

TEST_CASE("general mode dual is a lower bound") {
  // Quaternion masses: the i-component moves differently from the real one.
  const DiscreteDistribution a(1, {pt(0), pt(2)}, QVector{{1, 0}, {0, 1}});
  const DiscreteDistribution b(1, {pt(1), pt(3)}, QVector{{0, 1}, {1, 0}});
  const auto primal = qwd_primal(a, b);
  const auto dual = qwd_dual(a, b);
  CHECK(primal.mode == MassMode::General);
  CHECK(dual.value <= primal.value + 1e-8);
  CHECK(dual_violation(dual.potentials, euclidean_cost(a, b)) <= 1e-9);
}

TEST_CASE("random real instances: primal, dual and grid oracle agree") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const int nr = 1 + static_cast<int>(rng() % 3);
    const int nc = 1 + static_cast<int>(rng() % 3);
    std::vector<int> ru(nr, 1), cu(nc, 1);
    for (int k = nr; k < 8; ++k) ++ru[rng() % nr];
    for (int k = nc; k < 8; ++k) ++cu[rng() % nc];
    std::vector<QVector> xs(nr), ys(nc);
    std::vector<double> ps(nr), qs(nc);
    for (int i = 0; i < nr; ++i) {
      xs[i] = {{g(rng), g(rng), g(rng), g(rng)}};
      ps[i] = ru[i] / 8.0;
    }
    for (int j = 0; j < nc; ++j) {
      ys[j] = {{g(rng), g(rng), g(rng), g(rng)}};
      qs[j] = cu[j] / 8.0;
    }
    const auto pr = DiscreteDistribution::real_pmf(1, xs, ps);
    const auto pg = DiscreteDistribution::real_pmf(1, ys, qs);
    const auto cost = euclidean_cost(pr, pg);
    const double lp = qwd_primal(pr, pg, cost).value;
    const double grid = oracle::grid_transport_min(cost.values, ru, cu, 1.0 / 8.0);
    CHECK(std::abs(lp - grid) <= 1e-7);
    const auto d = qwd_dual(pr, pg, cost);
    CHECK(std::abs(lp - d.value) <= 1e-7);
    CHECK(dual_violation(d.potentials, cost) <= 1e-9);
  }
}

TEST_CASE("one-dimensional instances match the CDF formula") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0), m(0.1, 1.0);
  for (int t = 0; t < 50; ++t) {
    const int nr = 1 + static_cast<int>(rng() % 5), nc = 1 + static_cast<int>(rng() % 5);
    std::vector<double> xs(nr), ys(nc), ps(nr), qs(nc);
    double sp = 0, sq = 0;
    for (int i = 0; i < nr; ++i) sp += (ps[i] = m(rng)), xs[i] = u(rng);
    for (int j = 0; j < nc; ++j) sq += (qs[j] = m(rng)), ys[j] = u(rng);
    for (auto& p : ps) p /= sp;
    for (auto& q : qs) q /= sq;
    const double w = qwd_primal(reals(xs, ps), reals(ys, qs)).value;
    CHECK(w == doctest::Approx(oracle::wasserstein_1d(xs, ps, ys, qs)).epsilon(1e-9));
  }
}

TEST_CASE("metric axioms") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  auto draw = [&]() {
    const int n = 1 + static_cast<int>(rng() % 4);
    std::vector<QVector> xs(n);
    std::vector<double> ps(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = {{g(rng), g(rng), g(rng), g(rng)}, {g(rng), 0, 0, 0}};
      ps[i] = 0.1 + std::abs(g(rng));
    }
    return DiscreteDistribution::real_pmf(2, xs, ps, true);
  };
  for (int t = 0; t < 30; ++t) {
    const auto a = draw(), b = draw(), c = draw();
    const double ab = qwd_primal(a, b).value, ba = qwd_primal(b, a).value;
    CHECK(std::abs(ab - ba) <= 1e-8);
    CHECK(qwd_primal(a, a).value <= 1e-8);
    CHECK(qwd_primal(a, c).value <= ab + qwd_primal(b, c).value + 1e-7);
  }
}

TEST_CASE("reduced dual estimate") {
  const std::vector<QVector> r{pt(0)}, g{pt(4)};
  auto first = [](std::span<const Quaternion> v) { return v[0].w; };
  auto constant = [](std::span<const Quaternion>) { return 3.0; };
  CHECK(qwd_reduced_dual_estimate(r, g, constant, 1.0) == 0.0);
  CHECK(qwd_reduced_dual_estimate(r, r, first, 1.0) == 0.0);
  CHECK(qwd_reduced_dual_estimate(r, g, first, 1.0) == -4.0);
  CHECK(qwd_reduced_dual_estimate(r, g, [&](auto v) { return -first(v); }, 1.0) == 4.0);
  CHECK(qwd_reduced_dual_estimate(r, g, first, 2.0) == -2.0);
  CHECK_THROWS_AS(qwd_reduced_dual_estimate({}, g, first, 1.0), InputError);
  CHECK_THROWS_AS(qwd_reduced_dual_estimate(r, g, first, 0.0), InputError);

  // A 1-Lipschitz score never beats the exact distance.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<QVector> sr(12), sg(12);
  for (auto& s : sr) s = {{n(rng), n(rng), n(rng), n(rng)}};
  for (auto& s : sg) s = {{n(rng) + 1.0, n(rng), n(rng), n(rng)}};
  const double w = qwd_primal(DiscreteDistribution::empirical(sr), DiscreteDistribution::empirical(sg)).value;
  for (int t = 0; t < 20; ++t) {
    const QVector dir{{n(rng), n(rng), n(rng), n(rng)}};
    const double len = qnorm(dir);
    auto f = [&](std::span<const Quaternion> v) { return qdot_real(v, dir) / len; };
    CHECK(qwd_reduced_dual_estimate(sr, sg, f, 1.0) <= w + 1e-6);
  }
}

TEST_CASE("divergences") {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-14));
  CHECK(std::isinf(kl_divergence(std::vector<double>{1, 0}, std::vector<double>{0, 1})));
  CHECK(js_divergence(p, p) == 0.0);
  CHECK(js_divergence(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  // m = (3/4, 1/4): KL(p||m) = ln(4/3), KL(q||m) = ln(4/3) / 2
  CHECK(js_divergence(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.75 * std::log(4.0 / 3.0)).epsilon(1e-14));
  CHECK(js_divergence(p, q) == doctest::Approx(js_divergence(q, p)).epsilon(1e-15));

  const auto a = reals({0, 1}, {0.5, 0.5});
  const auto b = reals({2, 3}, {0.5, 0.5});
  CHECK(std::abs(js_divergence(a, b) - std::numbers::ln2) <= 1e-12);
  CHECK(std::isinf(kl_divergence(a, b)));
  const auto c = reals({1, 0}, {0.75, 0.25});
  CHECK(kl_divergence(a, c) == doctest::Approx(kl_divergence(p, q)).epsilon(1e-14));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> x(5), y(5);
    double sx = 0, sy = 0;
    for (int k = 0; k < 5; ++k) {
      sx += (x[k] = u(rng) < 0.3 ? 0.0 : u(rng));
      sy += (y[k] = u(rng) < 0.3 ? 0.0 : u(rng));
    }
    if (sx == 0 || sy == 0) continue;
    for (auto& v : x) v /= sx;
    for (auto& v : y) v /= sy;
    const double js = js_divergence(x, y);
    CHECK(js >= 0.0);
    CHECK(js <= std::numbers::ln2 + 1e-12);
  }
}
