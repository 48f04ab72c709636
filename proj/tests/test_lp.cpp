#include "doctest.h"

#include <algorithm>
#include <limits>
#include <random>

#include "qwgan/errors.hpp"
#include "qwgan/lp.hpp"

using namespace qwgan;
using namespace qwgan::lp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Minimum of c^T x over basic feasible solutions, found by trying every
// column subset of size rows(A).
double bfs_minimum(const MatrixXd& A, const VectorXd& b, const VectorXd& c) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(A.cols());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) pick[i] = i;
  while (true) {
    MatrixXd B(n, n);
    VectorXd cb(n);
    for (int i = 0; i < n; ++i) {
      B.col(i) = A.col(pick[i]);
      cb(i) = c(pick[i]);
    }
    Eigen::FullPivLU<MatrixXd> lu(B);
    if (lu.isInvertible()) {
      const VectorXd xb = lu.solve(b);
      if (xb.minCoeff() >= -1e-10) best = std::min(best, cb.dot(xb));
    }
    int i = n - 1;
    while (i >= 0 && pick[i] == m - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int k = i + 1; k < n; ++k) pick[k] = pick[k - 1] + 1;
  }
  return best;
}

void check_optimal_residuals(const RealLP& lp, const Solution& s) {
  REQUIRE(s.status == Status::Optimal);
  const auto r = residuals(lp, s);
  CHECK(r.primal <= 1e-9);
  CHECK(r.nonneg <= 1e-9);
  CHECK(r.complementary <= 1e-8);
  CHECK(r.gap <= 1e-8);
}

}  // namespace

TEST_CASE("small examples") {
  {
    RealLP lp(MatrixXd::Ones(1, 1), VectorXd::Ones(1), VectorXd::Ones(1));
    const auto s = solve_lp(lp);
    CHECK(s.objective == doctest::Approx(1.0));
    check_optimal_residuals(lp, s);
  }
  {
    RealLP lp(MatrixXd::Ones(1, 2), VectorXd::Constant(1, 2.0), VectorXd::Ones(2));
    const auto s = solve_lp(lp);
    CHECK(s.objective == doctest::Approx(2.0));
    CHECK(s.dual_y(0) == doctest::Approx(1.0));
    check_optimal_residuals(lp, s);
  }
}

TEST_CASE("infeasible and unbounded") {
  // x1 + x2 = -1 with x >= 0
  RealLP bad(MatrixXd::Ones(1, 2), VectorXd::Constant(1, -1.0), VectorXd::Ones(2));
  const auto s = solve_lp(bad);
  CHECK(s.status == Status::Infeasible);
  REQUIRE(s.farkas_y.size() == 1);
  CHECK((bad.A().transpose() * s.farkas_y).maxCoeff() <= 1e-12);
  CHECK(bad.b().dot(s.farkas_y) > 0.0);

  // min -x1 s.t. x1 - x2 = 0
  MatrixXd A(1, 2);
  A << 1, -1;
  VectorXd c(2);
  c << -1, 0;
  CHECK(solve_lp(RealLP(A, VectorXd::Zero(1), c)).status == Status::Unbounded);
}

TEST_CASE("maximize") {
  MatrixXd A(1, 2);
  A << 1, 1;
  VectorXd c(2);
  c << 1, 3;
  RealLP lp(A, VectorXd::Constant(1, 4.0), c, Sense::Maximize);
  const auto s = solve_lp(lp);
  CHECK(s.objective == doctest::Approx(12.0));
  CHECK(s.dual_y(0) == doctest::Approx(3.0));
  check_optimal_residuals(lp, s);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(RealLP(MatrixXd::Ones(2, 2), VectorXd::Ones(1), VectorXd::Ones(2)), InputError);
  VectorXd b = VectorXd::Ones(1);
  b(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(RealLP(MatrixXd::Ones(1, 2), b, VectorXd::Ones(2)), InputError);
}

TEST_CASE("redundant rows keep duals consistent") {
  // 2x2 transport: the four marginal rows have rank 3.
  MatrixXd A(4, 4);
  A << 1, 1, 0, 0,
       0, 0, 1, 1,
       1, 0, 1, 0,
       0, 1, 0, 1;
  VectorXd b(4);
  b << 0.5, 0.5, 0.5, 0.5;
  VectorXd c(4);
  c << 0, 1, 1, 0;
  RealLP lp(A, b, c);
  const auto s = solve_lp(lp);
  CHECK(s.objective == doctest::Approx(0.0).epsilon(1e-12));
  check_optimal_residuals(lp, s);
}

TEST_CASE("random LPs agree with basic-solution enumeration") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  int solved = 0;
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int m = n + 1 + static_cast<int>(rng() % 4);
    MatrixXd A(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) A(i, j) = g(rng);
    VectorXd x0(m);
    for (int j = 0; j < m; ++j) x0(j) = (rng() % 3 == 0) ? 0.0 : u(rng);
    const VectorXd b = A * x0;
    VectorXd c(m);
    for (int j = 0; j < m; ++j) c(j) = u(rng);
    RealLP lp(A, b, c);
    const auto s = solve_lp(lp);
    check_optimal_residuals(lp, s);
    CHECK(s.objective == doctest::Approx(bfs_minimum(A, b, c)).epsilon(1e-8));
    ++solved;
  }
  CHECK(solved == 300);
}

TEST_CASE("degenerate transport LPs") {
  // Integer marginals on a 4x4 transport polytope are highly degenerate.
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const int k = 4;
    MatrixXd A = MatrixXd::Zero(2 * k, k * k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        A(i, i * k + j) = 1.0;
        A(k + j, i * k + j) = 1.0;
      }
    VectorXd b = VectorXd::Ones(2 * k);
    VectorXd c(k * k);
    for (int j = 0; j < k * k; ++j) c(j) = static_cast<double>(rng() % 3);
    RealLP lp(A, b, c);
    const auto s = solve_lp(lp);
    check_optimal_residuals(lp, s);
    // assignment oracle: min over all permutations
    std::vector<int> perm{0, 1, 2, 3};
    double best = 1e9;
    do {
      double v = 0.0;
      for (int i = 0; i < k; ++i) v += c(i * k + perm[i]);
      best = std::min(best, v);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(s.objective == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("determinism") {
  MatrixXd A(2, 4);
  A << 1, 2, 0, 1,
       0, 1, 1, 3;
  VectorXd b(2);
  b << 3, 4;
  VectorXd c(4);
  c << 1, 1, 1, 1;
  const auto s1 = solve_lp(RealLP(A, b, c));
  const auto s2 = solve_lp(RealLP(A, b, c));
  CHECK(s1.basis == s2.basis);
  CHECK(s1.x == s2.x);
  CHECK(s1.dual_y == s2.dual_y);
}

TEST_CASE("vertex enumeration") {
  {
    MatrixXd A(4, 2);
    A << 1, 0, 0, 1, -1, 0, 0, -1;
    VectorXd b(4);
    b << 1, 1, 0, 0;
    CHECK(enumerate_vertices(A, b).size() == 4);
  }
  {
    MatrixXd A(3, 2);
    A << 1, 1, -1, 0, 0, -1;
    VectorXd b(3);
    b << 1, 0, 0;
    CHECK(enumerate_vertices(A, b).size() == 3);
  }
  {
    MatrixXd A(5, 2);
    A << 1, 0, 0, 1, 1, 1, -1, 0, 0, -1;
    VectorXd b(5);
    b << 1, 1, 1.5, 0, 0;
    const auto v = enumerate_vertices(A, b);
    CHECK(v.size() == 5);
    auto has = [&](double a, double c) {
      return std::any_of(v.begin(), v.end(), [&](const VectorXd& p) {
        return std::abs(p(0) - a) < 1e-12 && std::abs(p(1) - c) < 1e-12;
      });
    };
    CHECK(has(1.0, 0.5));
    CHECK(has(0.5, 1.0));
    CHECK(has(0.0, 0.0));
  }
  CHECK_THROWS_AS(enumerate_vertices(MatrixXd::Zero(2, 2), VectorXd::Ones(2)), InputError);
  CHECK_THROWS_AS(enumerate_vertices(MatrixXd::Ones(3, 13), VectorXd::Ones(3)), GuardError);
  CHECK_THROWS_AS(enumerate_vertices(MatrixXd::Ones(25, 2), VectorXd::Ones(25)), GuardError);
}

TEST_CASE("simplex matches vertex enumeration on inequality form") {
  // min c^T y s.t. A y <= b written in standard form via slack and split variables.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + static_cast<int>(rng() % 2);
    MatrixXd A(d + 4, d);
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < d; ++j) A(i, j) = u(rng);
    VectorXd b = VectorXd::Ones(d + 4);
    // add a box so the region is bounded
    MatrixXd Ab(A.rows() + 2 * d, d);
    Ab << A, MatrixXd::Identity(d, d), -MatrixXd::Identity(d, d);
    VectorXd bb(Ab.rows());
    bb << b, VectorXd::Constant(2 * d, 3.0);
    VectorXd c(d);
    for (int j = 0; j < d; ++j) c(j) = u(rng);
    double best = 1e300;
    for (const auto& v : enumerate_vertices(Ab, bb)) best = std::min(best, c.dot(v));
    const Eigen::Index r = Ab.rows();
    MatrixXd S(r, 2 * d + r);
    S << Ab, -Ab, MatrixXd::Identity(r, r);
    VectorXd cs = VectorXd::Zero(2 * d + r);
    cs.head(d) = c;
    cs.segment(d, d) = -c;
    const auto s = solve_lp(RealLP(S, bb, cs));
    REQUIRE(s.status == Status::Optimal);
    CHECK(s.objective == doctest::Approx(best).epsilon(1e-8));
  }
}
