#include "qwgan/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qwgan/errors.hpp"

namespace qwgan::lp {

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
  }
  return "unknown";
}

RealLP::RealLP(Eigen::MatrixXd A, Eigen::VectorXd b, Eigen::VectorXd c, Sense sense)
    : A_(std::move(A)), b_(std::move(b)), c_(std::move(c)), sense_(sense) {
  if (A_.rows() != b_.size() || A_.cols() != c_.size())
    throw InputError("RealLP: dimension mismatch (A is " + std::to_string(A_.rows()) + "x" +
                     std::to_string(A_.cols()) + ", b has " + std::to_string(b_.size()) +
                     ", c has " + std::to_string(c_.size()) + ")");
  if (!A_.allFinite() || !b_.allFinite() || !c_.allFinite())
    throw InputError("RealLP: non-finite input");
}

namespace {

using Eigen::Index;

// Dense tableau: rows [0, n) are constraints, row n holds reduced costs and
// -objective in the last column. Columns [0, m) structural, [m, m+n)
// artificial, m+n is the right-hand side.
class Tableau {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const SimplexOptions& opts)
      : n_(A.rows()), m_(A.cols()), opts_(opts), T_(Matrix::Zero(n_ + 1, m_ + n_ + 1)),
        basis_(static_cast<std::size_t>(n_)) {
    T_.topLeftCorner(n_, m_) = A;
    T_.block(0, m_, n_, n_).setIdentity();
    T_.col(rhs()).head(n_) = b;
    for (Index i = 0; i < n_; ++i) basis_[static_cast<std::size_t>(i)] = m_ + i;
  }

  Index rhs() const { return m_ + n_; }
  Matrix& T() { return T_; }
  const Matrix& T() const { return T_; }
  std::vector<Index>& basis() { return basis_; }
  int iterations() const { return iterations_; }
  bool used_bland() const { return used_bland_; }

  void set_phase1_objective() {
    T_.row(n_).setZero();
    for (Index j = 0; j < m_; ++j) T_(n_, j) = -T_.col(j).head(n_).sum();
    T_(n_, rhs()) = -T_.col(rhs()).head(n_).sum();
  }

  void set_phase2_objective(const Eigen::VectorXd& cost) {
    T_.row(n_).setZero();
    T_.row(n_).head(m_) = cost.transpose();
    for (Index r = 0; r < n_; ++r) {
      const Index j = basis_[static_cast<std::size_t>(r)];
      if (j < m_ && cost(j) != 0.0) T_.row(n_) -= cost(j) * T_.row(r);
    }
  }

  // Returns false when an entering column has no positive pivot (unbounded).
  bool run(bool allow_artificial) {
    bool bland = false;
    int degenerate_run = 0;
    const Index last_col = allow_artificial ? m_ + n_ : m_;
    while (true) {
      Index q = -1;
      double best = -opts_.optimality_tol;
      for (Index j = 0; j < last_col; ++j) {
        const double d = T_(n_, j);
        if (d < best) {
          q = j;
          if (bland) break;
          best = d;
        }
      }
      if (q < 0) return true;

      Index r = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n_; ++i) {
        const double a = T_(i, q);
        if (a <= opts_.pivot_tol) continue;
        const double ratio = std::max(0.0, T_(i, rhs())) / a;
        if (r < 0 || ratio < best_ratio - 1e-12 * (1.0 + best_ratio)) {
          r = i;
          best_ratio = ratio;
        } else if (ratio <= best_ratio + 1e-12 * (1.0 + best_ratio)) {
          const auto bi = basis_[static_cast<std::size_t>(i)];
          const auto br = basis_[static_cast<std::size_t>(r)];
          const bool take = bland ? bi < br : (a > T_(r, q) || (a == T_(r, q) && bi < br));
          if (take) {
            r = i;
            best_ratio = std::min(best_ratio, ratio);
          }
        }
      }
      if (r < 0) return false;

      if (best_ratio <= opts_.feasibility_tol) {
        if (++degenerate_run > opts_.degenerate_limit && !bland) {
          bland = true;
          used_bland_ = true;
        }
      } else {
        degenerate_run = 0;
      }
      pivot(r, q);
      if (++iterations_ > opts_.max_iterations)
        throw NumericError("simplex: iteration limit exceeded");
    }
  }

  void pivot(Index r, Index q) {
    const double piv = T_(r, q);
    T_.row(r) /= piv;
    T_(r, q) = 1.0;
    for (Index i = 0; i <= n_; ++i) {
      if (i == r) continue;
      const double f = T_(i, q);
      if (f == 0.0) continue;
      T_.row(i) -= f * T_.row(r);
      T_(i, q) = 0.0;
    }
    basis_[static_cast<std::size_t>(r)] = q;
  }

  // Pivot zero-valued artificials out of the basis where a structural column
  // allows it; rows where none does are linearly dependent.
  void drive_out_artificials() {
    for (Index r = 0; r < n_; ++r) {
      if (basis_[static_cast<std::size_t>(r)] < m_) continue;
      Index q = -1;
      double best = 1e-9;
      for (Index j = 0; j < m_; ++j) {
        if (std::abs(T_(r, j)) > best) {
          best = std::abs(T_(r, j));
          q = j;
        }
      }
      if (q >= 0) {
        T_(r, rhs()) = 0.0;
        pivot(r, q);
      }
    }
  }

 private:
  Index n_;
  Index m_;
  SimplexOptions opts_;
  Matrix T_;
  std::vector<Index> basis_;
  int iterations_ = 0;
  bool used_bland_ = false;
};

}  // namespace

Solution solve_lp(const RealLP& lp, const SimplexOptions& opts) {
  const Index n = lp.rows();
  const Index m = lp.cols();
  Eigen::VectorXd sign = Eigen::VectorXd::Ones(n);
  for (Index i = 0; i < n; ++i)
    if (lp.b()(i) < 0.0) sign(i) = -1.0;
  const Eigen::MatrixXd A = sign.asDiagonal() * lp.A();
  const Eigen::VectorXd b = sign.asDiagonal() * lp.b();
  const Eigen::VectorXd cost = lp.sense() == Sense::Maximize ? Eigen::VectorXd(-lp.c()) : lp.c();

  Solution sol;
  Tableau tab(A, b, opts);
  auto& T = tab.T();

  tab.set_phase1_objective();
  tab.run(true);
  const double infeasibility = -T(n, tab.rhs());
  const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  if (infeasibility > opts.feasibility_tol * scale) {
    Eigen::VectorXd u(n);
    for (Index i = 0; i < n; ++i) u(i) = 1.0 - T(n, m + i);
    sol.status = Status::Infeasible;
    sol.farkas_y = sign.asDiagonal() * u;
    sol.iterations = tab.iterations();
    sol.used_bland = tab.used_bland();
    return sol;
  }

  tab.drive_out_artificials();
  tab.set_phase2_objective(cost);
  const bool bounded = tab.run(false);
  sol.iterations = tab.iterations();
  sol.used_bland = tab.used_bland();
  sol.basis = tab.basis();
  if (!bounded) {
    sol.status = Status::Unbounded;
    return sol;
  }

  sol.status = Status::Optimal;
  Eigen::VectorXd xB(n);
  Eigen::VectorXd yprime(n);
  for (Index r = 0; r < n; ++r) xB(r) = T(r, tab.rhs());
  for (Index i = 0; i < n; ++i) yprime(i) = -T(n, m + i);

  // Re-solve the final basis against the original data; the tableau carries
  // accumulated pivot round-off.
  if (n > 0) {
    Eigen::MatrixXd B(n, n);
    Eigen::VectorXd cB(n);
    for (Index r = 0; r < n; ++r) {
      const Index j = sol.basis[static_cast<std::size_t>(r)];
      if (j < m) {
        B.col(r) = A.col(j);
        cB(r) = cost(j);
      } else {
        B.col(r) = Eigen::VectorXd::Unit(n, j - m);
        cB(r) = 0.0;
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (lu.isInvertible()) {
      const Eigen::VectorXd xr = lu.solve(b);
      const Eigen::VectorXd yr = Eigen::FullPivLU<Eigen::MatrixXd>(B.transpose()).solve(cB);
      if (xr.allFinite() && yr.allFinite() && (xr.size() == 0 || xr.minCoeff() >= -opts.feasibility_tol)) {
        xB = xr;
        yprime = yr;
      }
    }
  }

  sol.x = Eigen::VectorXd::Zero(m);
  for (Index r = 0; r < n; ++r) {
    const Index j = sol.basis[static_cast<std::size_t>(r)];
    if (j < m) sol.x(j) = xB(r);
  }
  sol.objective = lp.c().dot(sol.x);
  Eigen::VectorXd y = sign.asDiagonal() * yprime;
  if (lp.sense() == Sense::Maximize) y = -y;
  sol.dual_y = y;
  return sol;
}

Residuals residuals(const RealLP& lp, const Solution& sol) {
  Residuals r;
  if (sol.status != Status::Optimal) return r;
  r.primal = (lp.A() * sol.x - lp.b()).lpNorm<Eigen::Infinity>();
  r.nonneg = sol.x.size() ? std::max(0.0, -sol.x.minCoeff()) : 0.0;
  Eigen::VectorXd d = lp.c() - lp.A().transpose() * sol.dual_y;
  if (lp.sense() == Sense::Maximize) d = -d;
  for (Index j = 0; j < d.size(); ++j) {
    r.dual = std::max(r.dual, -d(j));
    r.complementary = std::max(r.complementary, std::abs(sol.x(j) * d(j)));
  }
  r.gap = std::abs(lp.c().dot(sol.x) - lp.b().dot(sol.dual_y));
  return r;
}

std::vector<Eigen::VectorXd> enumerate_vertices(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Index k = A.rows();
  const Index d = A.cols();
  if (b.size() != k) throw InputError("enumerate_vertices: dimension mismatch");
  if (d > kMaxVertexVars || k > kMaxVertexConstraints)
    throw GuardError("enumerate_vertices: size guard exceeded (" + std::to_string(d) +
                     " variables, " + std::to_string(k) + " constraints)");
  for (Index i = 0; i < k; ++i)
    if (A.row(i).isZero(0.0)) throw InputError("enumerate_vertices: all-zero constraint row " + std::to_string(i));

  std::vector<Eigen::VectorXd> vertices;
  const auto feasible = [&](const Eigen::VectorXd& y) {
    const Eigen::VectorXd slack = b - A * y;
    return slack.size() == 0 || slack.minCoeff() >= -1e-9 * std::max(1.0, y.lpNorm<Eigen::Infinity>());
  };
  if (d == 0) {
    Eigen::VectorXd empty(0);
    if (feasible(empty)) vertices.push_back(empty);
    return vertices;
  }
  if (k < d) return vertices;

  std::vector<Index> pick(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) pick[static_cast<std::size_t>(i)] = i;
  Eigen::MatrixXd M(d, d);
  Eigen::VectorXd rhs(d);
  while (true) {
    for (Index i = 0; i < d; ++i) {
      M.row(i) = A.row(pick[static_cast<std::size_t>(i)]);
      rhs(i) = b(pick[static_cast<std::size_t>(i)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    lu.setThreshold(1e-10);
    if (lu.isInvertible()) {
      const Eigen::VectorXd y = lu.solve(rhs);
      if (y.allFinite() && feasible(y)) {
        const bool seen = std::any_of(vertices.begin(), vertices.end(), [&](const Eigen::VectorXd& v) {
          return (v - y).lpNorm<Eigen::Infinity>() <= 1e-9;
        });
        if (!seen) vertices.push_back(y);
      }
    }
    // next combination in lexicographic order
    Index i = d - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == k - d + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < d; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return vertices;
}

}  // namespace qwgan::lp
