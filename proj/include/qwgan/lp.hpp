#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace qwgan::lp {

enum class Sense { Minimize, Maximize };
enum class Status { Optimal, Infeasible, Unbounded };

const char* to_string(Status s);

/// Standard-form real LP: optimize c^T x subject to A x = b, x >= 0.
/// Construction validates shapes and finiteness; the value is immutable.
class RealLP {
 public:
  RealLP(Eigen::MatrixXd A, Eigen::VectorXd b, Eigen::VectorXd c, Sense sense = Sense::Minimize);

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }
  const Eigen::VectorXd& c() const { return c_; }
  Sense sense() const { return sense_; }
  Eigen::Index rows() const { return A_.rows(); }
  Eigen::Index cols() const { return A_.cols(); }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Eigen::VectorXd c_;
  Sense sense_;
};

struct Solution {
  Status status = Status::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  /// Equality-constraint multipliers; c^T x == b^T y at optimum.
  Eigen::VectorXd dual_y;
  /// Column index per constraint row; indices >= cols() denote artificials
  /// left in the basis on redundant rows.
  std::vector<Eigen::Index> basis;
  /// Set when infeasible: A^T y <= 0 and b^T y > 0.
  Eigen::VectorXd farkas_y;
  int iterations = 0;
  bool used_bland = false;
};

struct SimplexOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-11;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  int degenerate_limit = 50;
  int max_iterations = 200000;
};

/// Two-phase primal simplex on a dense tableau.
Solution solve_lp(const RealLP& lp, const SimplexOptions& opts = {});

struct Residuals {
  double primal = 0.0;        // ||A x - b||_inf
  double nonneg = 0.0;        // max(0, -min x)
  double dual = 0.0;          // max violation of the reduced-cost sign condition
  double complementary = 0.0; // max |x_j * reduced_cost_j|
  double gap = 0.0;           // |c^T x - b^T y|
};

Residuals residuals(const RealLP& lp, const Solution& sol);

/// Every basic feasible point of {y : A y <= b}, deduplicated within 1e-9,
/// in lexicographic order of the defining constraint subsets.
/// Guard: at most 12 variables and 24 constraints.
std::vector<Eigen::VectorXd> enumerate_vertices(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

inline constexpr Eigen::Index kMaxVertexVars = 12;
inline constexpr Eigen::Index kMaxVertexConstraints = 24;

}  // namespace qwgan::lp
