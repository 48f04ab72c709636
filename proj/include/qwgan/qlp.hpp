#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qwgan/quaternion.hpp"

namespace qwgan::qlp {

/// min |C^T Gamma|  s.t.  Upsilon Gamma = b, Gamma >= 0 (componentwise),
/// with real Upsilon (n x m), quaternion b (n), nonnegative real C (m).
struct QuaternionLP {
  Eigen::MatrixXd upsilon;
  QVector b;
  Eigen::VectorXd C;

  QuaternionLP() = default;
  QuaternionLP(Eigen::MatrixXd upsilon_, QVector b_, Eigen::VectorXd C_);

  Eigen::Index rows() const { return upsilon.rows(); }
  Eigen::Index cols() const { return upsilon.cols(); }
  /// Throws InputError on shape mismatch, non-finite data or a negative cost.
  void validate() const;
  /// Real right-hand side of component l.
  Eigen::VectorXd b_component(std::size_t l) const;
  bool real_b() const;
};

struct QLPSolution {
  QVector gamma;
  /// |C^T Gamma|
  double objective = 0.0;
  /// C^T Gamma^(l) for l = 0..3
  std::array<double, 4> per_component{};
};

/// Solves the four component LPs independently. Because the constraints
/// separate over components and every C^T Gamma^(l) >= 0, minimizing each
/// component minimizes the modulus. Throws InfeasibleError naming the
/// component when one has no nonnegative solution.
QLPSolution solve_qlp(const QuaternionLP& qlp);

/// Quaternion b^T y for a real vector y.
Quaternion bty(const QuaternionLP& qlp, const Eigen::VectorXd& y);

struct DualFeasibility {
  bool feasible = true;
  std::vector<Eigen::Index> violated_rows;  // rows j with (Upsilon^T y)_j > C_j
  bool bty_nonneg = true;
};

/// Upsilon^T y <= C (within tol) and b^T y >= 0 componentwise (within tol).
DualFeasibility check_dual_feasible(const QuaternionLP& qlp, const Eigen::VectorXd& y, double tol = 1e-9);

struct WeakDualityReport {
  Quaternion bty;
  double dual_value = 0.0;    // |b^T y|
  double primal_value = 0.0;  // min |C^T Gamma|
  bool holds = false;         // dual_value <= primal_value + 1e-8
};

/// Throws InputError listing violated rows when y is not dual feasible.
WeakDualityReport weak_duality_check(const QuaternionLP& qlp, const Eigen::VectorXd& y);

struct DualSolution {
  Eigen::VectorXd y;
  double value = 0.0;
  bool exact_real = false;        // solved through the real LP dual
  std::size_t vertices_examined = 0;
};

/// max |b^T y| s.t. Upsilon^T y <= C, b^T y >= 0.
/// Purely real b: taken from the simplex dual. Otherwise every vertex of the
/// dual polytope (restricted to range(Upsilon), where the objective lives) is
/// evaluated; the modulus is convex so the maximum sits at a vertex.
/// Throws InfeasibleError when the primal is infeasible (the dual is then
/// unbounded or empty) and GuardError when enumeration would be too large.
DualSolution solve_qlp_dual(const QuaternionLP& qlp);

struct GapRecord {
  QuaternionLP lp;
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;  // primal - dual
};

struct GapSearchBounds {
  int min_rows = 1;
  int max_rows = 3;
  int min_cols = 1;
  int max_cols = 5;
  bool real_b = false;
};

struct GapSearchReport {
  std::vector<GapRecord> records;  // every evaluated instance, in draw order
  std::vector<GapRecord> gaps;     // gap > 1e-6, largest first
  int skipped_infeasible = 0;
  int skipped_guard = 0;
  double max_gap = 0.0;
  double min_gap = 0.0;  // most negative primal - dual seen (weak duality check)
};

inline constexpr double kGapThreshold = 1e-6;

/// Random small instances with 0/1 constraint matrices, half-integer costs and
/// small integer right-hand sides; reports primal/dual pairs and the gaps.
GapSearchReport dual_gap_search(std::uint64_t seed, int trials, const GapSearchBounds& bounds = {});

struct FarkasCertificate {
  enum class Kind { Primal, Dual };
  Kind kind = Kind::Primal;
  QVector gamma;       // Primal: Gamma >= 0, Upsilon Gamma = b
  Eigen::VectorXd y;   // Dual: Upsilon^T y <= 0, b^T y > 0
  int component = -1;  // Dual: infeasible component whose ray was used, -1 for joint search
};

const char* to_string(FarkasCertificate::Kind k);

/// Raised when the system is infeasible yet no real y satisfies
/// Upsilon^T y <= 0 with b^T y > 0 in the componentwise quaternion order.
class NoAlternativeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Primal certificate when every component system is feasible, otherwise a
/// dual certificate: first from the phase-1 ray of an infeasible component,
/// then from a joint LP over all components.
FarkasCertificate farkas(const Eigen::MatrixXd& upsilon, const QVector& b);

struct CertificateCheck {
  bool valid = false;
  double residual = 0.0;
  std::string reason;
};

CertificateCheck validate_certificate(const Eigen::MatrixXd& upsilon, const QVector& b,
                                      const FarkasCertificate& cert);

/// [0,s0]^n + [0,s1]^n i + [0,s2]^n j + [0,s3]^n k
struct QuaternionBox {
  std::array<double, 4> s{};
  std::size_t n = 0;

  QuaternionBox() = default;
  QuaternionBox(std::array<double, 4> s_, std::size_t n_);

  bool contains(std::span<const Quaternion> y, double tol = 0.0) const;
};

struct Projection {
  QVector xhat;
  double distance = 0.0;
};

/// Componentwise clamp into the box: the unique nearest point.
Projection project_box(const QuaternionBox& box, std::span<const Quaternion> y);

struct SeparatingHyperplane {
  Eigen::VectorXd p;
  Quaternion alpha;
  std::size_t index = 0;  // coordinate selected by p
};

/// Raised when no coordinate of y dominates the box in every component, so no
/// real p separates y under the componentwise order.
class SeparationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// p = indicator of one violating coordinate, alpha = midpoint in violated
/// components. Throws InputError when y lies in the box or has mixed signs.
SeparatingHyperplane separate_box(const QuaternionBox& box, std::span<const Quaternion> y);

/// sup over the box of p^T x <= alpha <= p^T y componentwise, strict in at least one component.
bool validate_separation(const QuaternionBox& box, std::span<const Quaternion> y,
                         const SeparatingHyperplane& h, double tol = 1e-12);

QuaternionBox intersect(const QuaternionBox& a, const QuaternionBox& b);
QuaternionBox minkowski_sum(const QuaternionBox& a, const QuaternionBox& b);

}  // namespace qwgan::qlp
