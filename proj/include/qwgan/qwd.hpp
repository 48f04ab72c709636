#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qwgan/qlp.hpp"
#include "qwgan/quaternion.hpp"

namespace qwgan::qwd {

/// RealPmf: every mass is a real number in [0,1] and the masses sum to 1.
/// General: masses are nonnegative quaternions with arbitrary component totals.
enum class MassMode { RealPmf, General };

const char* to_string(MassMode m);

inline constexpr double kMassTol = 1e-9;

/// Finite-support distribution over quaternion vectors of length dim.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  /// Zero-mass points are dropped. The mode is RealPmf when every mass is
  /// purely real, General otherwise. With renormalize, real masses are scaled
  /// to sum to 1; without it a total off by more than 1e-9 is an InputError.
  DiscreteDistribution(std::size_t dim, std::vector<QVector> points, QVector mass, bool renormalize = false);
  static DiscreteDistribution real_pmf(std::size_t dim, std::vector<QVector> points, std::span<const double> mass,
                                       bool renormalize = false);
  /// Uniform mass 1/N per sample; identical samples are merged.
  static DiscreteDistribution empirical(std::span<const QVector> samples);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<QVector>& points() const { return points_; }
  const QVector& mass() const { return mass_; }
  MassMode mode() const { return mode_; }
  /// Sum of component l over all masses.
  double total(std::size_t l) const;
  std::vector<double> real_mass() const;

 private:
  std::size_t dim_ = 0;
  std::vector<QVector> points_;
  QVector mass_;
  MassMode mode_ = MassMode::RealPmf;
};

struct CostMatrix {
  Eigen::MatrixXd values;  // |S_r| x |S_g|, entries >= 0
};

using CostFunction = std::function<double(std::span<const Quaternion>, std::span<const Quaternion>)>;

/// values(i, j) = qdist(x_i, y_j)
CostMatrix euclidean_cost(const DiscreteDistribution& pr, const DiscreteDistribution& pg);
/// values(i, j) = fn(x_i, y_j); throws InputError on a negative or non-finite entry.
CostMatrix make_cost(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const CostFunction& fn);
/// Checks shape and entries of a caller-supplied matrix.
void validate_cost(const CostMatrix& cost, const DiscreteDistribution& pr, const DiscreteDistribution& pg);

/// Plan cell (i, j) is column i * |S_g| + j. Rows [0, |S_r|) constrain the
/// row sums and rows [|S_r|, |S_r| + |S_g|) the column sums. Throws
/// InfeasibleError naming the component when the totals differ.
qlp::QuaternionLP build_discretization(const DiscreteDistribution& pr, const DiscreteDistribution& pg,
                                       const CostMatrix& cost);

/// Inverse of the column layout above.
QMatrix unflatten_plan(const QVector& gamma, std::size_t nr, std::size_t ng);

struct TransportPlan {
  QMatrix gamma;
  double objective = 0.0;
};

struct PrimalResult {
  TransportPlan plan;
  double value = 0.0;
  MassMode mode = MassMode::RealPmf;
};

/// Both distributions must have the same mode for RealPmf; otherwise General.
MassMode pair_mode(const DiscreteDistribution& pr, const DiscreteDistribution& pg);

PrimalResult qwd_primal(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const CostMatrix& cost);
PrimalResult qwd_primal(const DiscreteDistribution& pr, const DiscreteDistribution& pg);

/// f over S_r and g over S_g with f_i + g_j <= c_ij.
struct DualPotentials {
  Eigen::VectorXd f;
  Eigen::VectorXd g;
};

struct DualResult {
  DualPotentials potentials;
  double value = 0.0;
  MassMode mode = MassMode::RealPmf;
};

/// RealPmf: simplex multipliers, equal to the primal value. General: vertex
/// enumeration of the quaternion dual (see qlp::solve_qlp_dual).
DualResult qwd_dual(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const CostMatrix& cost);
DualResult qwd_dual(const DiscreteDistribution& pr, const DiscreteDistribution& pg);

/// Largest violation of f_i + g_j <= c_ij (0 when feasible).
double dual_violation(const DualPotentials& p, const CostMatrix& cost);

/// Single potential on S_r followed by S_g, obtained from g by the c-transform
/// phi(z) = min_j [qdist(z, y_j) - g_j]. It is 1-Lipschitz for qdist and
/// sum_r p phi - sum_g q phi equals the dual value of (f, g) or exceeds it.
struct ReducedPotential {
  std::vector<QVector> points;
  Eigen::VectorXd phi;
};

ReducedPotential reduce_potentials(const DiscreteDistribution& pr, const DiscreteDistribution& pg,
                                   const DualPotentials& p);
/// sum over S_r of p phi minus sum over S_g of q phi (real masses).
double reduced_value(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const ReducedPotential& rp);

using ScoreFunction = std::function<double(std::span<const Quaternion>)>;

/// (mean f over samples_r - mean f over samples_g) / lip_bound.
double qwd_reduced_dual_estimate(std::span<const QVector> samples_r, std::span<const QVector> samples_g,
                                 const ScoreFunction& f, double lip_bound);

/// sum p log(p / q), natural log; +infinity when some p > 0 meets q = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double js_divergence(std::span<const double> p, std::span<const double> q);

/// Real-pmf distributions aligned on the union of their supports.
double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);
double js_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Masses of p and q on the union of both supports (points of p first).
struct AlignedPmfs {
  std::vector<QVector> support;
  std::vector<double> p;
  std::vector<double> q;
};
AlignedPmfs align(const DiscreteDistribution& p, const DiscreteDistribution& q);

}  // namespace qwgan::qwd
