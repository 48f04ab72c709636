#include "qwgan/qwd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qwgan/errors.hpp"
#include "qwgan/lp.hpp"

namespace qwgan::qwd {

using Eigen::Index;

namespace {

constexpr double kPointTol = 1e-12;

bool finite(const Quaternion& q) {
  return std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z);
}

// Index of a point within kPointTol of z, or -1.
long find_point(const std::vector<QVector>& pts, const QVector& z) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (qdist(pts[i], z) <= kPointTol) return static_cast<long>(i);
  return -1;
}

}  // namespace

const char* to_string(MassMode m) { return m == MassMode::RealPmf ? "real-pmf" : "general"; }

DiscreteDistribution::DiscreteDistribution(std::size_t dim, std::vector<QVector> points, QVector mass,
                                           bool renormalize)
    : dim_(dim) {
  if (dim == 0) throw InputError("distribution: dim must be positive");
  if (points.size() != mass.size())
    throw InputError("distribution: " + std::to_string(points.size()) + " points but " +
                     std::to_string(mass.size()) + " masses");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim)
      throw InputError("distribution: point " + std::to_string(i) + " has length " +
                       std::to_string(points[i].size()) + ", expected " + std::to_string(dim));
    if (!std::all_of(points[i].begin(), points[i].end(), finite))
      throw InputError("distribution: point " + std::to_string(i) + " is not finite");
    if (!finite(mass[i])) throw InputError("distribution: mass " + std::to_string(i) + " is not finite");
    if (!qcmp_nonneg(mass[i])) throw InputError("distribution: mass " + std::to_string(i) + " is negative");
    if (mass[i] == Quaternion{}) continue;
    points_.push_back(std::move(points[i]));
    mass_.push_back(mass[i]);
  }
  if (points_.empty()) throw InputError("distribution: no point carries mass");
  for (std::size_t i = 0; i < points_.size(); ++i)
    for (std::size_t j = i + 1; j < points_.size(); ++j)
      if (qdist(points_[i], points_[j]) <= kPointTol)
        throw InputError("distribution: points " + std::to_string(i) + " and " + std::to_string(j) +
                         " coincide");

  mode_ = std::all_of(mass_.begin(), mass_.end(), [](const Quaternion& q) { return q.is_real(); })
              ? MassMode::RealPmf
              : MassMode::General;
  if (mode_ == MassMode::RealPmf) {
    const double t = total(0);
    if (renormalize) {
      for (auto& q : mass_) q.w /= t;
    } else if (std::abs(t - 1.0) > kMassTol) {
      throw InputError("distribution: real masses sum to " + std::to_string(t) + ", not 1");
    }
  }
}

DiscreteDistribution DiscreteDistribution::real_pmf(std::size_t dim, std::vector<QVector> points,
                                                    std::span<const double> mass, bool renormalize) {
  QVector q(mass.size());
  for (std::size_t i = 0; i < mass.size(); ++i) q[i] = Quaternion{mass[i]};
  return {dim, std::move(points), std::move(q), renormalize};
}

DiscreteDistribution DiscreteDistribution::empirical(std::span<const QVector> samples) {
  if (samples.empty()) throw InputError("empirical: no samples");
  std::vector<QVector> pts;
  std::vector<double> counts;
  for (const auto& s : samples) {
    if (s.size() != samples.front().size()) throw InputError("empirical: samples differ in length");
    const long k = find_point(pts, s);
    if (k >= 0) {
      counts[static_cast<std::size_t>(k)] += 1.0;
    } else {
      pts.push_back(s);
      counts.push_back(1.0);
    }
  }
  const double n = static_cast<double>(samples.size());
  for (auto& c : counts) c /= n;
  return real_pmf(samples.front().size(), std::move(pts), counts, true);
}

double DiscreteDistribution::total(std::size_t l) const {
  double t = 0.0;
  for (const auto& q : mass_) t += q[l];
  return t;
}

std::vector<double> DiscreteDistribution::real_mass() const {
  std::vector<double> out(mass_.size());
  for (std::size_t i = 0; i < mass_.size(); ++i) out[i] = mass_[i].w;
  return out;
}

CostMatrix make_cost(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const CostFunction& fn) {
  CostMatrix c{Eigen::MatrixXd(static_cast<Index>(pr.size()), static_cast<Index>(pg.size()))};
  for (std::size_t i = 0; i < pr.size(); ++i)
    for (std::size_t j = 0; j < pg.size(); ++j)
      c.values(static_cast<Index>(i), static_cast<Index>(j)) = fn(pr.points()[i], pg.points()[j]);
  validate_cost(c, pr, pg);
  return c;
}

CostMatrix euclidean_cost(const DiscreteDistribution& pr, const DiscreteDistribution& pg) {
  if (pr.dim() != pg.dim()) throw InputError("cost: distributions differ in dimension");
  return make_cost(pr, pg, [](std::span<const Quaternion> a, std::span<const Quaternion> b) { return qdist(a, b); });
}

void validate_cost(const CostMatrix& cost, const DiscreteDistribution& pr, const DiscreteDistribution& pg) {
  if (cost.values.rows() != static_cast<Index>(pr.size()) || cost.values.cols() != static_cast<Index>(pg.size()))
    throw InputError("cost: matrix is " + std::to_string(cost.values.rows()) + "x" +
                     std::to_string(cost.values.cols()) + ", supports are " + std::to_string(pr.size()) + "x" +
                     std::to_string(pg.size()));
  if (!cost.values.allFinite()) throw InputError("cost: non-finite entry");
  if (cost.values.size() && cost.values.minCoeff() < 0.0) throw InputError("cost: negative entry");
}

qlp::QuaternionLP build_discretization(const DiscreteDistribution& pr, const DiscreteDistribution& pg,
                                       const CostMatrix& cost) {
  if (pr.dim() != pg.dim()) throw InputError("discretization: distributions differ in dimension");
  validate_cost(cost, pr, pg);
  for (std::size_t l = 0; l < 4; ++l) {
    const double deficit = pr.total(l) - pg.total(l);
    if (std::abs(deficit) > kMassTol)
      throw InfeasibleError("mass imbalance in component " + std::to_string(l) + ": P_r - P_g = " +
                                std::to_string(deficit),
                            static_cast<int>(l));
  }
  const Index nr = static_cast<Index>(pr.size());
  const Index ng = static_cast<Index>(pg.size());
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(nr + ng, nr * ng);
  Eigen::VectorXd C(nr * ng);
  for (Index i = 0; i < nr; ++i)
    for (Index j = 0; j < ng; ++j) {
      U(i, i * ng + j) = 1.0;
      U(nr + j, i * ng + j) = 1.0;
      C(i * ng + j) = cost.values(i, j);
    }
  QVector b(pr.mass());
  b.insert(b.end(), pg.mass().begin(), pg.mass().end());
  return {std::move(U), std::move(b), std::move(C)};
}

QMatrix unflatten_plan(const QVector& gamma, std::size_t nr, std::size_t ng) {
  if (gamma.size() != nr * ng) throw InputError("unflatten_plan: length mismatch");
  QMatrix m(nr, ng);
  std::copy(gamma.begin(), gamma.end(), m.data().begin());
  return m;
}

MassMode pair_mode(const DiscreteDistribution& pr, const DiscreteDistribution& pg) {
  return pr.mode() == MassMode::RealPmf && pg.mode() == MassMode::RealPmf ? MassMode::RealPmf : MassMode::General;
}

PrimalResult qwd_primal(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const CostMatrix& cost) {
  const auto q = build_discretization(pr, pg, cost);
  const auto sol = qlp::solve_qlp(q);
  PrimalResult r;
  r.mode = pair_mode(pr, pg);
  r.plan.gamma = unflatten_plan(sol.gamma, pr.size(), pg.size());
  r.plan.objective = sol.objective;
  r.value = sol.objective;
  return r;
}

PrimalResult qwd_primal(const DiscreteDistribution& pr, const DiscreteDistribution& pg) {
  return qwd_primal(pr, pg, euclidean_cost(pr, pg));
}

DualResult qwd_dual(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const CostMatrix& cost) {
  const auto q = build_discretization(pr, pg, cost);
  const Index nr = static_cast<Index>(pr.size());
  const Index ng = static_cast<Index>(pg.size());
  DualResult r;
  r.mode = pair_mode(pr, pg);
  Eigen::VectorXd y;
  if (r.mode == MassMode::RealPmf) {
    const Eigen::VectorXd b0 = q.b_component(0);
    const auto sol = lp::solve_lp(lp::RealLP(q.upsilon, b0, q.C));
    if (sol.status != lp::Status::Optimal) throw NumericError("qwd_dual: transport LP not solved to optimality");
    y = sol.dual_y;
    r.value = b0.dot(y);
  } else {
    const auto d = qlp::solve_qlp_dual(q);
    y = d.y;
    r.value = d.value;
  }
  r.potentials.f = y.head(nr);
  r.potentials.g = y.tail(ng);
  return r;
}

DualResult qwd_dual(const DiscreteDistribution& pr, const DiscreteDistribution& pg) {
  return qwd_dual(pr, pg, euclidean_cost(pr, pg));
}

double dual_violation(const DualPotentials& p, const CostMatrix& cost) {
  double worst = 0.0;
  for (Index i = 0; i < p.f.size(); ++i)
    for (Index j = 0; j < p.g.size(); ++j) worst = std::max(worst, p.f(i) + p.g(j) - cost.values(i, j));
  return worst;
}

ReducedPotential reduce_potentials(const DiscreteDistribution& pr, const DiscreteDistribution& pg,
                                   const DualPotentials& p) {
  if (p.g.size() != static_cast<Index>(pg.size())) throw InputError("reduce_potentials: g has wrong length");
  ReducedPotential rp;
  rp.points = pr.points();
  rp.points.insert(rp.points.end(), pg.points().begin(), pg.points().end());
  rp.phi.resize(static_cast<Index>(rp.points.size()));
  for (std::size_t k = 0; k < rp.points.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pg.size(); ++j)
      best = std::min(best, qdist(rp.points[k], pg.points()[j]) - p.g(static_cast<Index>(j)));
    rp.phi(static_cast<Index>(k)) = best;
  }
  return rp;
}

double reduced_value(const DiscreteDistribution& pr, const DiscreteDistribution& pg, const ReducedPotential& rp) {
  if (pair_mode(pr, pg) != MassMode::RealPmf) throw InputError("reduced_value: requires real-pmf distributions");
  double v = 0.0;
  for (std::size_t i = 0; i < pr.size(); ++i) v += pr.mass()[i].w * rp.phi(static_cast<Index>(i));
  for (std::size_t j = 0; j < pg.size(); ++j) v -= pg.mass()[j].w * rp.phi(static_cast<Index>(pr.size() + j));
  return v;
}

double qwd_reduced_dual_estimate(std::span<const QVector> samples_r, std::span<const QVector> samples_g,
                                 const ScoreFunction& f, double lip_bound) {
  if (samples_r.empty() || samples_g.empty()) throw InputError("reduced dual estimate: empty sample set");
  if (!(lip_bound > 0.0)) throw InputError("reduced dual estimate: lip_bound must be positive");
  double mr = 0.0, mg = 0.0;
  for (const auto& s : samples_r) mr += f(s);
  for (const auto& s : samples_g) mg += f(s);
  mr /= static_cast<double>(samples_r.size());
  mg /= static_cast<double>(samples_g.size());
  return (mr - mg) / lip_bound;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InputError("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InputError("js_divergence: length mismatch");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  const double v = 0.5 * (kl_divergence(p, m) + kl_divergence(q, m));
  return std::max(v, 0.0);
}

AlignedPmfs align(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.mode() != MassMode::RealPmf || q.mode() != MassMode::RealPmf)
    throw InputError("divergence: requires real-pmf distributions");
  if (p.dim() != q.dim()) throw InputError("divergence: distributions differ in dimension");
  AlignedPmfs a;
  a.support = p.points();
  a.p = p.real_mass();
  a.q.assign(a.support.size(), 0.0);
  for (std::size_t j = 0; j < q.size(); ++j) {
    const long k = find_point(a.support, q.points()[j]);
    if (k >= 0) {
      a.q[static_cast<std::size_t>(k)] = q.mass()[j].w;
    } else {
      a.support.push_back(q.points()[j]);
      a.p.push_back(0.0);
      a.q.push_back(q.mass()[j].w);
    }
  }
  return a;
}

double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  const auto a = align(p, q);
  return kl_divergence(a.p, a.q);
}

double js_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  const auto a = align(p, q);
  return js_divergence(a.p, a.q);
}

}  // namespace qwgan::qwd
