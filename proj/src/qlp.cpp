#include "qwgan/qlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "qwgan/errors.hpp"
#include "qwgan/lp.hpp"

namespace qwgan::qlp {

using Eigen::Index;

QuaternionLP::QuaternionLP(Eigen::MatrixXd upsilon_, QVector b_, Eigen::VectorXd C_)
    : upsilon(std::move(upsilon_)), b(std::move(b_)), C(std::move(C_)) {
  validate();
}

void QuaternionLP::validate() const {
  if (static_cast<Index>(b.size()) != upsilon.rows() || C.size() != upsilon.cols())
    throw InputError("QuaternionLP: dimension mismatch");
  if (!upsilon.allFinite() || !C.allFinite()) throw InputError("QuaternionLP: non-finite data");
  for (const auto& q : b)
    if (!std::isfinite(q.w) || !std::isfinite(q.x) || !std::isfinite(q.y) || !std::isfinite(q.z))
      throw InputError("QuaternionLP: non-finite b");
  if (C.size() > 0 && C.minCoeff() < 0.0) throw InputError("QuaternionLP: cost vector C must be nonnegative");
}

Eigen::VectorXd QuaternionLP::b_component(std::size_t l) const {
  Eigen::VectorXd v(static_cast<Index>(b.size()));
  for (std::size_t i = 0; i < b.size(); ++i) v(static_cast<Index>(i)) = b[i][l];
  return v;
}

bool QuaternionLP::real_b() const {
  return std::all_of(b.begin(), b.end(), [](const Quaternion& q) { return q.is_real(); });
}

QLPSolution solve_qlp(const QuaternionLP& qlp) {
  qlp.validate();
  const Index m = qlp.cols();
  std::array<Eigen::VectorXd, 4> parts;
  QLPSolution out;
  for (std::size_t l = 0; l < 4; ++l) {
    const Eigen::VectorXd bl = qlp.b_component(l);
    if (bl.isZero(0.0)) {
      parts[l] = Eigen::VectorXd::Zero(m);
      out.per_component[l] = 0.0;
      continue;
    }
    const auto sol = lp::solve_lp(lp::RealLP(qlp.upsilon, bl, qlp.C));
    if (sol.status == lp::Status::Infeasible)
      throw InfeasibleError("solve_qlp: component " + std::to_string(l) + " has no nonnegative solution",
                            static_cast<int>(l));
    if (sol.status == lp::Status::Unbounded)
      throw NumericError("solve_qlp: simplex reported unbounded with nonnegative costs");
    parts[l] = sol.x;
    out.per_component[l] = sol.objective;
  }
  out.gamma = combine(parts);
  out.objective = std::hypot(std::hypot(out.per_component[0], out.per_component[1]),
                             std::hypot(out.per_component[2], out.per_component[3]));
  return out;
}

Quaternion bty(const QuaternionLP& qlp, const Eigen::VectorXd& y) {
  if (y.size() != qlp.rows()) throw InputError("bty: dual vector has wrong length");
  return real_combination(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), qlp.b);
}

DualFeasibility check_dual_feasible(const QuaternionLP& qlp, const Eigen::VectorXd& y, double tol) {
  DualFeasibility f;
  const Eigen::VectorXd uy = qlp.upsilon.transpose() * y;
  for (Index j = 0; j < uy.size(); ++j)
    if (uy(j) > qlp.C(j) + tol) f.violated_rows.push_back(j);
  f.bty_nonneg = qcmp_nonneg(bty(qlp, y), tol);
  f.feasible = f.violated_rows.empty() && f.bty_nonneg;
  return f;
}

WeakDualityReport weak_duality_check(const QuaternionLP& qlp, const Eigen::VectorXd& y) {
  qlp.validate();
  const auto feas = check_dual_feasible(qlp, y);
  if (!feas.feasible) {
    std::ostringstream msg;
    msg << "weak_duality_check: y is not dual feasible;";
    if (!feas.violated_rows.empty()) {
      msg << " violated rows:";
      for (auto j : feas.violated_rows) msg << ' ' << j;
    }
    if (!feas.bty_nonneg) msg << " b^T y is not nonnegative";
    throw InputError(msg.str());
  }
  WeakDualityReport r;
  r.bty = bty(qlp, y);
  r.dual_value = r.bty.abs();
  r.primal_value = solve_qlp(qlp).objective;
  r.holds = r.dual_value <= r.primal_value + 1e-8;
  return r;
}

DualSolution solve_qlp_dual(const QuaternionLP& qlp) {
  qlp.validate();
  // Throws InfeasibleError when the primal is infeasible.
  const auto primal = solve_qlp(qlp);
  DualSolution out;
  const Index n = qlp.rows();

  if (qlp.real_b()) {
    out.exact_real = true;
    const Eigen::VectorXd b0 = qlp.b_component(0);
    if (b0.isZero(0.0)) {
      out.y = Eigen::VectorXd::Zero(n);
      return out;
    }
    const auto sol = lp::solve_lp(lp::RealLP(qlp.upsilon, b0, qlp.C));
    out.y = sol.dual_y;
    out.value = std::abs(b0.dot(out.y));
    (void)primal;
    return out;
  }

  // Restrict y to range(Upsilon): the null space of Upsilon^T leaves both the
  // constraints and (for a feasible primal) b^T y unchanged.
  Index rank = 0;
  Eigen::MatrixXd basis(n, 0);
  if (n > 0 && qlp.cols() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(qlp.upsilon, Eigen::ComputeFullU);
    const auto& sv = svd.singularValues();
    const double cut = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 0.0);
    for (Index i = 0; i < sv.size(); ++i)
      if (sv(i) > cut) ++rank;
    basis = svd.matrixU().leftCols(rank);
  }
  if (rank > lp::kMaxVertexVars)
    throw GuardError("solve_qlp_dual: rank " + std::to_string(rank) + " exceeds the vertex-enumeration guard");

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  const Eigen::MatrixXd reduced = qlp.upsilon.transpose() * basis;
  for (Index j = 0; j < reduced.rows(); ++j) {
    if (reduced.row(j).lpNorm<Eigen::Infinity>() <= 1e-12) continue;  // 0 <= C_j always holds
    rows.push_back(reduced.row(j));
    rhs.push_back(qlp.C(j));
  }
  for (std::size_t l = 0; l < 4; ++l) {
    const Eigen::RowVectorXd r = -(qlp.b_component(l).transpose() * basis);
    if (r.lpNorm<Eigen::Infinity>() <= 1e-12) continue;
    rows.push_back(r);
    rhs.push_back(0.0);
  }
  if (static_cast<Index>(rows.size()) > lp::kMaxVertexConstraints)
    throw GuardError("solve_qlp_dual: " + std::to_string(rows.size()) +
                     " dual constraints exceed the vertex-enumeration guard");

  Eigen::MatrixXd A(static_cast<Index>(rows.size()), rank);
  Eigen::VectorXd bb(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    A.row(static_cast<Index>(i)) = rows[i];
    bb(static_cast<Index>(i)) = rhs[i];
  }
  const auto vertices = lp::enumerate_vertices(A, bb);
  if (vertices.empty()) throw InputError("solve_qlp_dual: empty dual feasible set");
  out.vertices_examined = vertices.size();
  out.value = -1.0;
  for (const auto& z : vertices) {
    const Eigen::VectorXd y = basis * z;
    const double v = bty(qlp, y).abs();
    if (v > out.value) {
      out.value = v;
      out.y = y;
    }
  }
  return out;
}

GapSearchReport dual_gap_search(std::uint64_t seed, int trials, const GapSearchBounds& bounds) {
  if (bounds.min_rows < 1 || bounds.min_cols < 1 || bounds.max_rows < bounds.min_rows ||
      bounds.max_cols < bounds.min_cols)
    throw InputError("dual_gap_search: invalid size bounds");
  GapSearchReport report;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> rows_d(bounds.min_rows, bounds.max_rows);
  std::uniform_int_distribution<int> cols_d(bounds.min_cols, bounds.max_cols);
  std::bernoulli_distribution bit(0.5);
  std::uniform_int_distribution<int> cost_d(1, 4);
  std::uniform_int_distribution<int> rhs_d(0, 2);

  for (int t = 0; t < trials; ++t) {
    const int n = rows_d(rng);
    const int m = cols_d(rng);
    Eigen::MatrixXd U(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) U(i, j) = bit(rng) ? 1.0 : 0.0;
    Eigen::VectorXd C(m);
    for (int j = 0; j < m; ++j) C(j) = 0.5 * cost_d(rng);
    QVector b(static_cast<std::size_t>(n));
    for (auto& q : b) {
      q.w = rhs_d(rng);
      if (!bounds.real_b) {
        q.x = rhs_d(rng);
        q.y = rhs_d(rng);
        q.z = rhs_d(rng);
      }
    }
    QuaternionLP inst(U, b, C);
    GapRecord rec;
    try {
      rec.primal = solve_qlp(inst).objective;
      rec.dual = solve_qlp_dual(inst).value;
    } catch (const InfeasibleError&) {
      ++report.skipped_infeasible;
      continue;
    } catch (const GuardError&) {
      ++report.skipped_guard;
      continue;
    }
    rec.gap = rec.primal - rec.dual;
    rec.lp = std::move(inst);
    report.max_gap = std::max(report.max_gap, rec.gap);
    report.min_gap = report.records.empty() ? rec.gap : std::min(report.min_gap, rec.gap);
    if (rec.gap > kGapThreshold) report.gaps.push_back(rec);
    report.records.push_back(std::move(rec));
  }
  std::stable_sort(report.gaps.begin(), report.gaps.end(),
                   [](const GapRecord& a, const GapRecord& b) { return a.gap > b.gap; });
  return report;
}

const char* to_string(FarkasCertificate::Kind k) {
  return k == FarkasCertificate::Kind::Primal ? "primal" : "dual";
}

namespace {

Eigen::MatrixXd b_rows(const QVector& b) {
  Eigen::MatrixXd B(4, static_cast<Index>(b.size()));
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t l = 0; l < 4; ++l) B(static_cast<Index>(l), static_cast<Index>(i)) = b[i][l];
  return B;
}

bool dual_ray_valid(const Eigen::MatrixXd& U, const Eigen::MatrixXd& B, const Eigen::VectorXd& y) {
  const Eigen::VectorXd uy = U.transpose() * y;
  if (uy.size() && uy.maxCoeff() > 1e-9) return false;
  const Eigen::VectorXd by = B * y;
  return by.minCoeff() >= -1e-9 && by.maxCoeff() > 1e-9;
}

// Find y with U^T y <= 0, B y >= 0, sum(B y) = 1 by a phase-1 feasibility LP
// over y = y+ - y- and slack variables.
std::optional<Eigen::VectorXd> joint_dual_ray(const Eigen::MatrixXd& U, const Eigen::MatrixXd& B) {
  const Index n = U.rows();
  const Index m = U.cols();
  const Index k = B.rows();
  const Index vars = 2 * n + m + k;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + k + 1, vars);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + k + 1);
  const Eigen::MatrixXd Ut = U.transpose();
  A.block(0, 0, m, n) = Ut;
  A.block(0, n, m, n) = -Ut;
  A.block(0, 2 * n, m, m).setIdentity();
  A.block(m, 0, k, n) = B;
  A.block(m, n, k, n) = -B;
  A.block(m, 2 * n + m, k, k) = -Eigen::MatrixXd::Identity(k, k);
  const Eigen::RowVectorXd total = B.colwise().sum();
  A.block(m + k, 0, 1, n) = total;
  A.block(m + k, n, 1, n) = -total;
  rhs(m + k) = 1.0;
  const auto sol = lp::solve_lp(lp::RealLP(A, rhs, Eigen::VectorXd::Zero(vars)));
  if (sol.status != lp::Status::Optimal) return std::nullopt;
  return Eigen::VectorXd(sol.x.head(n) - sol.x.segment(n, n));
}

}  // namespace

FarkasCertificate farkas(const Eigen::MatrixXd& upsilon, const QVector& b) {
  if (static_cast<Index>(b.size()) != upsilon.rows()) throw InputError("farkas: dimension mismatch");
  if (!upsilon.allFinite()) throw InputError("farkas: non-finite Upsilon");
  const Index m = upsilon.cols();
  const Eigen::MatrixXd B = b_rows(b);
  if (!B.allFinite()) throw InputError("farkas: non-finite b");

  std::array<Eigen::VectorXd, 4> parts;
  std::vector<std::pair<int, Eigen::VectorXd>> rays;
  for (std::size_t l = 0; l < 4; ++l) {
    const Eigen::VectorXd bl = B.row(static_cast<Index>(l)).transpose();
    const auto sol = lp::solve_lp(lp::RealLP(upsilon, bl, Eigen::VectorXd::Zero(m)));
    if (sol.status == lp::Status::Optimal) {
      parts[l] = sol.x;
    } else {
      rays.emplace_back(static_cast<int>(l), sol.farkas_y);
    }
  }

  FarkasCertificate cert;
  if (rays.empty()) {
    cert.kind = FarkasCertificate::Kind::Primal;
    cert.gamma = combine(parts);
    return cert;
  }
  cert.kind = FarkasCertificate::Kind::Dual;
  for (const auto& [l, y] : rays) {
    if (dual_ray_valid(upsilon, B, y)) {
      cert.y = y;
      cert.component = l;
      return cert;
    }
  }
  if (auto y = joint_dual_ray(upsilon, B); y && dual_ray_valid(upsilon, B, *y)) {
    cert.y = *y;
    cert.component = -1;
    return cert;
  }
  throw NoAlternativeError(
      "farkas: component " + std::to_string(rays.front().first) +
      " is infeasible but no real y gives Upsilon^T y <= 0 with b^T y > 0 in every component");
}

CertificateCheck validate_certificate(const Eigen::MatrixXd& upsilon, const QVector& b,
                                      const FarkasCertificate& cert) {
  CertificateCheck chk;
  const Eigen::MatrixXd B = b_rows(b);
  if (cert.kind == FarkasCertificate::Kind::Primal) {
    if (static_cast<Index>(cert.gamma.size()) != upsilon.cols()) {
      chk.reason = "gamma has wrong length";
      return chk;
    }
    const auto parts = split(cert.gamma);
    for (std::size_t l = 0; l < 4; ++l) {
      const Eigen::VectorXd r = upsilon * parts[l] - B.row(static_cast<Index>(l)).transpose();
      chk.residual = std::max(chk.residual, r.size() ? r.lpNorm<Eigen::Infinity>() : 0.0);
    }
    if (!qcmp_nonneg(cert.gamma, 1e-9)) {
      chk.reason = "gamma is not nonnegative";
      return chk;
    }
    chk.valid = chk.residual <= 1e-8;
    if (!chk.valid) chk.reason = "Upsilon Gamma != b";
    return chk;
  }
  if (cert.y.size() != upsilon.rows()) {
    chk.reason = "y has wrong length";
    return chk;
  }
  const Eigen::VectorXd uy = upsilon.transpose() * cert.y;
  const Eigen::VectorXd by = B * cert.y;
  chk.residual = std::max(uy.size() ? std::max(0.0, uy.maxCoeff()) : 0.0, std::max(0.0, -by.minCoeff()));
  if (uy.size() && uy.maxCoeff() > 1e-9) {
    chk.reason = "Upsilon^T y has a positive entry";
    return chk;
  }
  if (by.minCoeff() < -1e-9) {
    chk.reason = "b^T y has a negative component";
    return chk;
  }
  if (by.maxCoeff() <= 1e-9) {
    chk.reason = "b^T y is not positive in any component";
    return chk;
  }
  chk.valid = true;
  return chk;
}

QuaternionBox::QuaternionBox(std::array<double, 4> s_, std::size_t n_) : s(s_), n(n_) {
  for (double v : s)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("QuaternionBox: bounds must be finite and nonnegative");
}

bool QuaternionBox::contains(std::span<const Quaternion> y, double tol) const {
  if (y.size() != n) throw InputError("QuaternionBox: dimension mismatch");
  for (const auto& q : y)
    for (std::size_t l = 0; l < 4; ++l)
      if (q[l] < -tol || q[l] > s[l] + tol) return false;
  return true;
}

Projection project_box(const QuaternionBox& box, std::span<const Quaternion> y) {
  if (y.size() != box.n) throw InputError("project_box: dimension mismatch");
  Projection p;
  p.xhat.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t l = 0; l < 4; ++l) p.xhat[i][l] = std::clamp(y[i][l], 0.0, box.s[l]);
  p.distance = qdist(y, p.xhat);
  return p;
}

SeparatingHyperplane separate_box(const QuaternionBox& box, std::span<const Quaternion> y) {
  if (y.size() != box.n) throw InputError("separate_box: dimension mismatch");
  if (box.contains(y)) throw InputError("separate_box: y lies in the box");
  const bool nonneg = qcmp_nonneg(y);
  bool nonpos = true;
  for (const auto& q : y)
    for (std::size_t l = 0; l < 4; ++l)
      if (q[l] > 0.0) nonpos = false;
  if (!nonneg && !nonpos) throw InputError("separate_box: y is neither nonnegative nor nonpositive");

  SeparatingHyperplane h;
  h.p = Eigen::VectorXd::Zero(static_cast<Index>(box.n));
  if (nonneg) {
    // Need a coordinate with y_i >= s in every component and > s in one.
    for (std::size_t i = 0; i < y.size(); ++i) {
      bool dominates = true;
      bool strict = false;
      for (std::size_t l = 0; l < 4; ++l) {
        if (y[i][l] < box.s[l]) dominates = false;
        if (y[i][l] > box.s[l]) strict = true;
      }
      if (!dominates || !strict) continue;
      h.index = i;
      h.p(static_cast<Index>(i)) = 1.0;
      for (std::size_t l = 0; l < 4; ++l)
        h.alpha[l] = y[i][l] > box.s[l] ? 0.5 * (box.s[l] + y[i][l]) : y[i][l];
      return h;
    }
    throw SeparationError(
        "separate_box: no coordinate exceeds the box in every component; "
        "no real p separates y under the componentwise order");
  }
  // Nonpositive y outside the box has some component below 0; the others are 0.
  for (std::size_t i = 0; i < y.size(); ++i) {
    bool strict = false;
    for (std::size_t l = 0; l < 4; ++l)
      if (y[i][l] < 0.0) strict = true;
    if (!strict) continue;
    h.index = i;
    h.p(static_cast<Index>(i)) = -1.0;
    for (std::size_t l = 0; l < 4; ++l) h.alpha[l] = -0.5 * y[i][l];
    return h;
  }
  throw NumericError("separate_box: unreachable");
}

bool validate_separation(const QuaternionBox& box, std::span<const Quaternion> y,
                         const SeparatingHyperplane& h, double tol) {
  if (h.p.size() != static_cast<Index>(box.n) || y.size() != box.n) return false;
  const double positive_mass = h.p.cwiseMax(0.0).sum();
  const Quaternion py = real_combination(std::span<const double>(h.p.data(), box.n), y);
  bool strict = false;
  for (std::size_t l = 0; l < 4; ++l) {
    const double sup_box = box.s[l] * positive_mass;
    if (sup_box > h.alpha[l] + tol) return false;
    if (h.alpha[l] > py[l] + tol) return false;
    if (py[l] > h.alpha[l] + tol) strict = true;
  }
  return strict;
}

QuaternionBox intersect(const QuaternionBox& a, const QuaternionBox& b) {
  if (a.n != b.n) throw InputError("intersect: dimension mismatch");
  std::array<double, 4> s{};
  for (std::size_t l = 0; l < 4; ++l) s[l] = std::min(a.s[l], b.s[l]);
  return {s, a.n};
}

QuaternionBox minkowski_sum(const QuaternionBox& a, const QuaternionBox& b) {
  if (a.n != b.n) throw InputError("minkowski_sum: dimension mismatch");
  std::array<double, 4> s{};
  for (std::size_t l = 0; l < 4; ++l) s[l] = a.s[l] + b.s[l];
  return {s, a.n};
}

}  // namespace qwgan::qlp
