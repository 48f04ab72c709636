#include "qwgan/quaternion.hpp"

namespace qwgan {

Eigen::Matrix4d left_matrix(const Quaternion& q) {
  Eigen::Matrix4d m;
  m << q.w, -q.x, -q.y, -q.z,
       q.x,  q.w, -q.z,  q.y,
       q.y,  q.z,  q.w, -q.x,
       q.z, -q.y,  q.x,  q.w;
  return m;
}

double qnorm(std::span<const Quaternion> v) {
  double s = 0.0;
  for (const auto& q : v) s += q.norm_sq();
  return std::sqrt(s);
}

double qdist(std::span<const Quaternion> a, std::span<const Quaternion> b) {
  if (a.size() != b.size()) throw std::invalid_argument("qdist: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).norm_sq();
  return std::sqrt(s);
}

bool qcmp_nonneg(const Quaternion& q, double tol) {
  return q.w >= -tol && q.x >= -tol && q.y >= -tol && q.z >= -tol;
}

bool qcmp_nonneg(std::span<const Quaternion> v, double tol) {
  for (const auto& q : v)
    if (!qcmp_nonneg(q, tol)) return false;
  return true;
}

double qdot_real(std::span<const Quaternion> a, std::span<const Quaternion> b) {
  if (a.size() != b.size()) throw std::invalid_argument("qdot_real: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i].w * b[i].w + a[i].x * b[i].x + a[i].y * b[i].y + a[i].z * b[i].z;
  return s;
}

Quaternion real_combination(std::span<const double> coeff, std::span<const Quaternion> v) {
  if (coeff.size() != v.size()) throw std::invalid_argument("real_combination: length mismatch");
  Quaternion acc;
  for (std::size_t i = 0; i < v.size(); ++i) acc += coeff[i] * v[i];
  return acc;
}

ComponentVectors split(std::span<const Quaternion> v) {
  ComponentVectors out;
  const auto n = static_cast<Eigen::Index>(v.size());
  for (auto& c : out) c.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t l = 0; l < 4; ++l) out[l](i) = v[static_cast<std::size_t>(i)][l];
  return out;
}

QVector combine(const ComponentVectors& parts) {
  const auto n = parts[0].size();
  for (const auto& p : parts)
    if (p.size() != n) throw std::invalid_argument("combine: component length mismatch");
  QVector v(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    v[static_cast<std::size_t>(i)] = {parts[0](i), parts[1](i), parts[2](i), parts[3](i)};
  return v;
}

Eigen::MatrixXd QMatrix::component(std::size_t l) const {
  Eigen::MatrixXd m(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) m(r, c) = (*this)(r, c)[l];
  return m;
}

std::array<Eigen::MatrixXd, 4> QMatrix::split() const {
  return {component(0), component(1), component(2), component(3)};
}

QMatrix QMatrix::combine(const std::array<Eigen::MatrixXd, 4>& parts) {
  const auto rows = parts[0].rows();
  const auto cols = parts[0].cols();
  for (const auto& p : parts)
    if (p.rows() != rows || p.cols() != cols)
      throw std::invalid_argument("QMatrix::combine: component shape mismatch");
  QMatrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = {parts[0](r, c), parts[1](r, c), parts[2](r, c), parts[3](r, c)};
  return m;
}

}  // namespace qwgan
