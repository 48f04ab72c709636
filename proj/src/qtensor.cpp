#include "qwgan/qtensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "qwgan/errors.hpp"

namespace qwgan {

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

QTensor::QTensor(Shape s) : shape(std::move(s)) {
  for (auto& v : c) v.assign(numel(shape), 0.0);
}

void QTensor::fill(double v) {
  for (auto& a : c) std::fill(a.begin(), a.end(), v);
}

bool QTensor::all_finite() const {
  for (const auto& a : c)
    for (double v : a)
      if (!std::isfinite(v)) return false;
  return true;
}

double QTensor::max_abs() const {
  double m = 0.0;
  for (const auto& a : c)
    for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double inner(const QTensor& a, const QTensor& b) {
  if (a.size() != b.size()) throw InputError("inner: size mismatch");
  double s = 0.0;
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < a.size(); ++i) s += a.c[l][i] * b.c[l][i];
  return s;
}

std::vector<QVector> to_rows(const QTensor& t) {
  if (t.shape.size() < 2) throw InputError("to_rows: expected a batched tensor, got " + shape_string(t.shape));
  const std::size_t n = t.shape[0] == 0 ? 0 : t.size() / t.shape[0];
  std::vector<QVector> rows(t.shape[0], QVector(n));
  for (std::size_t r = 0; r < t.shape[0]; ++r)
    for (std::size_t k = 0; k < n; ++k) rows[r][k] = t.get(r * n + k);
  return rows;
}

QTensor from_rows(const std::vector<QVector>& rows) {
  const std::size_t n = rows.empty() ? 0 : rows.front().size();
  QTensor t({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != n) throw InputError("from_rows: ragged rows");
    for (std::size_t k = 0; k < n; ++k) t.set(r * n + k, rows[r][k]);
  }
  return t;
}

}  // namespace qwgan
