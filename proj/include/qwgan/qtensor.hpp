#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "qwgan/quaternion.hpp"

namespace qwgan {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_string(const Shape& s);

/// Quaternion tensor stored as four real arrays (w, x, y, z), row-major.
struct QTensor {
  Shape shape;
  std::array<std::vector<double>, 4> c;

  QTensor() = default;
  explicit QTensor(Shape s);

  std::size_t size() const { return c[0].size(); }
  Quaternion get(std::size_t i) const { return {c[0][i], c[1][i], c[2][i], c[3][i]}; }
  void set(std::size_t i, const Quaternion& q) {
    c[0][i] = q.w;
    c[1][i] = q.x;
    c[2][i] = q.y;
    c[3][i] = q.z;
  }
  void add(std::size_t i, const Quaternion& q) {
    c[0][i] += q.w;
    c[1][i] += q.x;
    c[2][i] += q.y;
    c[3][i] += q.z;
  }
  void fill(double v);
  bool all_finite() const;
  double max_abs() const;

  friend bool operator==(const QTensor&, const QTensor&) = default;
};

/// Real inner product over all components.
double inner(const QTensor& a, const QTensor& b);

/// Samples of a [N, ...] tensor as flat quaternion vectors; from_rows builds [N, n].
std::vector<QVector> to_rows(const QTensor& t);
QTensor from_rows(const std::vector<QVector>& rows);

}  // namespace qwgan
