#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace qwgan {

/// Hamilton quaternion w + x i + y j + z k. Component order (w, x, y, z) is
/// the order used by every serialized format in this project.
struct Quaternion {
  double w = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Quaternion() = default;
  constexpr Quaternion(double w_, double x_ = 0.0, double y_ = 0.0, double z_ = 0.0)
      : w(w_), x(x_), y(y_), z(z_) {}

  static constexpr Quaternion i() { return {0.0, 1.0, 0.0, 0.0}; }
  static constexpr Quaternion j() { return {0.0, 0.0, 1.0, 0.0}; }
  static constexpr Quaternion k() { return {0.0, 0.0, 0.0, 1.0}; }

  constexpr double operator[](std::size_t l) const {
    return l == 0 ? w : l == 1 ? x : l == 2 ? y : z;
  }
  constexpr double& operator[](std::size_t l) {
    return l == 0 ? w : l == 1 ? x : l == 2 ? y : z;
  }

  constexpr Quaternion conj() const { return {w, -x, -y, -z}; }
  constexpr double norm_sq() const { return w * w + x * x + y * y + z * z; }
  double abs() const { return std::sqrt(norm_sq()); }
  constexpr bool is_pure() const { return w == 0.0; }
  constexpr bool is_real() const { return x == 0.0 && y == 0.0 && z == 0.0; }

  constexpr Quaternion& operator+=(const Quaternion& o) {
    w += o.w; x += o.x; y += o.y; z += o.z;
    return *this;
  }
  constexpr Quaternion& operator-=(const Quaternion& o) {
    w -= o.w; x -= o.x; y -= o.y; z -= o.z;
    return *this;
  }
  constexpr Quaternion& operator*=(double s) {
    w *= s; x *= s; y *= s; z *= s;
    return *this;
  }

  friend constexpr bool operator==(const Quaternion&, const Quaternion&) = default;
};

constexpr Quaternion operator+(Quaternion a, const Quaternion& b) { return a += b; }
constexpr Quaternion operator-(Quaternion a, const Quaternion& b) { return a -= b; }
constexpr Quaternion operator-(const Quaternion& a) { return {-a.w, -a.x, -a.y, -a.z}; }
constexpr Quaternion operator*(Quaternion a, double s) { return a *= s; }
constexpr Quaternion operator*(double s, Quaternion a) { return a *= s; }

/// Hamilton product; i*j = k, j*i = -k.
constexpr Quaternion qmul(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}
constexpr Quaternion operator*(const Quaternion& a, const Quaternion& b) { return qmul(a, b); }

/// 4x4 real matrix of left multiplication: qmul(q, v) == left_matrix(q) * v.
Eigen::Matrix4d left_matrix(const Quaternion& q);

using QVector = std::vector<Quaternion>;

/// Euclidean norm over all 4n real components.
double qnorm(std::span<const Quaternion> v);

/// ||a - b||; throws std::invalid_argument on length mismatch.
double qdist(std::span<const Quaternion> a, std::span<const Quaternion> b);

/// Componentwise partial order: true iff every real component is >= -tol.
bool qcmp_nonneg(std::span<const Quaternion> v, double tol = 0.0);
bool qcmp_nonneg(const Quaternion& q, double tol = 0.0);

/// Real inner product of the stacked components.
double qdot_real(std::span<const Quaternion> a, std::span<const Quaternion> b);

/// Quaternion combination sum_i coeff[i] * v[i] with real coefficients.
Quaternion real_combination(std::span<const double> coeff, std::span<const Quaternion> v);

using ComponentVectors = std::array<Eigen::VectorXd, 4>;
ComponentVectors split(std::span<const Quaternion> v);
QVector combine(const ComponentVectors& parts);

/// Dense row-major quaternion matrix.
class QMatrix {
 public:
  QMatrix() = default;
  QMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Quaternion& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Quaternion& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const Quaternion> data() const { return data_; }
  std::span<Quaternion> data() { return data_; }

  Eigen::MatrixXd component(std::size_t l) const;
  std::array<Eigen::MatrixXd, 4> split() const;
  static QMatrix combine(const std::array<Eigen::MatrixXd, 4>& parts);

  friend bool operator==(const QMatrix&, const QMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  QVector data_;
};

}  // namespace qwgan
