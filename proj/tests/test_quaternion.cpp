#include "doctest.h"

#include <random>

#include "qwgan/quaternion.hpp"

using namespace qwgan;

namespace {

Quaternion random_q(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {n(rng), n(rng), n(rng), n(rng)};
}

}  // namespace

TEST_CASE("unit table") {
  const Quaternion one{1.0}, i = Quaternion::i(), j = Quaternion::j(), k = Quaternion::k();
  CHECK(i * i == -one);
  CHECK(j * j == -one);
  CHECK(k * k == -one);
  CHECK(i * j * k == -one);
  CHECK(i * j == k);
  CHECK(j * i == -k);
  CHECK(j * k == i);
  CHECK(k * i == j);
}

TEST_CASE("qmul examples") {
  const Quaternion q{2, 3, -1, 1};
  CHECK(q * Quaternion{1.0} == q);
  // (1+i)(1+j) = 1 + j + i + ij = 1 + i + j + k
  CHECK(Quaternion{1, 1, 0, 0} * Quaternion{1, 0, 1, 0} == Quaternion{1, 1, 1, 1});
}

TEST_CASE("left matrix matches product") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_q(rng), b = random_q(rng);
    const Eigen::Vector4d v(b.w, b.x, b.y, b.z);
    const Eigen::Vector4d r = left_matrix(a) * v;
    const auto p = a * b;
    for (int l = 0; l < 4; ++l) CHECK(r(l) == doctest::Approx(p[l]).epsilon(1e-14));
    CHECK((left_matrix(a).transpose() - left_matrix(a.conj())).norm() == 0.0);
  }
}

TEST_CASE("modulus is multiplicative") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const auto a = random_q(rng), b = random_q(rng);
    const double lhs = (a * b).abs();
    const double rhs = a.abs() * b.abs();
    worst = std::max(worst, std::abs(lhs - rhs) / rhs);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("qnorm and qdist") {
  CHECK(qnorm(QVector{{1, 1, 1, 1}}) == 2.0);
  CHECK(qnorm(QVector(3)) == 0.0);
  CHECK(qnorm(QVector{{3}, {0, 4}}) == 5.0);
  CHECK(qdist(QVector{{0}}, QVector{{1, 1, 1, 1}}) == 2.0);
  const QVector a{{1, 2, 3, 4}, {-1, 0, 2, 0}};
  CHECK(qdist(a, a) == 0.0);
  CHECK_THROWS_AS(qdist(a, QVector{{1}}), std::invalid_argument);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) {
    QVector x(3), y(3), z(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = random_q(rng);
      y[i] = random_q(rng);
      z[i] = random_q(rng);
    }
    CHECK(qdist(x, y) >= 0.0);
    CHECK(qdist(x, y) == qdist(y, x));
    CHECK(qdist(x, z) <= qdist(x, y) + qdist(y, z) + 1e-12);
  }
}

TEST_CASE("partial order") {
  CHECK(qcmp_nonneg(QVector{{1, 1}}));
  CHECK_FALSE(qcmp_nonneg(QVector{{1, -1}}));
  CHECK(qcmp_nonneg(QVector{{0}}));
  const QVector mixed{{1, -1}};
  const QVector neg{{-1, 1}};
  CHECK_FALSE(qcmp_nonneg(mixed));
  CHECK_FALSE(qcmp_nonneg(neg));
  CHECK(qcmp_nonneg(QVector{{-1e-10}}, 1e-9));
}

TEST_CASE("split and combine round trip") {
  std::mt19937_64 rng(9);
  QVector v(7);
  for (auto& q : v) q = random_q(rng);
  CHECK(combine(split(v)) == v);

  QMatrix m(3, 5);
  for (auto& q : m.data()) q = random_q(rng);
  CHECK(QMatrix::combine(m.split()) == m);
  CHECK(m.component(2)(1, 4) == m(1, 4).y);
}
