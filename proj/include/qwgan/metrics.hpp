#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qwgan/quaternion.hpp"

namespace qwgan::metrics {

/// Mean and unbiased covariance of a feature sample.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;

  /// Rows of X are samples; needs at least two rows.
  static FeatureStats from_samples(const Eigen::MatrixXd& X);
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Statistics of the union of the two underlying samples.
FeatureStats merge(const FeatureStats& a, const FeatureStats& b);

/// Symmetric square root through an eigendecomposition. Eigenvalues down to
/// -1e-9 (scaled by the largest magnitude when that exceeds 1) are clamped
/// to 0, as are positive ones below d * machine epsilon * largest; anything more negative, or asymmetry above 1e-12 relative, is an
/// InputError.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& S);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), clamped at 0.
double fid(const FeatureStats& a, const FeatureStats& b);

struct ScoreWithStd {
  double mean = 0.0;
  double std = 0.0;  // population std over splits
};

/// Rows of P are class posteriors p(y|x). Split s covers rows
/// [s n / splits, (s + 1) n / splits).
ScoreWithStd inception_score(const Eigen::MatrixXd& P, std::size_t splits = 10);

using Classifier = std::function<Eigen::VectorXd(std::span<const Quaternion>)>;
ScoreWithStd inception_score(std::span<const QVector> samples, const Classifier& clf, std::size_t splits = 10);

enum class FeatureKind { Raw, RandomProjection };

struct FeatureSpec {
  FeatureKind kind = FeatureKind::Raw;
  std::size_t dim = 0;  // projection only
  std::uint64_t seed = 0;

  /// "raw" or "proj:D:SEED".
  static FeatureSpec parse(const std::string& s);
  std::string to_string() const;
};

/// One row per sample. Raw rows list (w, x, y, z) per coordinate; the
/// projection multiplies raw rows by a seeded N(0, 1/D) matrix.
Eigen::MatrixXd feature_matrix(std::span<const QVector> samples, const FeatureSpec& spec);
FeatureStats feature_extract(std::span<const QVector> samples, const FeatureSpec& spec);

}  // namespace qwgan::metrics
