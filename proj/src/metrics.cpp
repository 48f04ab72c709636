#include "qwgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "qwgan/errors.hpp"

namespace qwgan::metrics {

using Eigen::MatrixXd;
using Eigen::VectorXd;

FeatureStats FeatureStats::from_samples(const MatrixXd& X) {
  if (X.rows() < 2) throw InputError("feature statistics need at least 2 samples, got " + std::to_string(X.rows()));
  if (!X.allFinite()) throw InputError("feature statistics: non-finite feature");
  FeatureStats s;
  s.count = static_cast<std::size_t>(X.rows());
  s.mean = X.colwise().mean().transpose();
  const MatrixXd C = X.rowwise() - s.mean.transpose();
  s.cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

FeatureStats merge(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim()) throw InputError("merge: feature dimensions differ");
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  const double na = static_cast<double>(a.count), nb = static_cast<double>(b.count), n = na + nb;
  const VectorXd delta = b.mean - a.mean;
  FeatureStats out;
  out.count = a.count + b.count;
  out.mean = a.mean + delta * (nb / n);
  const MatrixXd m2 = (na - 1.0) * a.cov + (nb - 1.0) * b.cov + (delta * delta.transpose()) * (na * nb / n);
  out.cov = m2 / (n - 1.0);
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

MatrixXd sqrtm_psd(const MatrixXd& S) {
  if (S.rows() != S.cols()) throw InputError("sqrtm_psd: matrix is not square");
  if (S.size() == 0) return S;
  if (!S.allFinite()) throw InputError("sqrtm_psd: non-finite entry");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw InputError("sqrtm_psd: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  VectorXd lam = es.eigenvalues();
  const double floor = -1e-9 * std::max(1.0, lam.cwiseAbs().maxCoeff());
  if (lam.minCoeff() < floor)
    throw InputError("sqrtm_psd: eigenvalue " + std::to_string(lam.minCoeff()) + " below tolerance");
  // Eigenvalues at roundoff level are treated as exact zeros.
  const double rank_tol = static_cast<double>(S.rows()) * std::numeric_limits<double>::epsilon() * lam.cwiseAbs().maxCoeff();
  for (auto& v : lam) v = v <= rank_tol ? 0.0 : std::sqrt(v);
  const MatrixXd& V = es.eigenvectors();
  MatrixXd R = V * lam.asDiagonal() * V.transpose();
  return 0.5 * (R + R.transpose());
}

double fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim())
    throw InputError("fid: dimension mismatch " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  // Tr (ra Sb ra)^1/2 is the sum of singular values of rb ra; taking them
  // directly avoids a second square root of near-zero eigenvalues.
  const MatrixXd ra = sqrtm_psd(a.cov), rb = sqrtm_psd(b.cov);
  const double cross = Eigen::JacobiSVD<MatrixXd>(rb * ra).singularValues().sum();
  const double v = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  if (!std::isfinite(v)) throw NumericError("fid: non-finite result");
  return std::max(v, 0.0);
}

ScoreWithStd inception_score(const MatrixXd& P, std::size_t splits) {
  const auto n = static_cast<std::size_t>(P.rows());
  if (n == 0) throw InputError("inception_score: no samples");
  if (splits == 0 || splits > n) throw InputError("inception_score: splits must lie in [1, number of samples]");
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    if (!P.row(r).allFinite() || P.row(r).minCoeff() < 0.0 || std::abs(P.row(r).sum() - 1.0) > 1e-9)
      throw InputError("inception_score: row " + std::to_string(r) + " is not a probability vector");
  }
  std::vector<double> scores;
  for (std::size_t s = 0; s < splits; ++s) {
    const auto lo = static_cast<Eigen::Index>(s * n / splits), hi = static_cast<Eigen::Index>((s + 1) * n / splits);
    // Mean as offsets from the first row: exact when every row is the same.
    const auto block = P.middleRows(lo, hi - lo);
    const VectorXd py =
        (block.row(0) + (block.rowwise() - block.row(0)).colwise().mean()).transpose();
    double kl = 0.0;
    for (Eigen::Index r = lo; r < hi; ++r)
      for (Eigen::Index y = 0; y < P.cols(); ++y) {
        const double p = P(r, y);
        if (p > 0.0) kl += p * std::log(p / py(y));
      }
    scores.push_back(std::exp(kl / static_cast<double>(hi - lo)));
  }
  ScoreWithStd out;
  for (double v : scores) out.mean += v;
  out.mean /= static_cast<double>(scores.size());
  for (double v : scores) out.std += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(out.std / static_cast<double>(scores.size()));
  return out;
}

ScoreWithStd inception_score(std::span<const QVector> samples, const Classifier& clf, std::size_t splits) {
  if (samples.empty()) throw InputError("inception_score: no samples");
  MatrixXd P;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const VectorXd p = clf(samples[i]);
    if (i == 0) P.resize(static_cast<Eigen::Index>(samples.size()), p.size());
    if (p.size() != P.cols()) throw InputError("inception_score: classifier output length changed");
    P.row(static_cast<Eigen::Index>(i)) = p.transpose();
  }
  return inception_score(P, splits);
}

FeatureSpec FeatureSpec::parse(const std::string& s) {
  if (s == "raw") return {};
  if (s.rfind("proj:", 0) == 0) {
    const auto colon = s.find(':', 5);
    if (colon != std::string::npos) {
      try {
        std::size_t used = 0;
        const std::string ds = s.substr(5, colon - 5), ss = s.substr(colon + 1);
        const unsigned long long d = std::stoull(ds, &used);
        if (used == ds.size() && d > 0) {
          const unsigned long long seed = std::stoull(ss, &used);
          if (used == ss.size()) return {FeatureKind::RandomProjection, static_cast<std::size_t>(d), seed};
        }
      } catch (const std::exception&) {
      }
    }
  }
  throw InputError("feature spec must be 'raw' or 'proj:D:SEED', got '" + s + "'");
}

std::string FeatureSpec::to_string() const {
  if (kind == FeatureKind::Raw) return "raw";
  return "proj:" + std::to_string(dim) + ":" + std::to_string(seed);
}

MatrixXd feature_matrix(std::span<const QVector> samples, const FeatureSpec& spec) {
  if (samples.empty()) throw InputError("feature_extract: no samples");
  const std::size_t n = samples[0].size();
  MatrixXd X(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(4 * n));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].size() != n) throw InputError("feature_extract: samples have different lengths");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < 4; ++l)
        X(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(4 * i + l)) = samples[s][i][l];
  }
  if (spec.kind == FeatureKind::Raw) return X;
  if (spec.dim == 0) throw InputError("feature_extract: projection dimension must be positive");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(spec.dim)));
  MatrixXd R(X.cols(), static_cast<Eigen::Index>(spec.dim));
  for (Eigen::Index c = 0; c < R.cols(); ++c)
    for (Eigen::Index r = 0; r < R.rows(); ++r) R(r, c) = nd(rng);
  return X * R;
}

FeatureStats feature_extract(std::span<const QVector> samples, const FeatureSpec& spec) {
  return FeatureStats::from_samples(feature_matrix(samples, spec));
}

}  // namespace qwgan::metrics
