#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qwgan/io.hpp"
#include "qwgan/metrics.hpp"
#include "qwgan/qnn.hpp"

namespace qwgan::wqgan {

enum class Dataset { GaussianMixtureQ, TwoMoonsQ, Swatch8 };

const char* to_string(Dataset d);
Dataset dataset_from_string(const std::string& s);

/// Per-sample shape: [1] for the point datasets, [1, 8, 8] for swatch8.
Shape sample_shape(Dataset d);

/// gaussian-mixture-q: one quaternion, equal mixture of N(+-0.5 (1,1,1,1), 0.1^2 I).
/// two-moons-q: one quaternion, two interleaved moons in (w, x) scaled into
/// [-1, 1], y = z = 0. swatch8: 8x8 pure-quaternion colour patches, a base
/// colour plus a linear ramp, RGB in (i, j, k). Every channel is clamped to
/// [-1, 1]; no quaternion-norm normalisation. Returns [m, sample shape...].
QTensor sample_real(Dataset d, std::size_t m, std::mt19937_64& rng);

/// Standard normal per real component, shape [m, noise_dim].
QTensor sample_noise(std::size_t m, std::size_t noise_dim, std::mt19937_64& rng);

/// Class posteriors for the inception score: mixture posterior for
/// gaussian-mixture-q, moon membership for two-moons-q, dominant colour for swatch8.
metrics::Classifier dataset_classifier(Dataset d);

qnn::NetworkSpec generator_spec(Dataset d, std::size_t noise_dim, std::size_t hidden);
qnn::NetworkSpec critic_spec(Dataset d, std::size_t hidden);

struct TrainConfig {
  int iters = 1000;
  std::size_t batch = 64;
  double lr = 2e-4;
  double clip = 0.01;
  int n_critic = 5;
  std::uint64_t seed = 0;
  int eval_every = 100;
  Dataset dataset = Dataset::GaussianMixtureQ;
  std::size_t noise_dim = 4;
  std::size_t hidden = 16;
  std::size_t eval_samples = 64;
  double rho = 0.99;
  double eps = 1e-8;
  metrics::FeatureSpec features;
  /// Flip the sign of both losses (literal reading of the update lines).
  bool literal_signs = false;

  /// Throws InputError naming the first invalid field.
  void validate() const;
};

io::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are an InputError.
TrainConfig train_config_from_json(const io::json& j);

struct EvalRecord {
  int iteration = 0;
  double critic_loss = 0.0;     // mean f(real) - mean f(fake) on the evaluation sets
  double generator_loss = 0.0;  // -mean f(fake)
  double qwd_exact = 0.0;       // exact distance between the empirical evaluation sets
  double critic_estimate = 0.0; // critic_loss over the critic's Lipschitz bound
  double fid = 0.0;
  double is_score = 0.0;
  double is_std = 0.0;
};

io::json to_json(const EvalRecord& r);

struct TrainCounters {
  std::size_t critic_steps = 0;
  std::size_t generator_steps = 0;
  /// Critic steps taken between consecutive generator steps, min and max.
  std::size_t min_critic_run = 0;
  std::size_t max_critic_run = 0;
  /// Largest |component| of any critic parameter seen right after a clip.
  double max_abs_after_clip = 0.0;
};

struct Checkpoint {
  int format_version = io::kFormatVersion;
  Dataset dataset = Dataset::GaussianMixtureQ;
  std::size_t noise_dim = 0;
  int iteration = 0;
  qnn::Network generator;
  qnn::Network critic;
};

io::json to_json(const Checkpoint& c);
/// Throws InputError on a format_version other than the current one.
Checkpoint checkpoint_from_json(const io::json& j);

struct TrainReport {
  TrainConfig config;
  std::vector<EvalRecord> records;
  TrainCounters counters;
  double wall_seconds = 0.0;
};

/// Observer called after every critic step with the critic parameters.
using CriticStepHook = std::function<void(std::size_t step, const std::vector<qnn::ParamTensor>& critic)>;

struct TrainResult {
  TrainReport report;
  Checkpoint initial;
  Checkpoint final;
};

/// Weight-clipped adversarial training. Records are taken at iteration 0,
/// every eval_every iterations and at the end; iters = 0 yields no records.
/// Throws NumericError when a loss or parameter stops being finite.
TrainResult train(const TrainConfig& cfg, const CriticStepHook& hook = {});

/// Records as JSON lines.
std::string report_jsonl(const TrainReport& r);

Checkpoint initial_checkpoint(const TrainConfig& cfg);

/// Generator samples from seeded noise, one flat QVector per sample.
std::vector<QVector> sample_generator(const Checkpoint& ck, std::size_t count, std::uint64_t seed);

struct PotentialEstimate {
  double raw = 0.0;          // mean f(real) - mean f(fake)
  double lipschitz = 0.0;    // upper bound on the critic's Lipschitz constant
  double normalized = 0.0;   // raw / lipschitz, a lower bound on the exact distance
};

PotentialEstimate critic_as_potential(const qnn::Network& critic, const std::vector<QVector>& real,
                                      const std::vector<QVector>& fake);
PotentialEstimate critic_as_potential(const Checkpoint& ck, const std::vector<QVector>& real,
                                      const std::vector<QVector>& fake);

/// Trains only the critic on fixed sample sets; returns the normalized
/// estimate before the first step and after each step.
std::vector<double> fit_critic(qnn::Network& critic, const std::vector<QVector>& real,
                               const std::vector<QVector>& fake, int steps, const qnn::RMSPropConfig& opt,
                               double clip);

struct ContrastPoint {
  double shift = 0.0;
  double js = 0.0;
  double qwd = 0.0;
};

/// Real samples uniform on {0, i}, generated uniform on {t, t + i} for the
/// given real shifts t > 0: disjoint supports at every shift.
std::vector<ContrastPoint> js_contrast(const std::vector<double>& shifts);

}  // namespace qwgan::wqgan
