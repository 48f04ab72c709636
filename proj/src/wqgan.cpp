#include "qwgan/wqgan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qwgan/errors.hpp"
#include "qwgan/qwd.hpp"

namespace qwgan::wqgan {

using qnn::LayerSpec;
using qnn::Network;
using qnn::NetworkSpec;
using qnn::Tape;

namespace {

constexpr double kMixtureMean = 0.5;
constexpr double kMixtureSd = 0.1;
constexpr double kMoonNoise = 0.05;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

// Point on moon `which` at parameter t in [0, pi], mapped into [-0.9, 0.9]^2.
std::pair<double, double> moon_point(int which, double t) {
  double u = std::cos(t), v = std::sin(t);
  if (which == 1) {
    u = 1.0 - u;
    v = 0.5 - v;
  }
  return {(u - 0.5) / 1.5 * 0.9, (v - 0.25) / 0.75 * 0.9};
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

void check_finite(double v, const std::string& what, int iteration) {
  if (!std::isfinite(v))
    throw NumericError(what + " is not finite at iteration " + std::to_string(iteration) + " (value " +
                       std::to_string(v) + ")");
}

void check_finite(const std::vector<qnn::ParamTensor>& ps, const std::string& net, int iteration) {
  for (const auto& p : ps)
    if (!p.value.all_finite())
      throw NumericError(net + " parameter " + p.name + " is not finite at iteration " + std::to_string(iteration));
}

double mean_score(const Network& critic, const QTensor& x) {
  const QTensor out = critic.infer(x);
  double s = 0.0;
  for (double v : out.c[0]) s += v;
  return s / static_cast<double>(out.c[0].size());
}

QTensor batch_from_rows(const std::vector<QVector>& rows, const Shape& per_sample) {
  QTensor t = from_rows(rows);
  Shape s{rows.size()};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  if (numel(s) != t.size()) throw InputError("samples do not match the network input " + shape_string(per_sample));
  t.shape = std::move(s);
  return t;
}

}  // namespace

const char* to_string(Dataset d) {
  switch (d) {
    case Dataset::GaussianMixtureQ: return "gaussian-mixture-q";
    case Dataset::TwoMoonsQ: return "two-moons-q";
    case Dataset::Swatch8: return "swatch8";
  }
  return "unknown";
}

Dataset dataset_from_string(const std::string& s) {
  for (auto d : {Dataset::GaussianMixtureQ, Dataset::TwoMoonsQ, Dataset::Swatch8})
    if (s == to_string(d)) return d;
  throw InputError("unknown dataset '" + s + "' (expected gaussian-mixture-q, two-moons-q or swatch8)");
}

Shape sample_shape(Dataset d) { return d == Dataset::Swatch8 ? Shape{1, 8, 8} : Shape{1}; }

QTensor sample_real(Dataset d, std::size_t m, std::mt19937_64& rng) {
  Shape s{m};
  const Shape per = sample_shape(d);
  s.insert(s.end(), per.begin(), per.end());
  QTensor out(s);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (d) {
    case Dataset::GaussianMixtureQ:
      for (std::size_t i = 0; i < m; ++i) {
        const double mu = unit(rng) < 0.5 ? kMixtureMean : -kMixtureMean;
        for (std::size_t l = 0; l < 4; ++l) out.c[l][i] = clamp1(mu + kMixtureSd * normal(rng));
      }
      break;
    case Dataset::TwoMoonsQ:
      for (std::size_t i = 0; i < m; ++i) {
        const int which = unit(rng) < 0.5 ? 0 : 1;
        const auto [u, v] = moon_point(which, std::numbers::pi * unit(rng));
        out.c[0][i] = clamp1(u + kMoonNoise * normal(rng));
        out.c[1][i] = clamp1(v + kMoonNoise * normal(rng));
      }
      break;
    case Dataset::Swatch8:
      for (std::size_t i = 0; i < m; ++i) {
        double base[3], ramp[3];
        for (int ch = 0; ch < 3; ++ch) {
          base[ch] = -0.6 + 1.2 * unit(rng);
          ramp[ch] = 0.4 * unit(rng);
        }
        const double angle = 2.0 * std::numbers::pi * unit(rng);
        const double cu = std::cos(angle), su = std::sin(angle);
        for (std::size_t py = 0; py < 8; ++py)
          for (std::size_t px = 0; px < 8; ++px) {
            const double pos = ((static_cast<double>(px) - 3.5) * cu + (static_cast<double>(py) - 3.5) * su) / 3.5;
            for (int ch = 0; ch < 3; ++ch)
              out.c[ch + 1][i * 64 + py * 8 + px] = clamp1(base[ch] + ramp[ch] * pos);
          }
      }
      break;
  }
  return out;
}

QTensor sample_noise(std::size_t m, std::size_t noise_dim, std::mt19937_64& rng) {
  QTensor z({m, noise_dim});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t l = 0; l < 4; ++l) z.c[l][i] = normal(rng);
  return z;
}

metrics::Classifier dataset_classifier(Dataset d) {
  switch (d) {
    case Dataset::GaussianMixtureQ:
      return [](std::span<const Quaternion> x) {
        Eigen::VectorXd logits(2);
        for (int k = 0; k < 2; ++k) {
          const double mu = k == 0 ? kMixtureMean : -kMixtureMean;
          double d2 = 0.0;
          for (std::size_t l = 0; l < 4; ++l) d2 += (x[0][l] - mu) * (x[0][l] - mu);
          logits(k) = -d2 / (2.0 * kMixtureSd * kMixtureSd);
        }
        return softmax(logits);
      };
    case Dataset::TwoMoonsQ:
      return [](std::span<const Quaternion> x) {
        Eigen::VectorXd logits(2);
        for (int k = 0; k < 2; ++k) {
          double best = std::numeric_limits<double>::infinity();
          for (int s = 0; s <= 64; ++s) {
            const auto [u, v] = moon_point(k, std::numbers::pi * s / 64.0);
            best = std::min(best, (x[0].w - u) * (x[0].w - u) + (x[0].x - v) * (x[0].x - v));
          }
          logits(k) = -best / (2.0 * 0.1 * 0.1);
        }
        return softmax(logits);
      };
    case Dataset::Swatch8:
      return [](std::span<const Quaternion> x) {
        Eigen::VectorXd logits = Eigen::VectorXd::Zero(3);
        for (const auto& q : x) logits += Eigen::Vector3d(q.x, q.y, q.z);
        return softmax(logits * (8.0 / static_cast<double>(x.size())));
      };
  }
  throw InputError("unknown dataset");
}

NetworkSpec generator_spec(Dataset d, std::size_t noise_dim, std::size_t hidden) {
  if (d == Dataset::Swatch8)
    return {{noise_dim},
            {LayerSpec::linear(noise_dim, hidden), LayerSpec::relu(), LayerSpec::linear(hidden, 32),
             LayerSpec::relu(), LayerSpec::reshape({2, 4, 4}), LayerSpec::deconv(2, 1, 4, 2, 1), LayerSpec::tanh(),
             LayerSpec::zero_real()}};
  return {{noise_dim},
          {LayerSpec::linear(noise_dim, hidden), LayerSpec::relu(), LayerSpec::linear(hidden, hidden),
           LayerSpec::relu(), LayerSpec::linear(hidden, 1), LayerSpec::tanh()}};
}

NetworkSpec critic_spec(Dataset d, std::size_t hidden) {
  if (d == Dataset::Swatch8)
    return {{1, 8, 8},
            {LayerSpec::conv(1, 4, 4, 2, 1), LayerSpec::leaky_relu(0.2), LayerSpec::reshape({64}),
             LayerSpec::linear(64, hidden), LayerSpec::leaky_relu(0.2), LayerSpec::linear(hidden, 1)}};
  return {{1},
          {LayerSpec::linear(1, hidden), LayerSpec::leaky_relu(0.2), LayerSpec::linear(hidden, hidden),
           LayerSpec::leaky_relu(0.2), LayerSpec::linear(hidden, 1)}};
}

void TrainConfig::validate() const {
  if (iters < 0) throw InputError("iters must be >= 0");
  if (batch == 0) throw InputError("batch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InputError("lr must be positive");
  if (!(clip > 0.0) || !std::isfinite(clip)) throw InputError("clip must be positive");
  if (n_critic <= 0) throw InputError("n_critic must be positive");
  if (eval_every <= 0) throw InputError("eval_every must be positive");
  if (noise_dim == 0) throw InputError("noise_dim must be positive");
  if (hidden == 0) throw InputError("hidden must be positive");
  if (eval_samples < 2) throw InputError("eval_samples must be at least 2");
  if (!(rho >= 0.0 && rho < 1.0)) throw InputError("rho must lie in [0, 1)");
  if (!(eps > 0.0)) throw InputError("eps must be positive");
}

io::json to_json(const TrainConfig& c) {
  return {{"iters", c.iters},
          {"batch", c.batch},
          {"lr", c.lr},
          {"clip", c.clip},
          {"n_critic", c.n_critic},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"dataset", to_string(c.dataset)},
          {"noise_dim", c.noise_dim},
          {"hidden", c.hidden},
          {"eval_samples", c.eval_samples},
          {"rho", c.rho},
          {"eps", c.eps},
          {"features", c.features.to_string()},
          {"literal_signs", c.literal_signs}};
}

TrainConfig train_config_from_json(const io::json& j) {
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "iters") c.iters = v.get<int>();
      else if (key == "batch") c.batch = v.get<std::size_t>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "clip") c.clip = v.get<double>();
      else if (key == "n_critic") c.n_critic = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "eval_every") c.eval_every = v.get<int>();
      else if (key == "dataset") c.dataset = dataset_from_string(v.get<std::string>());
      else if (key == "noise_dim") c.noise_dim = v.get<std::size_t>();
      else if (key == "hidden") c.hidden = v.get<std::size_t>();
      else if (key == "eval_samples") c.eval_samples = v.get<std::size_t>();
      else if (key == "rho") c.rho = v.get<double>();
      else if (key == "eps") c.eps = v.get<double>();
      else if (key == "features") c.features = metrics::FeatureSpec::parse(v.get<std::string>());
      else if (key == "literal_signs") c.literal_signs = v.get<bool>();
      else throw InputError("config: unknown key '" + key + "'");
    }
  } catch (const io::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

io::json to_json(const EvalRecord& r) {
  return {{"iteration", r.iteration},   {"critic_loss", r.critic_loss},
          {"generator_loss", r.generator_loss}, {"qwd_exact", r.qwd_exact},
          {"critic_estimate", r.critic_estimate}, {"fid", r.fid},
          {"is_score", r.is_score},     {"is_std", r.is_std}};
}

io::json to_json(const Checkpoint& c) {
  return {{"format_version", c.format_version}, {"dataset", to_string(c.dataset)},
          {"noise_dim", c.noise_dim},           {"iteration", c.iteration},
          {"generator", io::to_json(c.generator)}, {"critic", io::to_json(c.critic)}};
}

Checkpoint checkpoint_from_json(const io::json& j) {
  if (!j.is_object() || !j.contains("format_version") || !j["format_version"].is_number_integer())
    throw InputError("checkpoint: missing format_version");
  const int v = j["format_version"].get<int>();
  if (v != io::kFormatVersion)
    throw InputError("checkpoint: format_version " + std::to_string(v) + " does not match supported version " +
                     std::to_string(io::kFormatVersion));
  Checkpoint c;
  try {
    c.dataset = dataset_from_string(j.at("dataset").get<std::string>());
    c.noise_dim = j.at("noise_dim").get<std::size_t>();
    c.iteration = j.at("iteration").get<int>();
  } catch (const io::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  if (!j.contains("generator") || !j.contains("critic")) throw InputError("checkpoint: missing network");
  c.generator = io::network_from_json(j["generator"]);
  c.critic = io::network_from_json(j["critic"]);
  if (c.generator.spec().input != Shape{c.noise_dim}) throw InputError("checkpoint: noise_dim does not match generator");
  if (c.generator.spec().output() != c.critic.spec().input)
    throw InputError("checkpoint: generator output does not feed the critic");
  return c;
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ck;
  ck.dataset = cfg.dataset;
  ck.noise_dim = cfg.noise_dim;
  ck.generator = Network(generator_spec(cfg.dataset, cfg.noise_dim, cfg.hidden), stream(cfg.seed, 1)());
  ck.critic = Network(critic_spec(cfg.dataset, cfg.hidden), stream(cfg.seed, 2)());
  qnn::clip_params(ck.critic.params(), cfg.clip);
  return ck;
}

namespace {

struct EvalSets {
  QTensor real;
  std::vector<QVector> real_rows;
  metrics::FeatureStats real_stats;
  QTensor noise;
};

EvalRecord evaluate(const TrainConfig& cfg, const Checkpoint& ck, const EvalSets& ev, int iteration) {
  EvalRecord r;
  r.iteration = iteration;
  const QTensor fake = ck.generator.infer(ev.noise);
  const auto fake_rows = to_rows(fake);
  const double fr = mean_score(ck.critic, ev.real), ff = mean_score(ck.critic, fake);
  r.critic_loss = fr - ff;
  r.generator_loss = -ff;
  r.critic_estimate = r.critic_loss / qnn::network_lipschitz_bound(ck.critic);
  r.qwd_exact =
      qwd::qwd_primal(qwd::DiscreteDistribution::empirical(ev.real_rows), qwd::DiscreteDistribution::empirical(fake_rows))
          .value;
  r.fid = metrics::fid(ev.real_stats, metrics::feature_extract(fake_rows, cfg.features));
  const auto is = metrics::inception_score(fake_rows, dataset_classifier(cfg.dataset),
                                           std::min<std::size_t>(10, fake_rows.size()));
  r.is_score = is.mean;
  r.is_std = is.std;
  for (double v : {r.critic_loss, r.generator_loss, r.critic_estimate, r.qwd_exact, r.fid, r.is_score, r.is_std})
    check_finite(v, "evaluation record", iteration);
  return r;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const CriticStepHook& hook) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  res.report.config = cfg;
  res.initial = initial_checkpoint(cfg);
  Checkpoint ck = res.initial;
  auto data_rng = stream(cfg.seed, 3), noise_rng = stream(cfg.seed, 4), eval_rng = stream(cfg.seed, 5);

  EvalSets ev;
  ev.real = sample_real(cfg.dataset, cfg.eval_samples, eval_rng);
  ev.real_rows = to_rows(ev.real);
  ev.real_stats = metrics::feature_extract(ev.real_rows, cfg.features);
  ev.noise = sample_noise(cfg.eval_samples, cfg.noise_dim, eval_rng);

  const qnn::RMSPropConfig opt{cfg.lr, cfg.rho, cfg.eps};
  qnn::RMSProp opt_d(opt), opt_g(opt);
  auto& C = ck.critic.params();
  auto& G = ck.generator.params();
  const double sign = cfg.literal_signs ? -1.0 : 1.0;
  TrainCounters& cnt = res.report.counters;
  std::size_t run = 0;

  if (cfg.iters > 0) res.report.records.push_back(evaluate(cfg, ck, ev, 0));
  for (int it = 1; it <= cfg.iters; ++it) {
    for (int j = 0; j < cfg.n_critic; ++j) {
      const QTensor z = sample_noise(cfg.batch, cfg.noise_dim, noise_rng);
      const QTensor x = sample_real(cfg.dataset, cfg.batch, data_rng);
      const QTensor fake = ck.generator.infer(z);
      Tape t;
      const auto fr = t.mean_real(ck.critic.forward(t, t.input(x)));
      const auto ff = t.mean_real(ck.critic.forward(t, t.input(fake)));
      // Ascent on mean f(real) - mean f(fake) is descent on its negation.
      const auto loss = t.scale(t.sub(ff, fr), sign);
      check_finite(t.value(loss).c[0][0], "critic loss", it);
      opt_d.step(C, t.backward(loss));
      qnn::clip_params(C, cfg.clip);
      check_finite(C, "critic", it);
      ++cnt.critic_steps;
      ++run;
      cnt.max_abs_after_clip = std::max(cnt.max_abs_after_clip, qnn::max_abs_param(C));
      if (hook) hook(cnt.critic_steps, C);
    }
    {
      const QTensor z = sample_noise(cfg.batch, cfg.noise_dim, noise_rng);
      Tape t;
      const auto score = t.mean_real(ck.critic.forward(t, ck.generator.forward(t, t.input(z))));
      const auto loss = t.scale(score, -sign);
      check_finite(t.value(loss).c[0][0], "generator loss", it);
      const auto grads = t.backward(loss);
      opt_g.step(G, grads);
      check_finite(G, "generator", it);
      cnt.min_critic_run = cnt.generator_steps == 0 ? run : std::min(cnt.min_critic_run, run);
      cnt.max_critic_run = std::max(cnt.max_critic_run, run);
      run = 0;
      ++cnt.generator_steps;
    }
    ck.iteration = it;
    if (it % cfg.eval_every == 0 || it == cfg.iters) res.report.records.push_back(evaluate(cfg, ck, ev, it));
  }
  res.final = std::move(ck);
  res.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::string report_jsonl(const TrainReport& r) {
  std::string out;
  for (const auto& rec : r.records) out += to_json(rec).dump() + "\n";
  return out;
}

std::vector<QVector> sample_generator(const Checkpoint& ck, std::size_t count, std::uint64_t seed) {
  if (count == 0) return {};
  auto rng = stream(seed, 6);
  return to_rows(ck.generator.infer(sample_noise(count, ck.noise_dim, rng)));
}

PotentialEstimate critic_as_potential(const Network& critic, const std::vector<QVector>& real,
                                      const std::vector<QVector>& fake) {
  if (real.empty() || fake.empty()) throw InputError("critic_as_potential: empty sample set");
  PotentialEstimate e;
  e.raw = mean_score(critic, batch_from_rows(real, critic.spec().input)) -
          mean_score(critic, batch_from_rows(fake, critic.spec().input));
  e.lipschitz = qnn::network_lipschitz_bound(critic);
  e.normalized = e.lipschitz > 0.0 ? e.raw / e.lipschitz : 0.0;
  return e;
}

PotentialEstimate critic_as_potential(const Checkpoint& ck, const std::vector<QVector>& real,
                                      const std::vector<QVector>& fake) {
  return critic_as_potential(ck.critic, real, fake);
}

std::vector<double> fit_critic(Network& critic, const std::vector<QVector>& real, const std::vector<QVector>& fake,
                               int steps, const qnn::RMSPropConfig& opt, double clip) {
  const QTensor x = batch_from_rows(real, critic.spec().input), y = batch_from_rows(fake, critic.spec().input);
  qnn::RMSProp rms(opt);
  std::vector<double> trace{critic_as_potential(critic, real, fake).normalized};
  for (int s = 0; s < steps; ++s) {
    Tape t;
    const auto loss = t.sub(t.mean_real(critic.forward(t, t.input(y))), t.mean_real(critic.forward(t, t.input(x))));
    rms.step(critic.params(), t.backward(loss));
    qnn::clip_params(critic.params(), clip);
    trace.push_back(critic_as_potential(critic, real, fake).normalized);
  }
  return trace;
}

std::vector<ContrastPoint> js_contrast(const std::vector<double>& shifts) {
  std::vector<ContrastPoint> out;
  const double half[2] = {0.5, 0.5};
  const auto pr = qwd::DiscreteDistribution::real_pmf(1, {{Quaternion{0.0}}, {Quaternion::i()}}, half);
  for (double t : shifts) {
    if (!(t > 0.0)) throw InputError("js_contrast: shifts must be positive");
    const auto pg =
        qwd::DiscreteDistribution::real_pmf(1, {{Quaternion{t}}, {Quaternion{t} + Quaternion::i()}}, half);
    out.push_back({t, qwd::js_divergence(pr, pg), qwd::qwd_primal(pr, pg).value});
  }
  return out;
}

}  // namespace qwgan::wqgan
