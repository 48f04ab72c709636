#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "qwgan/errors.hpp"
#include "qwgan/io.hpp"
#include "qwgan/metrics.hpp"
#include "qwgan/qlp.hpp"
#include "qwgan/qnn.hpp"
#include "qwgan/qwd.hpp"
#include "qwgan/wqgan.hpp"

#ifndef QWGAN_VERSION
#define QWGAN_VERSION "0.0.0"
#endif

namespace qwgan::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

constexpr const char* kSeedEnv = "QWGAN_SEED";

// A check that ran and failed; carries the report already printed.
struct CheckFailed {
  std::string what;
};

std::uint64_t default_seed() {
  const char* s = std::getenv(kSeedEnv);
  if (!s || !*s) return 0;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used == std::string(s).size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError(std::string(kSeedEnv) + " must be a nonnegative integer, got '" + s + "'");
}

// Collects everything a command emits so the manifest can hash it.
struct Context {
  std::ostringstream out;
  std::vector<std::pair<std::string, std::string>> artifacts;
  json config = json::object();
  std::uint64_t seed = 0;

  void write(const fs::path& p, const std::string& text) {
    io::write_text(p, text);
    artifacts.emplace_back(p.string(), io::sha256_hex(text));
  }
};

std::vector<QVector> read_samples(const fs::path& p) {
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InputError(p.string() + ": no .json sample files");
  } else {
    files.push_back(p);
  }
  std::vector<QVector> out;
  for (const auto& f : files) {
    const json j = io::read_json(f);
    const json& s = j.is_object() && j.contains("samples") ? j["samples"] : j;
    if (!s.is_array()) throw InputError(f.string() + ": expected {\"samples\": [...]}");
    for (const auto& v : s) out.push_back(io::qvector_from_json(v));
  }
  return out;
}

json samples_json(const std::vector<QVector>& xs) {
  json s = json::array();
  for (const auto& x : xs) s.push_back(io::to_json(x));
  return {{"format_version", io::kFormatVersion}, {"samples", std::move(s)}};
}

qwd::CostMatrix load_cost(const std::string& spec, const qwd::DiscreteDistribution& pr,
                          const qwd::DiscreteDistribution& pg) {
  if (spec == "euclid") return qwd::euclidean_cost(pr, pg);
  auto c = io::cost_from_json(io::read_json(spec));
  qwd::validate_cost(c, pr, pg);
  return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quaternion Wasserstein distances, LP duality probes and WQGAN training"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", QWGAN_VERSION);
  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "Write a run manifest to this file");

  Context ctx;
  std::function<void()> action;

  // qwd
  auto* c_qwd = app.add_subcommand("qwd", "Exact distance between two distribution files");
  std::string pr_file, pg_file, cost_spec = "euclid", plan_out;
  bool want_dual = false, renorm = false;
  c_qwd->add_option("--pr", pr_file, "Real distribution (JSON)")->required();
  c_qwd->add_option("--pg", pg_file, "Generated distribution (JSON)")->required();
  c_qwd->add_option("--cost", cost_spec, "euclid or a JSON cost matrix file");
  c_qwd->add_flag("--dual", want_dual, "Also solve the dual and report the gap");
  c_qwd->add_option("--plan", plan_out, "Write the transport plan here");
  c_qwd->add_flag("--renormalize", renorm, "Rescale real masses that do not sum to 1");
  c_qwd->callback([&] {
    action = [&] {
      ctx.config = {{"pr", pr_file}, {"pg", pg_file}, {"cost", cost_spec}, {"dual", want_dual}, {"plan", plan_out},
                    {"renormalize", renorm}};
      const auto pr = io::distribution_from_json(io::read_json(pr_file), renorm);
      const auto pg = io::distribution_from_json(io::read_json(pg_file), renorm);
      const auto cost = load_cost(cost_spec, pr, pg);
      const auto primal = qwd::qwd_primal(pr, pg, cost);
      json rep{{"mode", qwd::to_string(primal.mode)}, {"value", primal.value}};
      if (want_dual) {
        const auto dual = qwd::qwd_dual(pr, pg, cost);
        rep["dual"] = dual.value;
        rep["gap"] = primal.value - dual.value;
      }
      if (!plan_out.empty()) ctx.write(plan_out, io::dump(io::to_json(primal)));
      ctx.out << io::dump(rep);
    };
  });

  // farkas
  auto* c_farkas = app.add_subcommand("farkas", "Certificate for Upsilon Gamma = b, Gamma >= 0");
  std::string system_file;
  c_farkas->add_option("--system", system_file, "JSON {upsilon, b}")->required();
  c_farkas->callback([&] {
    action = [&] {
      ctx.config = {{"system", system_file}};
      const auto lp = io::qlp_from_json(io::read_json(system_file), false);
      try {
        const auto cert = qlp::farkas(lp.upsilon, lp.b);
        json rep = io::to_json(cert);
        const auto chk = qlp::validate_certificate(lp.upsilon, lp.b, cert);
        rep["valid"] = chk.valid;
        rep["residual"] = chk.residual;
        ctx.out << io::dump(rep);
        if (!chk.valid) throw CheckFailed{"certificate failed validation: " + chk.reason};
      } catch (const qlp::NoAlternativeError& e) {
        ctx.out << io::dump(json{{"format_version", io::kFormatVersion}, {"kind", "none"}, {"reason", e.what()}});
        throw InfeasibleError(e.what());
      }
    };
  });

  // gapscan
  auto* c_gap = app.add_subcommand("gapscan", "Random search for primal/dual gaps");
  int trials = 1000, top = 10;
  std::optional<std::uint64_t> gap_seed;
  bool real_b = false;
  c_gap->add_option("--trials", trials, "Number of random instances")->check(CLI::NonNegativeNumber);
  c_gap->add_option("--seed", gap_seed, "Seed (default from $QWGAN_SEED)");
  c_gap->add_flag("--real-b", real_b, "Restrict right-hand sides to real values");
  c_gap->add_option("--top", top, "How many of the largest gaps to list")->check(CLI::NonNegativeNumber);
  c_gap->callback([&] {
    action = [&] {
      ctx.seed = gap_seed.value_or(default_seed());
      ctx.config = {{"trials", trials}, {"seed", ctx.seed}, {"real_b", real_b}, {"top", top}};
      qlp::GapSearchBounds bounds;
      bounds.real_b = real_b;
      const auto rep = qlp::dual_gap_search(ctx.seed, trials, bounds);
      json gaps = json::array();
      for (std::size_t i = 0; i < rep.gaps.size() && i < static_cast<std::size_t>(top); ++i)
        gaps.push_back(io::to_json(rep.gaps[i]));
      json r{{"format_version", io::kFormatVersion},
             {"evaluated", rep.records.size()},
             {"skipped_infeasible", rep.skipped_infeasible},
             {"skipped_guard", rep.skipped_guard},
             {"gap_instances", rep.gaps.size()},
             {"max_gap", rep.max_gap},
             {"min_gap", rep.min_gap},
             {"gaps", std::move(gaps)}};
      if (!real_b) {
        // The smallest member of the family the search turns up.
        Eigen::MatrixXd U(2, 3);
        U << 1, 0, 1, 0, 1, 1;
        Eigen::VectorXd C(3);
        C << 1, 1, 1.5;
        const qlp::QuaternionLP lp(U, {Quaternion{1.0}, Quaternion::i()}, C);
        const double p = qlp::solve_qlp(lp).objective, d = qlp::solve_qlp_dual(lp).value;
        r["reference"] = io::to_json(qlp::GapRecord{lp, p, d, p - d});
      }
      ctx.out << io::dump(r);
    };
  });

  // project
  auto* c_proj = app.add_subcommand("project", "Projection onto a quaternion box and a separating hyperplane");
  std::string proj_file;
  c_proj->add_option("--input", proj_file, "JSON {s: [4 floats], y: [[w,x,y,z], ...]}")->required();
  c_proj->callback([&] {
    action = [&] {
      ctx.config = {{"input", proj_file}};
      const json j = io::read_json(proj_file);
      if (!j.contains("s") || !j.contains("y")) throw InputError("project: expected fields s and y");
      const Quaternion s = io::quaternion_from_json(j["s"]);
      const QVector y = io::qvector_from_json(j["y"]);
      const qlp::QuaternionBox box({s.w, s.x, s.y, s.z}, y.size());
      json r = io::to_json(qlp::project_box(box, y));
      r["format_version"] = io::kFormatVersion;
      r["contains"] = box.contains(y);
      if (!box.contains(y)) {
        try {
          const auto h = qlp::separate_box(box, y);
          r["separation"] = io::to_json(h);
          r["separation_valid"] = qlp::validate_separation(box, y, h);
        } catch (const std::exception& e) {
          r["separation_error"] = e.what();
        }
      }
      ctx.out << io::dump(r);
    };
  });

  // train
  auto* c_train = app.add_subcommand("train", "Adversarial training on a synthetic dataset");
  std::string config_file, out_dir, dataset_name, features_spec;
  wqgan::TrainConfig tc;
  std::optional<std::uint64_t> train_seed;
  int iters = tc.iters, ncritic = tc.n_critic, eval_every = tc.eval_every;
  std::size_t batch = tc.batch, noise_dim = tc.noise_dim, hidden = tc.hidden;
  double lr = tc.lr, clip = tc.clip;
  bool literal = false;
  c_train->add_option("--config", config_file, "JSON training configuration (flags override it)");
  auto* o_iters = c_train->add_option("--iters", iters, "Outer iterations");
  auto* o_batch = c_train->add_option("--batch", batch, "Samples per batch");
  auto* o_lr = c_train->add_option("--lr", lr, "Learning rate");
  auto* o_clip = c_train->add_option("--clip", clip, "Critic clipping bound");
  auto* o_ncritic = c_train->add_option("--ncritic", ncritic, "Critic updates per generator update");
  auto* o_eval = c_train->add_option("--eval-every", eval_every, "Iterations between evaluation records");
  auto* o_noise = c_train->add_option("--noise-dim", noise_dim, "Quaternion noise length");
  auto* o_hidden = c_train->add_option("--hidden", hidden, "Hidden width");
  auto* o_dataset = c_train->add_option("--dataset", dataset_name, "gaussian-mixture-q, two-moons-q or swatch8");
  auto* o_feat = c_train->add_option("--features", features_spec, "raw or proj:D:SEED");
  auto* o_lit = c_train->add_flag("--literal-signs", literal, "Flip both loss signs");
  c_train->add_option("--seed", train_seed, "Seed (default from $QWGAN_SEED)");
  c_train->add_option("--out", out_dir, "Output directory")->required();
  c_train->callback([&] {
    action = [&] {
      wqgan::TrainConfig cfg = config_file.empty() ? wqgan::TrainConfig{}
                                                   : wqgan::train_config_from_json(io::read_json(config_file));
      if (o_iters->count()) cfg.iters = iters;
      if (o_batch->count()) cfg.batch = batch;
      if (o_lr->count()) cfg.lr = lr;
      if (o_clip->count()) cfg.clip = clip;
      if (o_ncritic->count()) cfg.n_critic = ncritic;
      if (o_eval->count()) cfg.eval_every = eval_every;
      if (o_noise->count()) cfg.noise_dim = noise_dim;
      if (o_hidden->count()) cfg.hidden = hidden;
      if (o_dataset->count()) cfg.dataset = wqgan::dataset_from_string(dataset_name);
      if (o_feat->count()) cfg.features = metrics::FeatureSpec::parse(features_spec);
      if (o_lit->count()) cfg.literal_signs = literal;
      if (train_seed) cfg.seed = *train_seed;
      else if (config_file.empty() || !io::read_json(config_file).contains("seed")) cfg.seed = default_seed();
      cfg.validate();
      ctx.seed = cfg.seed;
      ctx.config = wqgan::to_json(cfg);
      const fs::path dir(out_dir);
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (!fs::is_directory(dir)) throw InputError("cannot create output directory " + out_dir);

      const auto res = wqgan::train(cfg);
      ctx.write(dir / "checkpoint_initial.json", io::dump(wqgan::to_json(res.initial)));
      if (cfg.iters > 0) {
        ctx.write(dir / "checkpoint_final.json", io::dump(wqgan::to_json(res.final)));
        ctx.write(dir / "report.jsonl", wqgan::report_jsonl(res.report));
      }
      const auto& k = res.report.counters;
      ctx.out << io::dump(json{{"iterations", cfg.iters},
                               {"critic_steps", k.critic_steps},
                               {"generator_steps", k.generator_steps},
                               {"max_abs_critic_after_clip", k.max_abs_after_clip},
                               {"records", res.report.records.size()},
                               {"final", res.report.records.empty() ? json(nullptr)
                                                                    : wqgan::to_json(res.report.records.back())}});
      err << "train: " << res.report.wall_seconds << " s\n";
      if (manifest_path.empty()) manifest_path = (dir / "manifest.json").string();
    };
  });

  // sample
  auto* c_sample = app.add_subcommand("sample", "Draw generator samples from a checkpoint");
  std::string ck_file, sample_out;
  std::size_t count = 16;
  std::optional<std::uint64_t> sample_seed;
  c_sample->add_option("--checkpoint", ck_file, "Checkpoint JSON")->required();
  c_sample->add_option("--count", count, "Number of samples");
  c_sample->add_option("--seed", sample_seed, "Seed (default from $QWGAN_SEED)");
  c_sample->add_option("--out", sample_out, "Write samples here instead of stdout");
  c_sample->callback([&] {
    action = [&] {
      ctx.seed = sample_seed.value_or(default_seed());
      ctx.config = {{"checkpoint", ck_file}, {"count", count}, {"seed", ctx.seed}, {"out", sample_out}};
      const auto ck = wqgan::checkpoint_from_json(io::read_json(ck_file));
      const std::string text = io::dump(samples_json(wqgan::sample_generator(ck, count, ctx.seed)));
      if (sample_out.empty())
        ctx.out << text;
      else
        ctx.write(sample_out, text);
    };
  });

  // metrics
  auto* c_metrics = app.add_subcommand("metrics", "FID or inception score of sample sets");
  bool want_fid = false, want_is = false;
  std::string real_path, fake_path, feat = "raw", classifier = "uniform";
  std::size_t splits = 10;
  auto* f_fid = c_metrics->add_flag("--fid", want_fid, "Frechet distance between --real and --fake");
  auto* f_is = c_metrics->add_flag("--is", want_is, "Inception score of --fake");
  f_fid->excludes(f_is);
  c_metrics->add_option("--real", real_path, "Samples file or directory");
  c_metrics->add_option("--fake", fake_path, "Samples file or directory")->required();
  c_metrics->add_option("--features", feat, "raw or proj:D:SEED");
  c_metrics->add_option("--classifier", classifier, "uniform or a dataset name");
  c_metrics->add_option("--splits", splits, "Inception score splits");
  c_metrics->callback([&] {
    action = [&] {
      if (!want_fid && !want_is) throw InputError("metrics: choose --fid or --is");
      const auto fake = read_samples(fake_path);
      if (want_fid) {
        if (real_path.empty()) throw InputError("metrics: --fid needs --real");
        const auto spec = metrics::FeatureSpec::parse(feat);
        ctx.config = {{"real", real_path}, {"fake", fake_path}, {"features", spec.to_string()}};
        const auto real = read_samples(real_path);
        const double v = metrics::fid(metrics::feature_extract(real, spec), metrics::feature_extract(fake, spec));
        ctx.out << io::dump(json{{"metric", "fid"}, {"value", v}, {"config", ctx.config}});
      } else {
        ctx.config = {{"fake", fake_path}, {"classifier", classifier}, {"splits", splits}};
        metrics::Classifier clf;
        if (classifier == "uniform") {
          clf = [](std::span<const Quaternion>) { return Eigen::VectorXd::Constant(10, 0.1).eval(); };
        } else {
          clf = wqgan::dataset_classifier(wqgan::dataset_from_string(classifier));
        }
        const auto s = metrics::inception_score(fake, clf, splits);
        ctx.out << io::dump(json{{"metric", "is"}, {"value", s.mean}, {"std", s.std}, {"config", ctx.config}});
      }
    };
  });

  // gradcheck
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer's backward pass");
  std::optional<std::uint64_t> grad_seed;
  std::string arch = "small", fault = "none";
  c_grad->add_option("--seed", grad_seed, "Seed (default from $QWGAN_SEED)");
  c_grad->add_option("--arch", arch, "small or default")->check(CLI::IsMember({"small", "default"}));
  c_grad->add_option("--inject-fault", fault, "Test hook: none or qlinear-sign")
      ->check(CLI::IsMember({"none", "qlinear-sign"}));
  c_grad->callback([&] {
    action = [&] {
      ctx.seed = grad_seed.value_or(default_seed());
      ctx.config = {{"seed", ctx.seed}, {"arch", arch}, {"inject_fault", fault}};
      qnn::set_fault(fault == "none" ? qnn::Fault::None : qnn::Fault::QLinearSignFlip);
      qnn::GradcheckReport rep;
      try {
        rep = qnn::gradcheck(ctx.seed, arch == "small" ? qnn::GradcheckArch::Small : qnn::GradcheckArch::Default);
      } catch (...) {
        qnn::set_fault(qnn::Fault::None);
        throw;
      }
      qnn::set_fault(qnn::Fault::None);
      json layers = json::array();
      for (const auto& l : rep.layers)
        layers.push_back({{"layer", l.layer},
                          {"checked", l.checked},
                          {"max_rel", l.max_rel},
                          {"max_abs", l.max_abs},
                          {"pass", l.pass}});
      json r{{"pass", rep.pass}, {"layers", std::move(layers)}};
      if (!rep.pass) r["failing_layer"] = rep.first_failure;
      ctx.out << io::dump(r);
      if (!rep.pass) throw CheckFailed{"gradcheck failed in layer " + rep.first_failure};
    };
  });

  // replay
  auto* c_replay = app.add_subcommand("replay", "Re-run a manifest and compare every artifact hash");
  std::string replay_file;
  c_replay->add_option("manifest", replay_file, "Manifest JSON")->required();
  c_replay->callback([&] {
    action = [&] {
      const json m = io::read_json(replay_file);
      if (!m.contains("config") || !m["config"].contains("argv") || !m.contains("artifacts"))
        throw InputError(replay_file + ": not a run manifest");
      std::vector<std::string> argv = m["config"]["argv"].get<std::vector<std::string>>();
      // Commands that took their seed from the environment get the recorded one.
      if (m.contains("seed")) ::setenv(kSeedEnv, std::to_string(m["seed"].get<std::uint64_t>()).c_str(), 1);
      std::ostringstream o, e;
      const int code = run(argv, o, e);
      if (code != kOk) throw CheckFailed{"replayed command exited with " + std::to_string(code) + ": " + e.str()};
      json diffs = json::array();
      for (const auto& [name, hash] : m["artifacts"].items()) {
        const std::string now = name == "stdout" ? io::sha256_hex(o.str()) : io::sha256_file(name);
        if (now != hash.get<std::string>()) diffs.push_back(name);
      }
      ctx.out << io::dump(json{{"manifest", replay_file}, {"identical", diffs.empty()}, {"differing", diffs}});
      if (!diffs.empty()) throw CheckFailed{"replay produced different artifacts"};
    };
  });

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  int code = kOk;
  try {
    action();
  } catch (const CheckFailed& e) {
    err << "check failed: " << e.what << "\n";
    code = kCheckFailed;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    code = kInfeasible;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    code = kNumeric;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  const std::string text = ctx.out.str();
  out << text;
  if (!manifest_path.empty()) {
    std::vector<std::string> argv;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--manifest") {
        ++i;
        continue;
      }
      if (args[i].rfind("--manifest=", 0) == 0) continue;
      argv.push_back(args[i]);
    }
    io::RunManifest m;
    m.command = argv.empty() ? "" : argv.front();
    m.config = ctx.config;
    m.config["argv"] = argv;
    m.seed = ctx.seed;
    m.artifacts = ctx.artifacts;
    m.artifacts.emplace_back("stdout", io::sha256_hex(text));
    m.tool_version = QWGAN_VERSION;
    try {
      io::write_text(manifest_path, io::dump(io::to_json(m)));
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return code == kOk ? kInputError : code;
    }
  }
  return code;
}

}  // namespace qwgan::cli
