// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/experiment.hpp"

#include "latmet/noise.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <utility>

namespace latmet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Master-seed stream tags for the pipeline stages.
constexpr std::uint64_t kWorldStage = 1;
constexpr std::uint64_t kTrainStage = 2;
constexpr std::uint64_t kEvalStage = 3;

// ---------------------------------------------------------------------------
// JSON plumbing
// ---------------------------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!obj.is_object())
    throw ConfigError("config: " + context + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("config: unknown key '" + it.key() + "' in " +
                        context);
  }
}

attack::AttackConfig parse_attack(const json& j, attack::AttackConfig base,
                                  const std::string& context) {
  check_keys(j, {"steps", "step_size", "restarts", "initial_rho", "shrink",
                 "seed"},
             context);
  base.steps = j.value("steps", base.steps);
  base.step_size = j.value("step_size", base.step_size);
  base.restarts = j.value("restarts", base.restarts);
  base.initial_rho = j.value("initial_rho", base.initial_rho);
  base.shrink = j.value("shrink", base.shrink);
  base.seed = j.value("seed", base.seed);
  return base;
}

json attack_to_json(const attack::AttackConfig& a) {
  return json{{"steps", a.steps},       {"step_size", a.step_size},
              {"restarts", a.restarts}, {"initial_rho", a.initial_rho},
              {"shrink", a.shrink},     {"seed", a.seed}};
}

train::WorldConfig parse_world(const json& j) {
  check_keys(j,
             {"classes", "latent_dim", "input_dim", "separation", "train_size",
              "val_size", "test_size", "decoder_seeds", "label_prior",
              "inversion"},
             "world");
  train::WorldConfig w;
  w.num_classes = j.value("classes", w.num_classes);
  w.latent_dim = j.value("latent_dim", w.latent_dim);
  w.input_dim = j.value("input_dim", w.input_dim);
  w.separation = j.value("separation", w.separation);
  w.train_size = j.value("train_size", w.train_size);
  w.val_size = j.value("val_size", w.val_size);
  w.test_size = j.value("test_size", w.test_size);
  w.decoder_seeds =
      j.value("decoder_seeds", std::vector<std::uint64_t>{});
  w.label_prior = j.value("label_prior", std::vector<double>{});
  if (j.contains("inversion")) {
    const json& inv = j["inversion"];
    check_keys(inv, {"restarts", "steps", "initial_step", "stop_residual"},
               "world.inversion");
    w.inversion.restarts = inv.value("restarts", w.inversion.restarts);
    w.inversion.steps = inv.value("steps", w.inversion.steps);
    w.inversion.initial_step =
        inv.value("initial_step", w.inversion.initial_step);
    w.inversion.stop_residual =
        inv.value("stop_residual", w.inversion.stop_residual);
  }
  return w;
}

json world_to_json(const train::WorldConfig& w) {
  return json{{"classes", w.num_classes},
              {"latent_dim", w.latent_dim},
              {"input_dim", w.input_dim},
              {"separation", w.separation},
              {"train_size", w.train_size},
              {"val_size", w.val_size},
              {"test_size", w.test_size},
              {"decoder_seeds", w.decoder_seeds},
              {"label_prior", w.label_prior},
              {"inversion",
               json{{"restarts", w.inversion.restarts},
                    {"steps", w.inversion.steps},
                    {"initial_step", w.inversion.initial_step},
                    {"stop_residual", w.inversion.stop_residual}}}};
}

train::TrainConfig parse_training(const json& j) {
  check_keys(j,
             {"max_epochs", "samples_per_epoch", "batch_size", "learning_rate",
              "lr_decay", "early_stop", "noise_sigma", "augment",
              "hidden_width", "hidden_layers"},
             "training");
  train::TrainConfig t;
  t.max_epochs = j.value("max_epochs", t.max_epochs);
  t.samples_per_epoch = j.value("samples_per_epoch", t.samples_per_epoch);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.lr_decay = j.value("lr_decay", t.lr_decay);
  t.early_stop = j.value("early_stop", t.early_stop);
  t.noise_sigma = j.value("noise_sigma", t.noise_sigma);
  t.hidden_width = j.value("hidden_width", t.hidden_width);
  t.hidden_layers = j.value("hidden_layers", t.hidden_layers);
  if (j.contains("augment")) {
    const json& a = j["augment"];
    check_keys(a, {"gain_range", "shift_range", "mask_fraction"},
               "training.augment");
    t.augment.gain_range = a.value("gain_range", t.augment.gain_range);
    t.augment.shift_range = a.value("shift_range", t.augment.shift_range);
    t.augment.mask_fraction =
        a.value("mask_fraction", t.augment.mask_fraction);
  }
  return t;
}

json training_to_json(const train::TrainConfig& t) {
  return json{{"max_epochs", t.max_epochs},
              {"samples_per_epoch", t.samples_per_epoch},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"lr_decay", t.lr_decay},
              {"early_stop", t.early_stop},
              {"noise_sigma", t.noise_sigma},
              {"augment",
               json{{"gain_range", t.augment.gain_range},
                    {"shift_range", t.augment.shift_range},
                    {"mask_fraction", t.augment.mask_fraction}}},
              {"hidden_width", t.hidden_width},
              {"hidden_layers", t.hidden_layers}};
}

MetricPlan parse_metrics(const json& j) {
  check_keys(j,
             {"names", "epsilons", "rhos", "lga_samples", "adv_samples",
              "eval_points", "llna_samples", "llna_points", "noise_sigma",
              "bounded_attack", "min_norm_attack", "original_attack"},
             "metrics");
  MetricPlan p;
  p.names = j.value("names", p.names);
  p.epsilons = j.value("epsilons", p.epsilons);
  p.rhos = j.value("rhos", p.rhos);
  p.lga_samples = j.value("lga_samples", p.lga_samples);
  p.adv_samples = j.value("adv_samples", p.adv_samples);
  p.eval_points = j.value("eval_points", p.eval_points);
  p.llna_samples = j.value("llna_samples", p.llna_samples);
  p.llna_points = j.value("llna_points", p.llna_points);
  p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
  if (j.contains("bounded_attack"))
    p.bounded = parse_attack(j["bounded_attack"], p.bounded,
                             "metrics.bounded_attack");
  if (j.contains("min_norm_attack"))
    p.min_norm = parse_attack(j["min_norm_attack"], p.min_norm,
                              "metrics.min_norm_attack");
  if (j.contains("original_attack"))
    p.original = parse_attack(j["original_attack"], p.original,
                              "metrics.original_attack");
  return p;
}

json metrics_to_json(const MetricPlan& p) {
  return json{{"names", p.names},
              {"epsilons", p.epsilons},
              {"rhos", p.rhos},
              {"lga_samples", p.lga_samples},
              {"adv_samples", p.adv_samples},
              {"eval_points", p.eval_points},
              {"llna_samples", p.llna_samples},
              {"llna_points", p.llna_points},
              {"noise_sigma", p.noise_sigma},
              {"bounded_attack", attack_to_json(p.bounded)},
              {"min_norm_attack", attack_to_json(p.min_norm)},
              {"original_attack", attack_to_json(p.original)}};
}

json config_to_json(const ExperimentConfig& c) {
  return json{{"seed", c.seed},
              {"world", world_to_json(c.world)},
              {"training", training_to_json(c.training)},
              {"variants", c.variants},
              {"metrics", metrics_to_json(c.metrics)}};
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return json(v).dump();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void append_run_log(const fs::path& out_dir, const std::string& line) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  std::ofstream log(out_dir / "run_log.txt", std::ios::app);
  if (log) log << stamp << " " << line << "\n";
}

// ---------------------------------------------------------------------------
// World files
// ---------------------------------------------------------------------------

std::uint64_t stage_seed(const ExperimentConfig& c, std::uint64_t stage) {
  return Rng(c.seed).derive(stage).seed();
}

train::World load_world_files(const ExperimentConfig& config,
                              const fs::path& world_dir) {
  json meta = read_json(world_dir / "world.json");
  if (meta.value("world_hash", "") != world_hash(config))
    throw ConfigError(
        "world files in " + world_dir.string() +
        " were built from a different configuration; rerun `latmet world`");
  std::vector<GenerativePair> pairs;
  for (int i = 0; i < config.world.num_classes; ++i) {
    GroundTruthDecoder dec = load_decoder(
        world_dir / ("decoder_" + std::to_string(i) + ".bin"));
    if (dec.class_index() != i)
      throw ConfigError("decoder file class index mismatch");
    pairs.push_back({std::move(dec), config.world.inversion});
  }
  metrics::LabelPrior prior =
      config.world.label_prior.empty()
          ? metrics::LabelPrior::uniform(config.world.num_classes)
          : metrics::LabelPrior(Eigen::Map<const Vector>(
                config.world.label_prior.data(),
                static_cast<Eigen::Index>(config.world.label_prior.size())));
  return train::World{std::move(pairs), prior,
                      load_dataset(world_dir / "train.bin"),
                      load_dataset(world_dir / "val.bin"),
                      load_dataset(world_dir / "test.bin")};
}

metrics::Dataset dataset_prefix(const metrics::Dataset& set, int n) {
  if (n <= 0 || n >= static_cast<int>(set.size())) return set;
  return metrics::Dataset(set.begin(), set.begin() + n);
}

// ---------------------------------------------------------------------------
// Report pieces
// ---------------------------------------------------------------------------

const char* ci_kind_name(metrics::CiKind kind) {
  switch (kind) {
    case metrics::CiKind::Wilson: return "wilson";
    case metrics::CiKind::StudentT: return "student_t";
    case metrics::CiKind::None: return "none";
  }
  return "none";
}

json estimate_to_json(const metrics::MetricEstimate& est) {
  json j{{"name", est.name},
         {"value", est.value},
         {"k", est.sample_count},
         {"ci_lo", est.ci.lo},
         {"ci_hi", est.ci.hi},
         {"ci_level", est.ci_level},
         {"ci_kind", ci_kind_name(est.ci_kind)},
         {"flagged", est.flagged},
         {"failures", est.failures}};
  return j;
}

void write_severity_csv(const fs::path& path, const std::string& classifier,
                        std::optional<double> epsilon,
                        const std::vector<metrics::SeverityRecord>& records) {
  std::ostringstream out;
  out << "classifier,sample_id,epsilon,rho_hat,perturbed_latent_scaled_norm,"
         "dx_l1,dx_l2,success\n";
  for (const auto& r : records) {
    out << classifier << ',' << r.sample_id << ','
        << (epsilon ? fmt_number(*epsilon) : "") << ','
        << fmt_number(r.rho_hat) << ',' << fmt_number(r.perturbed_norm) << ','
        << fmt_number(r.dx_l1) << ',' << fmt_number(r.dx_l2) << ','
        << (r.success ? 1 : 0) << '\n';
  }
  write_text(path, out.str());
}

// eps index formatted as a filename-safe token ("0.5" -> "0p5").
std::string eps_token(double eps) {
  std::string s = fmt_number(eps);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

// One evaluated classifier: fills the metric entry array and emits severity
// CSVs next to the report.
struct Evaluator {
  const ExperimentConfig& config;
  const train::World& world;
  const FeedForwardClassifier& classifier;
  const std::string name;
  const fs::path report_dir;
  const Rng rng;  // per-classifier stream root
  const int jobs;
  json entries = json::array();

  void push(const metrics::MetricEstimate& est, json extra = json::object()) {
    json j = estimate_to_json(est);
    j.update(extra);
    entries.push_back(std::move(j));
  }

  void severity_entry(const metrics::MetricEstimate& est,
                      std::optional<double> eps) {
    std::string file = "severity_" + name + "_" + est.name;
    if (eps) file += "_eps" + eps_token(*eps);
    file += ".csv";
    write_severity_csv(report_dir / file, name, eps, est.records);
    json extra{{"records_csv", file}};
    if (eps) extra["epsilon"] = *eps;
    push(est, extra);
  }

  void run(const std::string& metric) {
    const MetricPlan& plan = config.metrics;
    const metrics::Dataset eval_set =
        dataset_prefix(world.test_set, plan.eval_points);
    if (metric == "clean") {
      push(metrics::clean_accuracy(classifier, world.test_set, jobs));
    } else if (metric == "noise") {
      push(metrics::noise_accuracy(classifier, world.test_set,
                                   plan.noise_sigma, rng.derive(11), jobs));
    } else if (metric == "lga") {
      push(metrics::lga(classifier, world.pairs, world.prior,
                        plan.lga_samples, rng.derive(12), jobs));
    } else if (metric == "lra") {
      push(metrics::lra(classifier, world.pairs, eval_set, rng.derive(13),
                        jobs));
    } else if (metric == "llna") {
      for (std::size_t e = 0; e < plan.epsilons.size(); ++e) {
        int points = std::min<int>(plan.llna_points,
                                   static_cast<int>(world.test_set.size()));
        for (int p = 0; p < points; ++p) {
          const auto& sample = world.test_set[p];
          auto est = metrics::llna(classifier, world.pairs[sample.label],
                                   sample.x, sample.label, plan.epsilons[e],
                                   plan.llna_samples,
                                   rng.derive(14).derive(e * 1000 + p), jobs);
          push(est, json{{"epsilon", plan.epsilons[e]}, {"sample_id", p}});
        }
      }
    } else if (metric == "laga" || metric == "lara") {
      for (std::size_t e = 0; e < plan.epsilons.size(); ++e) {
        std::vector<metrics::MetricEstimate> ladder;
        if (metric == "laga")
          ladder = metrics::laga(classifier, world.pairs, world.prior,
                                 plan.epsilons[e], plan.rhos,
                                 plan.adv_samples, plan.bounded,
                                 rng.derive(15).derive(e), jobs);
        else
          ladder = metrics::lara(classifier, world.pairs, eval_set,
                                 plan.epsilons[e], plan.rhos, plan.bounded,
                                 rng.derive(16).derive(e), jobs);
        for (std::size_t r = 0; r < ladder.size(); ++r)
          push(ladder[r],
               json{{"epsilon", plan.epsilons[e]}, {"rho", plan.rhos[r]}});
      }
    } else if (metric == "lags") {
      for (std::size_t e = 0; e < plan.epsilons.size(); ++e)
        severity_entry(metrics::lags(classifier, world.pairs, world.prior,
                                     plan.epsilons[e], plan.adv_samples,
                                     plan.min_norm, rng.derive(17).derive(e),
                                     jobs),
                       plan.epsilons[e]);
    } else if (metric == "lars") {
      for (std::size_t e = 0; e < plan.epsilons.size(); ++e)
        severity_entry(metrics::lars(classifier, world.pairs, eval_set,
                                     plan.epsilons[e], plan.min_norm,
                                     rng.derive(18).derive(e), jobs),
                       plan.epsilons[e]);
    } else if (metric == "severity_l2") {
      severity_entry(metrics::adversarial_severity(
                         classifier, eval_set, attack::NormKind::L2Scaled,
                         plan.original, rng.derive(19), jobs),
                     std::nullopt);
    } else if (metric == "severity_linf") {
      severity_entry(metrics::adversarial_severity(
                         classifier, eval_set, attack::NormKind::LinfScaled,
                         plan.original, rng.derive(20), jobs),
                     std::nullopt);
    } else {
      throw ConfigError("unknown metric name: " + metric);
    }
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Config surface
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  world.validate();
  training.validate();
  metrics.bounded.validate();
  metrics.min_norm.validate();
  metrics.original.validate();
  if (variants.empty()) throw ConfigError("config: no variants listed");
  for (const std::string& v : variants) train::variant_from_name(v);
  static const std::set<std::string> known{
      "clean", "noise", "lga",  "lra",  "llna",        "laga",
      "lara",  "lags",  "lars", "severity_l2", "severity_linf"};
  for (const std::string& m : metrics.names)
    if (!known.count(m)) throw ConfigError("config: unknown metric: " + m);
  for (double e : metrics.epsilons)
    if (!(e > 0.0))
      throw ConfigError("config: metric epsilons must be > 0");
  if (metrics.rhos.empty()) throw ConfigError("config: empty rho list");
  for (std::size_t i = 0; i < metrics.rhos.size(); ++i) {
    if (!(metrics.rhos[i] > 0.0))
      throw ConfigError("config: rhos must be > 0");
    if (i > 0 && !(metrics.rhos[i] > metrics.rhos[i - 1]))
      throw ConfigError("config: rhos must be strictly ascending");
  }
  if (metrics.lga_samples < 1 || metrics.adv_samples < 1 ||
      metrics.eval_points < 1 || metrics.llna_samples < 1 ||
      metrics.llna_points < 1)
    throw ConfigError("config: sample counts must be >= 1");
  if (!(metrics.noise_sigma >= 0.0))
    throw ConfigError("config: noise_sigma must be >= 0");
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(j, {"seed", "world", "training", "variants", "metrics"},
             "config root");
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("world")) c.world = parse_world(j["world"]);
    if (j.contains("training")) c.training = parse_training(j["training"]);
    c.variants = j.value("variants", c.variants);
    if (j.contains("metrics")) c.metrics = parse_metrics(j["metrics"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  return parse_config_text(read_text(path));
}

std::string config_to_json_text(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  return fnv1a_hex(config_to_json(config).dump());
}

std::string world_hash(const ExperimentConfig& config) {
  json j{{"seed", config.seed}, {"world", world_to_json(config.world)}};
  return fnv1a_hex(j.dump());
}

std::string models_hash(const ExperimentConfig& config) {
  json j{{"seed", config.seed},
         {"world", world_to_json(config.world)},
         {"training", training_to_json(config.training)},
         {"variants", config.variants}};
  return fnv1a_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

namespace {
constexpr char kDatasetMagic[8] = {'L', 'A', 'T', 'M', 'E', 'T', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const metrics::Dataset& set, const fs::path& path) {
  if (set.empty()) throw InvalidArgument("save_dataset: empty dataset");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  auto put = [&](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put(kDatasetMagic, sizeof kDatasetMagic);
  std::uint32_t version = kDatasetVersion;
  auto count = static_cast<std::uint32_t>(set.size());
  auto dim = static_cast<std::uint32_t>(set[0].x.size());
  put(&version, 4);
  put(&count, 4);
  put(&dim, 4);
  for (const auto& sample : set) {
    auto label = static_cast<std::uint32_t>(sample.label);
    put(&label, 4);
    put(sample.x.data(), sizeof(double) * dim);
  }
  if (!out) throw Error("write failed: " + path.string());
}

metrics::Dataset load_dataset(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path.string());
  std::size_t offset = 0;
  auto get = [&](void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw ParseError(path.string() + ": truncated dataset (" + what + ")",
                       offset + static_cast<std::size_t>(in.gcount()));
    offset += n;
  };
  char magic[8];
  get(magic, 8, "magic");
  if (std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw VersionError(path.string() + ": wrong magic header");
  std::uint32_t version, count, dim;
  get(&version, 4, "version");
  if (version != kDatasetVersion)
    throw VersionError(path.string() + ": unsupported dataset version");
  get(&count, 4, "count");
  get(&dim, 4, "dim");
  if (count == 0 || dim == 0 || count > (1u << 28) || dim > (1u << 24))
    throw ParseError(path.string() + ": implausible dataset header", offset);
  metrics::Dataset set;
  set.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t label;
    get(&label, 4, "label");
    Vector x(dim);
    get(x.data(), sizeof(double) * dim, "sample");
    if (!x.allFinite())
      throw ParseError(path.string() + ": non-finite sample", offset);
    set.push_back({std::move(x), static_cast<int>(label)});
  }
  return set;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_world(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::path wdir = out_dir / "world";
  fs::create_directories(wdir);
  train::World world =
      train::make_world(config.world, stage_seed(config, kWorldStage));
  for (std::size_t i = 0; i < world.pairs.size(); ++i)
    save_model(world.pairs[i].decoder, config.world.num_classes,
               wdir / ("decoder_" + std::to_string(i) + ".bin"));
  save_dataset(world.train_set, wdir / "train.bin");
  save_dataset(world.val_set, wdir / "val.bin");
  save_dataset(world.test_set, wdir / "test.bin");
  json meta{{"world_hash", world_hash(config)},
            {"seed", config.seed},
            {"world", world_to_json(config.world)}};
  write_text(wdir / "world.json", meta.dump(2) + "\n");
  append_run_log(out_dir, "world hash=" + world_hash(config));
  log_message(LogLevel::Info, "world written to " + wdir.string());
  return kExitOk;
}

int cmd_train(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  train::World world = load_world_files(config, out_dir / "world");
  fs::path mdir = out_dir / "models";
  fs::create_directories(mdir);
  Rng train_rng = Rng(config.seed).derive(kTrainStage);
  for (const std::string& name : config.variants) {
    train::TrainResult result = train::train(train::variant_from_name(name),
                                             world, config.training, train_rng);
    save_model(result.classifier, mdir / (name + ".bin"));
    std::ostringstream log;
    log << "epoch,train_loss,val_accuracy\n";
    for (const auto& e : result.log)
      log << e.epoch << ',' << fmt_number(e.train_loss) << ','
          << fmt_number(e.val_accuracy) << '\n';
    write_text(mdir / (name + "_log.csv"), log.str());
    log_message(LogLevel::Info, "trained " + name);
  }
  json meta{{"models_hash", models_hash(config)},
            {"variants", config.variants}};
  write_text(mdir / "models.json", meta.dump(2) + "\n");
  append_run_log(out_dir, "train hash=" + models_hash(config));
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& config, const fs::path& out_dir,
             const fs::path& models_dir, int jobs) {
  config.validate();
  train::World world = load_world_files(config, out_dir / "world");
  fs::path mdir = models_dir.empty() ? out_dir / "models" : models_dir;
  json models_meta = read_json(mdir / "models.json");
  if (models_meta.value("models_hash", "") != models_hash(config))
    throw ConfigError("models in " + mdir.string() +
                      " were trained from a different configuration");
  fs::path rdir = out_dir / "report";
  fs::create_directories(rdir);

  Rng eval_rng = Rng(config.seed).derive(kEvalStage);
  json classifiers = json::object();
  json failed = json::array();
  for (std::size_t vi = 0; vi < config.variants.size(); ++vi) {
    const std::string& name = config.variants[vi];
    FeedForwardClassifier classifier = load_classifier(mdir / (name + ".bin"));
    Evaluator ev{config, world,        classifier,
                 name,   rdir,         eval_rng.derive(vi),
                 jobs,   json::array()};
    for (const std::string& metric : config.metrics.names) {
      try {
        ev.run(metric);
      } catch (const std::exception& e) {
        failed.push_back(
            json{{"classifier", name}, {"name", metric}, {"error", e.what()}});
        log_message(LogLevel::Error,
                    "metric " + metric + " failed for " + name + ": " +
                        e.what());
      }
    }
    classifiers[name] = json{{"metrics", std::move(ev.entries)}};
  }

  json report{{"provenance",
               json{{"tool", "latmet"},
                    {"version", kVersion},
                    {"seed", config.seed},
                    {"config_hash", config_hash(config)},
                    {"world_hash", world_hash(config)},
                    {"models_hash", models_hash(config)}}},
              {"config", config_to_json(config)},
              {"classifiers", std::move(classifiers)},
              {"failed_metrics", failed}};
  write_text(rdir / "report.json", report.dump(2) + "\n");
  append_run_log(out_dir, "eval hash=" + config_hash(config));
  return failed.empty() ? kExitOk : kExitPartialFailure;
}

int cmd_attack(const ExperimentConfig& config, const fs::path& out_dir,
               const fs::path& models_dir, const AttackQuery& query) {
  config.validate();
  train::World world = load_world_files(config, out_dir / "world");
  fs::path mdir = models_dir.empty() ? out_dir / "models" : models_dir;
  FeedForwardClassifier classifier =
      load_classifier(mdir / (query.classifier + ".bin"));

  int label;
  Vector l0;
  json source;
  if (query.point >= 0) {
    if (query.point >= static_cast<int>(world.test_set.size()))
      throw ConfigError("attack: test point index out of range");
    const auto& sample = world.test_set[query.point];
    label = sample.label;
    Rng enc_rng = Rng(query.has_seed ? query.seed : config.metrics.min_norm.seed)
                      .derive(1);
    EncodeResult enc = encode(world.pairs[label], sample.x, enc_rng);
    l0 = enc.latent;
    source = json{{"point", query.point},
                  {"label", label},
                  {"encode_residual", enc.residual}};
  } else {
    if (query.label < 0 ||
        query.label >= static_cast<int>(world.pairs.size()))
      throw ConfigError("attack: --label required (in range) with --latent");
    if (static_cast<int>(query.latent.size()) != config.world.latent_dim)
      throw ConfigError("attack: latent dim mismatch");
    label = query.label;
    l0 = Eigen::Map<const Vector>(query.latent.data(),
                                  static_cast<Eigen::Index>(query.latent.size()));
    source = json{{"label", label}, {"latent", query.latent}};
  }

  Rng rng =
      Rng(query.has_seed ? query.seed : config.metrics.min_norm.seed).derive(2);
  json out{{"classifier", query.classifier},
           {"epsilon", query.epsilon},
           {"source", source}};
  if (query.rho > 0.0) {
    bool robust = metrics::llar_threshold_check(
        classifier, world.pairs[label], label, l0, query.epsilon, query.rho,
        config.metrics.bounded, rng);
    out["mode"] = "threshold";
    out["rho"] = query.rho;
    out["robust"] = robust;
  } else {
    Vector l1 = (1.0 - noise::decay_factor(query.epsilon)) * l0;
    attack::AttackResult res =
        attack::pgd_min_norm(classifier, world.pairs[label].decoder, label, l1,
                             config.metrics.min_norm, rng);
    Vector dx = world.pairs[label].decoder.decode(l1 + res.delta_l) -
                world.pairs[label].decoder.decode(l1);
    out["mode"] = "min_norm";
    out["success"] = res.success;
    out["rho_hat"] = res.success ? json(res.scaled_norm) : json();
    out["perturbed_latent_scaled_norm"] =
        noise::scaled_norm(Vector(l1 + res.delta_l));
    out["dx_l1"] = dx.lpNorm<1>();
    out["dx_l2"] = dx.norm();
  }
  std::printf("%s\n", out.dump(2).c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Report command
// ---------------------------------------------------------------------------

namespace {

struct BundleData {
  fs::path dir;
  std::vector<std::string> classifiers;
  // metric key -> classifier -> value
  std::map<std::string, std::map<std::string, double>> values;
  // metric key -> classifier -> severity csv file
  std::map<std::string, std::map<std::string, std::string>> record_files;
};

std::string metric_key(const json& entry) {
  std::string key = entry.at("name").get<std::string>();
  if (entry.contains("epsilon"))
    key += "|eps=" + fmt_number(entry["epsilon"].get<double>());
  if (entry.contains("rho"))
    key += "|rho=" + fmt_number(entry["rho"].get<double>());
  if (entry.contains("sample_id"))
    key += "|id=" + std::to_string(entry["sample_id"].get<int>());
  return key;
}

BundleData load_bundle(const fs::path& path) {
  fs::path file = fs::is_directory(path) ? path / "report.json" : path;
  json report = read_json(file);
  BundleData data;
  data.dir = file.parent_path();
  if (report.contains("config") && report["config"].contains("variants"))
    data.classifiers =
        report["config"]["variants"].get<std::vector<std::string>>();
  const json& classifiers = report.at("classifiers");
  if (data.classifiers.empty())
    for (auto it = classifiers.begin(); it != classifiers.end(); ++it)
      data.classifiers.push_back(it.key());
  for (const std::string& name : data.classifiers) {
    if (!classifiers.contains(name)) continue;
    for (const json& entry : classifiers[name].at("metrics")) {
      if (!entry.contains("value") || entry["value"].is_null()) continue;
      std::string key = metric_key(entry);
      data.values[key][name] = entry["value"].get<double>();
      if (entry.contains("records_csv"))
        data.record_files[key][name] = entry["records_csv"].get<std::string>();
    }
  }
  return data;
}

// Values of one metric across a bundle's classifiers, in declared order;
// empty when any classifier is missing the metric.
std::vector<double> series_for(const BundleData& b, const std::string& key) {
  std::vector<double> out;
  auto it = b.values.find(key);
  if (it == b.values.end()) return out;
  for (const std::string& name : b.classifiers) {
    auto vit = it->second.find(name);
    if (vit == it->second.end()) return {};
    out.push_back(vit->second);
  }
  return out;
}

}  // namespace

int cmd_report(const std::vector<fs::path>& bundles, const fs::path& out_dir) {
  if (bundles.empty()) throw ConfigError("report: no bundles given");
  std::vector<BundleData> data;
  for (const fs::path& p : bundles) data.push_back(load_bundle(p));
  fs::create_directories(out_dir);

  std::ostringstream csv;
  csv << "kind,bundle,metric_a,metric_b,pearson,spearman,n\n";
  auto emit = [&](const std::string& kind, const std::string& bundle,
                  const std::string& a, const std::string& b,
                  const std::vector<double>& sa,
                  const std::vector<double>& sb) {
    stats::Correlations c = stats::correlations(sa, sb);
    csv << kind << ',' << bundle << ',' << a << ',' << b << ','
        << (c.pearson_defined ? fmt_number(c.pearson) : "undefined") << ','
        << (c.spearman_defined ? fmt_number(c.spearman) : "undefined") << ','
        << sa.size() << '\n';
  };

  for (std::size_t bi = 0; bi < data.size(); ++bi) {
    const BundleData& b = data[bi];
    if (b.classifiers.size() < 3) continue;  // correlations need length >= 3
    std::vector<std::string> keys;
    for (const auto& [key, _] : b.values)
      if (!series_for(b, key).empty()) keys.push_back(key);
    for (std::size_t i = 0; i < keys.size(); ++i)
      for (std::size_t j = i + 1; j < keys.size(); ++j)
        emit("within", std::to_string(bi), keys[i], keys[j],
             series_for(b, keys[i]), series_for(b, keys[j]));
  }

  for (std::size_t bi = 1; bi < data.size(); ++bi) {
    const BundleData& a = data[0];
    const BundleData& b = data[bi];
    if (a.classifiers.size() < 3 || a.classifiers != b.classifiers) continue;
    for (const auto& [key, _] : a.values) {
      auto sa = series_for(a, key);
      auto sb = series_for(b, key);
      if (sa.empty() || sb.empty()) continue;
      emit("cross", "0_vs_" + std::to_string(bi), key, key, sa, sb);
    }
  }
  write_text(out_dir / "correlations.csv", csv.str());

  // Merge referenced severity records into one long-format file.
  std::ostringstream plot;
  plot << "bundle,metric,classifier,sample_id,epsilon,rho_hat,"
          "perturbed_latent_scaled_norm,dx_l1,dx_l2,success\n";
  for (std::size_t bi = 0; bi < data.size(); ++bi) {
    for (const auto& [key, files] : data[bi].record_files) {
      for (const auto& [classifier, file] : files) {
        std::ifstream in(data[bi].dir / file);
        if (!in) continue;
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
          // source columns: classifier,sample_id,epsilon,rest...
          auto first_comma = line.find(',');
          if (first_comma == std::string::npos) continue;
          plot << bi << ',' << key << ',' << classifier << ','
               << line.substr(first_comma + 1) << '\n';
        }
      }
    }
  }
  write_text(out_dir / "plot_severity.csv", plot.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// argv entry point
// ---------------------------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"latent-space performance metrics for feed-forward classifiers"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string models_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;

  app.add_option("--config", config_path, "experiment config JSON")
      ->expected(1);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--models", models_dir, "models directory override");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "master seed override");

  auto* world_cmd = app.add_subcommand("world", "build the synthetic world");
  auto* train_cmd = app.add_subcommand("train", "train classifier variants");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate the metric plan");
  auto* attack_cmd =
      app.add_subcommand("attack", "single-point LLAR / min-norm query");
  auto* report_cmd =
      app.add_subcommand("report", "correlations and plot data from bundles");
  for (CLI::App* sub :
       {world_cmd, train_cmd, eval_cmd, attack_cmd, report_cmd})
    sub->fallthrough();

  AttackQuery query;
  std::string latent_csv;
  attack_cmd->add_option("--classifier", query.classifier, "variant name")
      ->required();
  attack_cmd->add_option("--point", query.point, "test-set sample index");
  attack_cmd->add_option("--label", query.label, "class label for --latent");
  attack_cmd->add_option("--latent", latent_csv,
                         "comma-separated latent vector");
  attack_cmd->add_option("--epsilon", query.epsilon, "noise magnitude");
  attack_cmd->add_option("--rho", query.rho,
                         "scaled-norm threshold (omit for min-norm search)");

  std::vector<std::string> bundle_args;
  report_cmd->add_option("bundles", bundle_args, "report dirs or files")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }
  seed_given = seed_opt->count() > 0;

  try {
    if (report_cmd->parsed()) {
      std::vector<fs::path> bundles(bundle_args.begin(), bundle_args.end());
      return cmd_report(bundles, out_dir);
    }

    ExperimentConfig config;
    if (!config_path.empty()) config = load_config(config_path);
    if (seed_given) config.seed = seed;

    if (world_cmd->parsed()) return cmd_world(config, out_dir);
    if (train_cmd->parsed()) return cmd_train(config, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(config, out_dir, models_dir, jobs);
    if (attack_cmd->parsed()) {
      if (!latent_csv.empty()) {
        std::stringstream ss(latent_csv);
        std::string item;
        while (std::getline(ss, item, ','))
          query.latent.push_back(std::stod(item));
      }
      query.has_seed = seed_given;
      query.seed = seed;
      return cmd_attack(config, out_dir, models_dir, query);
    }
    throw ConfigError("no subcommand given");
  } catch (const std::exception& e) {
    log_message(LogLevel::Error, e.what());
    return kExitConfigError;
  }
}

}  // namespace latmet::cli
