#include "brenier/config.hpp"

#include "brenier/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace brenier {

using nlohmann::json;

MlpSpec TrainConfig::potential_spec() const {
  return {generator_widths, activation, OutputTransform::none, potential_init};
}

MlpSpec TrainConfig::discriminator_spec() const {
  return {discriminator_widths, Activation::leaky_relu, OutputTransform::sigmoid};
}

void TrainConfig::validate() const {
  if (!std::isfinite(kappa) || kappa < 0) throw ConfigError("kappa", "must be finite and >= 0");
  if (!std::isfinite(gamma) || gamma < 0) throw ConfigError("gamma", "must be finite and >= 0");
  if (!(lr_gen > 0)) throw ConfigError("lr_gen", "must be > 0");
  if (!(lr_disc > 0)) throw ConfigError("lr_disc", "must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
  if (penalty_samples < 1) throw ConfigError("penalty_samples", "must be >= 1");
  if (disc_steps_per_gen_step < 1) {
    throw ConfigError("disc_steps_per_gen_step", "must be >= 1");
  }
  if (activation != Activation::recu && activation != Activation::requ) {
    throw ConfigError("activation", "must be recu or requ");
  }
  if (generator_widths.size() < 2 || generator_widths.back() != 1) {
    throw ConfigError("generator_widths", "need (d, ..., 1)");
  }
  if (discriminator_widths.size() < 2 || discriminator_widths.back() != 1 ||
      discriminator_widths.front() != generator_widths.front()) {
    throw ConfigError("discriminator_widths", "need (d, ..., 1) with the generator's d");
  }
  for (int w : generator_widths) {
    if (w < 1) throw ConfigError("generator_widths", "widths must be >= 1");
  }
  for (int w : discriminator_widths) {
    if (w < 1) throw ConfigError("discriminator_widths", "widths must be >= 1");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigError("adam_beta1", "must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("adam_beta2", "must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps", "must be > 0");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every", "must be >= 1");
  if (monitor_points < 1) throw ConfigError("monitor_points", "must be >= 1");
  if (monitor_scan_points < 0) throw ConfigError("monitor_scan_points", "must be >= 0");
  if (sample_count < 1) throw ConfigError("sample_count", "must be >= 1");
  if (reinit_policy.kind == ReinitPolicy::Kind::every_k_until && reinit_policy.k < 1) {
    throw ConfigError("reinit_policy", "k must be >= 1");
  }
  if (reinit_policy.kind == ReinitPolicy::Kind::loss_band &&
      !(reinit_policy.lo < reinit_policy.hi)) {
    throw ConfigError("reinit_policy", "need lo < hi");
  }
  if (data.kind == DatasetConfig::Kind::gmm) {
    if (dim() != 2) throw ConfigError("generator_widths", "gmm data is 2-D");
    if (data.n < 1) throw ConfigError("data.n", "must be >= 1");
    if (data.modes < 1) throw ConfigError("data.modes", "must be >= 1");
    if (!(data.variance > 0)) throw ConfigError("data.variance", "must be > 0");
    if (data.center.size() != 2) throw ConfigError("data.center", "need 2 coordinates");
  } else if (data.images.empty()) {
    throw ConfigError("data.images", "missing");
  }
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "config" : where, "must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

template <class T>
T required(const json& j, const std::string& key, const std::string& where = "") {
  const std::string name = where.empty() ? key : where + "." + key;
  if (!j.contains(key)) throw ConfigError(name, "missing config field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(name, std::string("wrong type: ") + e.what());
  }
}

template <class T>
T optional(const json& j, const std::string& key, T fallback,
           const std::string& where = "") {
  if (!j.contains(key)) return fallback;
  return required<T>(j, key, where);
}

ReinitPolicy reinit_from_json(const json& j) {
  const std::string type = required<std::string>(j, "type", "reinit_policy");
  if (type == "none") {
    reject_unknown(j, {"type"}, "reinit_policy");
    return ReinitPolicy::none();
  }
  if (type == "every_k_until") {
    reject_unknown(j, {"type", "k", "until"}, "reinit_policy");
    return ReinitPolicy::every_k_until(required<int>(j, "k", "reinit_policy"),
                                       required<int>(j, "until", "reinit_policy"));
  }
  if (type == "loss_band") {
    reject_unknown(j, {"type", "lo", "hi"}, "reinit_policy");
    return ReinitPolicy::loss_band(required<double>(j, "lo", "reinit_policy"),
                                   required<double>(j, "hi", "reinit_policy"));
  }
  throw ConfigError("reinit_policy.type", "unknown policy '" + type + "'");
}

json reinit_to_json(const ReinitPolicy& p) {
  switch (p.kind) {
    case ReinitPolicy::Kind::none: return {{"type", "none"}};
    case ReinitPolicy::Kind::every_k_until:
      return {{"type", "every_k_until"}, {"k", p.k}, {"until", p.until_epoch}};
    case ReinitPolicy::Kind::loss_band:
      return {{"type", "loss_band"}, {"lo", p.lo}, {"hi", p.hi}};
  }
  return {};
}

DatasetConfig data_from_json(const json& j) {
  DatasetConfig d;
  const std::string kind = required<std::string>(j, "kind", "data");
  if (kind == "gmm") {
    reject_unknown(j, {"kind", "n", "modes", "variance", "radius", "center"}, "data");
    d.kind = DatasetConfig::Kind::gmm;
    d.n = optional<Eigen::Index>(j, "n", d.n, "data");
    d.modes = optional<int>(j, "modes", d.modes, "data");
    d.variance = optional<double>(j, "variance", d.variance, "data");
    d.radius = optional<double>(j, "radius", d.radius, "data");
    d.center = optional<std::vector<double>>(j, "center", d.center, "data");
  } else if (kind == "idx") {
    reject_unknown(j, {"kind", "images", "labels", "class", "limit", "pad_to", "scale"},
                   "data");
    d.kind = DatasetConfig::Kind::idx;
    d.images = required<std::string>(j, "images", "data");
    d.labels = optional<std::string>(j, "labels", "", "data");
    d.class_id = optional<int>(j, "class", -1, "data");
    d.limit = optional<Eigen::Index>(j, "limit", 0, "data");
    d.pad_to = optional<int>(j, "pad_to", 0, "data");
    const std::string scale = optional<std::string>(j, "scale", "symmetric", "data");
    if (scale == "unit") {
      d.scale = PixelScale::unit;
    } else if (scale == "symmetric") {
      d.scale = PixelScale::symmetric;
    } else {
      throw ConfigError("data.scale", "must be unit or symmetric");
    }
  } else {
    throw ConfigError("data.kind", "unknown dataset kind '" + kind + "'");
  }
  return d;
}

json data_to_json(const DatasetConfig& d) {
  if (d.kind == DatasetConfig::Kind::gmm) {
    return {{"kind", "gmm"},         {"n", d.n},
            {"modes", d.modes},      {"variance", d.variance},
            {"radius", d.radius},    {"center", d.center}};
  }
  return {{"kind", "idx"},
          {"images", d.images},
          {"labels", d.labels},
          {"class", d.class_id},
          {"limit", d.limit},
          {"pad_to", d.pad_to},
          {"scale", d.scale == PixelScale::unit ? "unit" : "symmetric"}};
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"kappa", "gamma", "lr_gen", "lr_disc", "batch_size", "epochs",
                  "penalty_samples", "disc_steps_per_gen_step", "reinit_policy",
                  "lr_schedule", "seed", "source_domain", "activation",
                  "potential_init", "generator_objective", "adam_beta1",
                  "adam_beta2", "adam_eps",
                  "generator_widths", "discriminator_widths", "checkpoint_every",
                  "monitor_points", "monitor_scan_points",
                  "abort_on_failed_certificate", "record_wallclock",
                  "sample_count", "data"},
                 "");
  TrainConfig c;
  c.kappa = required<double>(j, "kappa");
  c.gamma = required<double>(j, "gamma");
  c.lr_gen = required<double>(j, "lr_gen");
  c.lr_disc = required<double>(j, "lr_disc");
  c.batch_size = required<int>(j, "batch_size");
  c.epochs = required<int>(j, "epochs");
  c.penalty_samples = required<int>(j, "penalty_samples");
  c.seed = required<std::uint64_t>(j, "seed");
  c.disc_steps_per_gen_step =
      optional<int>(j, "disc_steps_per_gen_step", c.disc_steps_per_gen_step);
  if (j.contains("reinit_policy")) c.reinit_policy = reinit_from_json(j.at("reinit_policy"));
  const std::string schedule = optional<std::string>(j, "lr_schedule", "constant");
  if (schedule == "constant") {
    c.lr_schedule = LrSchedule::constant;
  } else if (schedule == "linear_decay") {
    c.lr_schedule = LrSchedule::linear_decay;
  } else {
    throw ConfigError("lr_schedule", "must be constant or linear_decay");
  }
  try {
    c.source_domain = source_domain_from_string(
        optional<std::string>(j, "source_domain", "unit_box"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("source_domain", e.what());
  }
  try {
    c.activation = activation_from_string(optional<std::string>(j, "activation", "recu"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("activation", e.what());
  }
  try {
    c.potential_init =
        init_scheme_from_string(optional<std::string>(j, "potential_init", "glorot"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("potential_init", e.what());
  }
  try {
    c.generator_objective = generator_objective_from_string(
        optional<std::string>(j, "generator_objective", "saturating"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("generator_objective", e.what());
  }
  c.adam_beta1 = optional(j, "adam_beta1", c.adam_beta1);
  c.adam_beta2 = optional(j, "adam_beta2", c.adam_beta2);
  c.adam_eps = optional(j, "adam_eps", c.adam_eps);
  c.generator_widths = optional(j, "generator_widths", c.generator_widths);
  c.discriminator_widths = optional(j, "discriminator_widths", c.discriminator_widths);
  c.checkpoint_every = optional(j, "checkpoint_every", c.checkpoint_every);
  c.monitor_points = optional(j, "monitor_points", c.monitor_points);
  c.monitor_scan_points = optional(j, "monitor_scan_points", c.monitor_scan_points);
  c.abort_on_failed_certificate =
      optional(j, "abort_on_failed_certificate", c.abort_on_failed_certificate);
  c.record_wallclock = optional(j, "record_wallclock", c.record_wallclock);
  c.sample_count = optional(j, "sample_count", c.sample_count);
  if (j.contains("data")) c.data = data_from_json(j.at("data"));
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  return {{"kappa", c.kappa},
          {"gamma", c.gamma},
          {"lr_gen", c.lr_gen},
          {"lr_disc", c.lr_disc},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"penalty_samples", c.penalty_samples},
          {"disc_steps_per_gen_step", c.disc_steps_per_gen_step},
          {"reinit_policy", reinit_to_json(c.reinit_policy)},
          {"lr_schedule", c.lr_schedule == LrSchedule::constant ? "constant" : "linear_decay"},
          {"seed", c.seed},
          {"source_domain", std::string(to_string(c.source_domain))},
          {"activation", std::string(to_string(c.activation))},
          {"potential_init", std::string(to_string(c.potential_init))},
          {"generator_objective", std::string(to_string(c.generator_objective))},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"generator_widths", c.generator_widths},
          {"discriminator_widths", c.discriminator_widths},
          {"checkpoint_every", c.checkpoint_every},
          {"monitor_points", c.monitor_points},
          {"monitor_scan_points", c.monitor_scan_points},
          {"abort_on_failed_certificate", c.abort_on_failed_certificate},
          {"record_wallclock", c.record_wallclock},
          {"sample_count", c.sample_count},
          {"data", data_to_json(c.data)}};
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const TrainConfig& c) {
  const std::string text = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

GmmSpec gmm_spec(const TrainConfig& c) {
  const DatasetConfig& d = c.data;
  return ring_gmm(d.modes, d.radius, d.variance, d.center[0], d.center[1]);
}

SampleSet load_dataset(const TrainConfig& c,
                       const std::filesystem::path& data_dir) {
  const DatasetConfig& d = c.data;
  if (d.kind == DatasetConfig::Kind::gmm) {
    const GmmSpec spec = gmm_spec(c);
    auto rng = make_rng(c.seed, {0xda7a});
    return gmm_sample(spec, d.n, rng());
  }
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || data_dir.empty() ? path : data_dir / path;
  };
  IdxImages imgs = load_idx_images(resolve(d.images), d.scale, d.pad_to);
  SampleSet set = std::move(imgs.images);
  if (d.class_id >= 0) {
    if (d.labels.empty()) throw ConfigError("data.labels", "needed to filter by class");
    set = class_filter(set, load_idx_labels(resolve(d.labels)),
                       static_cast<std::uint8_t>(d.class_id));
  }
  if (d.limit > 0 && set.size() > d.limit) {
    set.points = set.points.leftCols(d.limit).eval();
  }
  if (set.dim() != c.dim()) {
    throw ConfigError("generator_widths", "data dimension " + std::to_string(set.dim()) +
                                              " does not match input width " +
                                              std::to_string(c.dim()));
  }
  if (set.size() == 0) throw ConfigError("data", "dataset is empty");
  return set;
}

}  // namespace brenier
