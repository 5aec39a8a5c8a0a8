#pragma once

#include "brenier/data.hpp"
#include "brenier/losses.hpp"
#include "brenier/networks.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace brenier {

struct ReinitPolicy {
  enum class Kind { none, every_k_until, loss_band };
  Kind kind = Kind::none;
  int k = 50;
  int until_epoch = 500;
  double lo = 0.001;
  double hi = 50.0;

  static ReinitPolicy none() { return {}; }
  static ReinitPolicy every_k_until(int k, int until) {
    return {Kind::every_k_until, k, until, 0.0, 0.0};
  }
  static ReinitPolicy loss_band(double lo, double hi) {
    return {Kind::loss_band, 0, 0, lo, hi};
  }
};

enum class LrSchedule { constant, linear_decay };

struct DatasetConfig {
  enum class Kind { gmm, idx };
  Kind kind = Kind::gmm;
  // gmm
  Eigen::Index n = 10000;
  int modes = 7;
  double variance = 0.02;
  double radius = 0.3;
  std::vector<double> center{0.5, 0.5};
  // idx; paths are relative to the data directory given on the command line
  std::string images;
  std::string labels;
  int class_id = -1;  // -1 keeps every class
  Eigen::Index limit = 0;  // 0 keeps every image
  int pad_to = 0;
  PixelScale scale = PixelScale::symmetric;
};

struct TrainConfig {
  double kappa = 0.1;
  double gamma = 0.1;
  double lr_gen = 1e-3;
  double lr_disc = 1e-3;
  int batch_size = 1000;
  int epochs = 1000;
  int penalty_samples = 20;
  int disc_steps_per_gen_step = 1;
  ReinitPolicy reinit_policy = ReinitPolicy::every_k_until(50, 500);
  LrSchedule lr_schedule = LrSchedule::constant;
  std::uint64_t seed = 0;
  SourceDomain source_domain = SourceDomain::unit_box;
  Activation activation = Activation::recu;
  InitScheme potential_init = InitScheme::glorot;
  GeneratorObjective generator_objective = GeneratorObjective::saturating;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<int> generator_widths{2, 16, 32, 64, 32, 1};
  std::vector<int> discriminator_widths{2, 128, 64, 1};
  int checkpoint_every = 100;
  int monitor_points = 1000;
  int monitor_scan_points = 1000;
  bool abort_on_failed_certificate = false;
  bool record_wallclock = true;
  int sample_count = 10000;
  DatasetConfig data;

  int dim() const { return generator_widths.front(); }
  MlpSpec potential_spec() const;
  MlpSpec discriminator_spec() const;
  void validate() const;
};

/// Raised for invalid or incomplete configurations; `field` names the
/// offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field(field) {}
  std::string field;
};

TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig load_config(const std::filesystem::path& path);
/// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const TrainConfig& c);

/// Mixture described by a gmm dataset config.
GmmSpec gmm_spec(const TrainConfig& c);

/// Builds the training set described by `c.data`.
SampleSet load_dataset(const TrainConfig& c,
                       const std::filesystem::path& data_dir = {});

}  // namespace brenier
