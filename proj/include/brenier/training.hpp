#pragma once

#include "brenier/config.hpp"
#include "brenier/losses.hpp"
#include "brenier/networks.hpp"
#include "brenier/transport.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace brenier {

// ---- optimizer ---------------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;

  /// Zeroed moments shaped like `params`.
  static AdamState for_params(const std::vector<ad::Parameter>& params);
};

/// One bias-corrected Adam update in place. Throws on a non-finite gradient,
/// naming the parameter, before touching any state.
void adam_step(std::vector<ad::Parameter>& params,
               const std::vector<Matrix>& grads, AdamState& state, double lr,
               const AdamOptions& options = {});

AdamOptions adam_options(const TrainConfig& config);

/// Gradients of a backward pass ordered like `params`.
std::vector<Matrix> collect_grads(const ad::Gradients& g,
                                  const std::vector<ad::Parameter>& params);

// ---- training state --------------------------------------------------------

struct TrainingState {
  PotentialNet phi;
  DiscriminatorNet disc;
  AdamState adam_phi;
  AdamState adam_disc;
  int epoch = 0;  // completed epochs
  double last_disc_loss = 0.0;

  static TrainingState initial(const TrainConfig& config);
};

struct StepResult {
  LossBreakdown generator;
  double disc_loss = 0.0;  // -L_hat on the last discriminator step
  double disc_mean_on_fake = 0.0;
};

/// (a) disc_steps_per_gen_step discriminator ascent steps on the GAN loss
/// with fresh fake samples, then (b) one generator descent step on the
/// Brenier loss with the discriminator frozen. `step_seed` fixes every draw.
StepResult train_step(TrainingState& state, const Matrix& real_batch,
                      const TrainConfig& config, std::uint64_t step_seed,
                      double lr_gen, double lr_disc);

/// Seed for the reinitialized discriminator at `epoch`.
std::uint64_t reinit_seed(std::uint64_t seed, int epoch);

/// Whether `policy` fires at the start of `epoch` (completed-epoch count).
bool reinit_due(const ReinitPolicy& policy, int epoch, double last_disc_loss);

/// Reinitializes `state.disc` and its optimizer state when the policy fires.
bool maybe_reinit_discriminator(TrainingState& state, const TrainConfig& config,
                                int epoch);

double learning_rate_factor(const TrainConfig& config, int epoch);

// ---- checkpoints -------------------------------------------------------------

constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  TrainConfig config;
  TrainingState state;
  std::string config_hash;
};

/// JSON manifest on the first line, then little-endian float-64 blobs.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- metrics -----------------------------------------------------------------

struct MetricsRecord {
  int epoch = 0;
  double gan_loss = 0.0;
  double penalty = 0.0;
  double disc_loss = 0.0;
  double disc_mean_on_fake = 0.0;
  double min_eig_probe = 0.0;
  double wallclock_s = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,gan_loss,penalty,disc_loss,disc_mean_on_fake,min_eig_probe,"
    "wallclock_s";

std::string format_metrics_row(const MetricsRecord& r);

// ---- orchestration -----------------------------------------------------------

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<MetricsRecord> metrics;
  ConvexityReport final_report;
};

/// Runs epochs [resume.epoch, config.epochs), appending to
/// out_dir/metrics.csv and writing checkpoint_epoch_<n>.bin every
/// checkpoint_every epochs plus checkpoint_final.bin.
TrainResult run_training(const TrainConfig& config, const SampleSet& dataset,
                         const std::filesystem::path& out_dir,
                         const Checkpoint* resume = nullptr);

/// G(Z) for n fresh source draws, d x n.
Matrix generate_samples(const PotentialNet& phi, SourceDomain domain,
                        Eigen::Index n, std::uint64_t seed);

void write_samples_csv(const std::filesystem::path& path, const Matrix& points);

}  // namespace brenier
