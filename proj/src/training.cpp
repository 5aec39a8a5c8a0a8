#include "brenier/training.hpp"

#include "brenier/rng.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace brenier {

// ---- optimizer ---------------------------------------------------------------

AdamState AdamState::for_params(const std::vector<ad::Parameter>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

void adam_step(std::vector<ad::Parameter>& params,
               const std::vector<Matrix>& grads, AdamState& state, double lr,
               const AdamOptions& options) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].value.rows() ||
        grads[i].cols() != params[i].value.cols()) {
      throw ad::ShapeError("adam_step: gradient for " + params[i].name +
                           " has shape " + ad::shape_string(grads[i]));
    }
    if (!grads[i].allFinite()) {
      throw std::domain_error("adam_step: non-finite gradient for parameter " +
                              params[i].name);
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = options.beta1 * state.m[i] + (1.0 - options.beta1) * grads[i];
    state.v[i] = options.beta2 * state.v[i] +
                 (1.0 - options.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i].value.array() -=
        lr * (state.m[i].array() / c1) /
        ((state.v[i].array() / c2).sqrt() + options.eps);
  }
}

std::vector<Matrix> collect_grads(const ad::Gradients& g,
                                  const std::vector<ad::Parameter>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back(g.has(p) ? g.wrt(p)
                           : Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return out;
}

// ---- training ----------------------------------------------------------------

namespace {

enum StreamTag : std::uint64_t {
  kPhiInit = 1,
  kDiscInit,
  kShuffle,
  kStep,
  kDiscSource,
  kGenSource,
  kPenalty,
  kMonitorPenalty,
  kMonitorScan,
  kReinit,
};

std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return make_rng(seed, tags)();
}

}  // namespace

AdamOptions adam_options(const TrainConfig& config) {
  return {config.adam_beta1, config.adam_beta2, config.adam_eps};
}

TrainingState TrainingState::initial(const TrainConfig& config) {
  config.validate();
  TrainingState s;
  s.phi = PotentialNet(config.potential_spec(), derive(config.seed, {kPhiInit}));
  s.disc = DiscriminatorNet(config.discriminator_spec(),
                            derive(config.seed, {kDiscInit}));
  s.adam_phi = AdamState::for_params(s.phi.params());
  s.adam_disc = AdamState::for_params(s.disc.params());
  return s;
}

StepResult train_step(TrainingState& state, const Matrix& real_batch,
                      const TrainConfig& config, std::uint64_t step_seed,
                      double lr_gen, double lr_disc) {
  if (real_batch.cols() == 0) throw std::invalid_argument("train_step: empty batch");
  const Eigen::Index n = real_batch.cols();
  const int d = config.dim();
  StepResult result;

  for (int k = 0; k < config.disc_steps_per_gen_step; ++k) {
    const SampleSet z = uniform_source(
        n, d, config.source_domain,
        derive(step_seed, {kDiscSource, static_cast<std::uint64_t>(k)}));
    const Matrix fake = state.phi.gradient(z.points);
    ad::Tape tape;
    const BoundParams disc_params = state.disc.bind(tape, true);
    ad::Var d_real =
        forward_discriminator(state.disc, disc_params, tape.constant(real_batch));
    ad::Var d_fake =
        forward_discriminator(state.disc, disc_params, tape.constant(fake));
    ad::Var loss = ad::scale(gan_loss_empirical(d_real, d_fake), -1.0);
    const ad::Gradients grads = tape.backward(loss);
    adam_step(state.disc.params(), collect_grads(grads, state.disc.params()),
              state.adam_disc, lr_disc, adam_options(config));
    result.disc_loss = loss.scalar();
    result.disc_mean_on_fake = d_fake.value().mean();
  }

  const SampleSet z =
      uniform_source(n, d, config.source_domain, derive(step_seed, {kGenSource}));
  const PenaltyPairs pairs = draw_penalty_pairs(
      d, config.penalty_samples, config.source_domain, derive(step_seed, {kPenalty}));
  ad::Tape tape;
  const BoundParams phi_params = state.phi.bind(tape, true);
  const BoundParams disc_frozen = state.disc.bind(tape, false);
  BrenierLossGraph loss =
      brenier_loss(tape, state.phi, phi_params, state.disc, disc_frozen, real_batch,
                   z.points, pairs, {config.kappa, config.gamma, config.source_domain,
                    config.generator_objective});
  const ad::Gradients grads = tape.backward(loss.total);
  adam_step(state.phi.params(), collect_grads(grads, state.phi.params()),
            state.adam_phi, lr_gen, adam_options(config));
  result.generator = loss.breakdown;
  return result;
}

std::uint64_t reinit_seed(std::uint64_t seed, int epoch) {
  return derive(seed, {kReinit, static_cast<std::uint64_t>(epoch)});
}

bool reinit_due(const ReinitPolicy& policy, int epoch, double last_disc_loss) {
  switch (policy.kind) {
    case ReinitPolicy::Kind::none:
      return false;
    case ReinitPolicy::Kind::every_k_until:
      return epoch > 0 && epoch % policy.k == 0 && epoch <= policy.until_epoch;
    case ReinitPolicy::Kind::loss_band:
      return epoch > 0 &&
             (last_disc_loss < policy.lo || last_disc_loss > policy.hi);
  }
  return false;
}

bool maybe_reinit_discriminator(TrainingState& state, const TrainConfig& config,
                                int epoch) {
  if (!reinit_due(config.reinit_policy, epoch, state.last_disc_loss)) return false;
  state.disc = DiscriminatorNet(config.discriminator_spec(),
                                reinit_seed(config.seed, epoch));
  state.adam_disc = AdamState::for_params(state.disc.params());
  return true;
}

double learning_rate_factor(const TrainConfig& config, int epoch) {
  if (config.lr_schedule == LrSchedule::constant || config.epochs == 0) return 1.0;
  return 1.0 - static_cast<double>(epoch) / config.epochs;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

using nlohmann::json;

struct BlobRef {
  std::string name;
  const Matrix* data;
};

std::vector<BlobRef> blob_list(const TrainingState& s) {
  std::vector<BlobRef> out;
  auto add_net = [&](const std::string& prefix, const Mlp& net) {
    for (const auto& p : net.params()) out.push_back({prefix + p.name, &p.value});
  };
  auto add_adam = [&](const std::string& prefix, const Mlp& net, const AdamState& a) {
    for (std::size_t i = 0; i < net.params().size(); ++i) {
      out.push_back({prefix + "m/" + net.params()[i].name, &a.m[i]});
      out.push_back({prefix + "v/" + net.params()[i].name, &a.v[i]});
    }
  };
  add_net("phi/", s.phi);
  add_net("disc/", s.disc);
  add_adam("adam_phi/", s.phi, s.adam_phi);
  add_adam("adam_disc/", s.disc, s.adam_disc);
  return out;
}

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char bytes[8];
  std::memcpy(bytes, &bits, 8);
  out.append(bytes, 8);
}

double read_le(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string blobs;
  json index = json::array();
  for (const auto& b : blob_list(ckpt.state)) {
    const std::size_t offset = blobs.size();
    // Column-major element order.
    for (Eigen::Index i = 0; i < b.data->size(); ++i) append_le(blobs, b.data->data()[i]);
    index.push_back({{"name", b.name},
                     {"rows", b.data->rows()},
                     {"cols", b.data->cols()},
                     {"offset", offset},
                     {"length", blobs.size() - offset}});
  }
  const json manifest = {
      {"version", kCheckpointVersion},
      {"config", config_to_json(ckpt.config)},
      {"config_hash", config_hash(ckpt.config)},
      {"epoch", ckpt.state.epoch},
      {"rng_state", {{"seed", ckpt.config.seed}, {"epoch", ckpt.state.epoch}}},
      {"last_disc_loss", ckpt.state.last_disc_loss},
      {"adam_steps", {{"phi", ckpt.state.adam_phi.step}, {"disc", ckpt.state.adam_disc.step}}},
      {"blob_index", index}};
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out << manifest.dump() << '\n';
    out.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string header;
  if (!std::getline(in, header)) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": missing manifest");
  }
  json manifest;
  try {
    manifest = json::parse(header);
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint " + path.string() +
                          ": manifest is not JSON (" + e.what() + ")");
  }
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version mismatch: file has " +
                            std::to_string(version) + ", reader expects " +
                            std::to_string(kCheckpointVersion));
    }
    const std::string blobs{std::istreambuf_iterator<char>(in),
                            std::istreambuf_iterator<char>()};
    Checkpoint ckpt;
    ckpt.config = config_from_json(manifest.at("config"));
    ckpt.config_hash = manifest.at("config_hash").get<std::string>();
    if (ckpt.config_hash != config_hash(ckpt.config)) {
      throw CheckpointError("checkpoint config hash mismatch in " + path.string());
    }
    TrainingState s = TrainingState::initial(ckpt.config);
    s.epoch = manifest.at("epoch").get<int>();
    s.last_disc_loss = manifest.at("last_disc_loss").get<double>();
    s.adam_phi.step = manifest.at("adam_steps").at("phi").get<long>();
    s.adam_disc.step = manifest.at("adam_steps").at("disc").get<long>();

    std::size_t expected_total = 0;
    std::unordered_map<std::string, json> entries;
    for (const auto& e : manifest.at("blob_index")) {
      entries[e.at("name").get<std::string>()] = e;
      expected_total += e.at("length").get<std::size_t>();
    }
    if (blobs.size() != expected_total) {
      throw CheckpointError("corrupt blob section in " + path.string() + ": expected " +
                            std::to_string(expected_total) + " bytes, found " +
                            std::to_string(blobs.size()));
    }
    for (const auto& b : blob_list(s)) {
      auto it = entries.find(b.name);
      if (it == entries.end()) throw CheckpointError("checkpoint lacks blob " + b.name);
      const json& e = it->second;
      const auto rows = e.at("rows").get<Eigen::Index>();
      const auto cols = e.at("cols").get<Eigen::Index>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      if (rows != b.data->rows() || cols != b.data->cols() ||
          length != static_cast<std::size_t>(rows * cols) * 8 ||
          offset + length > blobs.size()) {
        throw CheckpointError("corrupt blob " + b.name + " in " + path.string());
      }
      auto* target = const_cast<Matrix*>(b.data);
      for (Eigen::Index i = 0; i < target->size(); ++i) {
        target->data()[i] = read_le(blobs.data() + offset + 8 * static_cast<std::size_t>(i));
      }
    }
    ckpt.state = std::move(s);
    return ckpt;
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest in " + path.string() + ": " +
                          e.what());
  }
}

// ---- metrics -----------------------------------------------------------------

std::string format_metrics_row(const MetricsRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.epoch,
                r.gan_loss, r.penalty, r.disc_loss, r.disc_mean_on_fake,
                r.min_eig_probe, r.wallclock_s);
  return buf;
}

// ---- orchestration -----------------------------------------------------------

Matrix generate_samples(const PotentialNet& phi, SourceDomain domain,
                        Eigen::Index n, std::uint64_t seed) {
  const SampleSet z = uniform_source(n, phi.dim(), domain, seed);
  return phi.gradient(z.points);
}

void write_samples_csv(const std::filesystem::path& path, const Matrix& points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[32];
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", points(i, j));
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

TrainResult run_training(const TrainConfig& config, const SampleSet& dataset,
                         const std::filesystem::path& out_dir,
                         const Checkpoint* resume) {
  config.validate();
  if (dataset.size() == 0) throw std::invalid_argument("run_training: empty dataset");
  if (dataset.dim() != config.dim()) {
    throw std::invalid_argument("run_training: data dimension does not match config");
  }
  std::filesystem::create_directories(out_dir);

  TrainResult result;
  TrainingState state = resume ? resume->state : TrainingState::initial(config);

  const auto metrics_path = out_dir / "metrics.csv";
  const bool append = resume != nullptr && std::filesystem::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  if (!append) metrics << kMetricsHeader << '\n' << std::flush;

  const Eigen::Index n = dataset.size();
  const Eigen::Index batch = std::min<Eigen::Index>(config.batch_size, n);
  const Eigen::Index steps = (n + batch - 1) / batch;
  const auto start_time = std::chrono::steady_clock::now();
  GeneratorHandle gen;
  NetPotential potential(state.phi);
  gen.potential = &potential;
  gen.domain = config.source_domain;

  for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    maybe_reinit_discriminator(state, config, epoch);
    const double factor = learning_rate_factor(config, epoch);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto shuffle_rng = make_rng(config.seed, {kShuffle, e});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double gan_sum = 0.0, disc_sum = 0.0, fake_sum = 0.0;
    for (Eigen::Index s = 0; s < steps; ++s) {
      const Eigen::Index begin = s * batch;
      const Eigen::Index len = std::min(batch, n - begin);
      Matrix real(dataset.dim(), len);
      for (Eigen::Index j = 0; j < len; ++j) {
        real.col(j) = dataset.points.col(order[static_cast<std::size_t>(begin + j)]);
      }
      const StepResult r =
          train_step(state, real, config,
                     derive(config.seed, {kStep, e, static_cast<std::uint64_t>(s)}),
                     config.lr_gen * factor, config.lr_disc * factor);
      gan_sum += r.generator.gan_term;
      disc_sum += r.disc_loss;
      fake_sum += r.disc_mean_on_fake;
    }
    state.epoch = epoch + 1;
    state.last_disc_loss = disc_sum / static_cast<double>(steps);

    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.gan_loss = gan_sum / static_cast<double>(steps);
    rec.disc_loss = state.last_disc_loss;
    rec.disc_mean_on_fake = fake_sum / static_cast<double>(steps);
    rec.penalty = convexity_penalty_empirical(state.phi, config.kappa,
                                              config.monitor_points,
                                              derive(config.seed, {kMonitorPenalty, e}),
                                              config.source_domain)
                      .value;
    rec.min_eig_probe =
        config.monitor_scan_points > 0
            ? strong_convexity_scan(gen, config.monitor_scan_points,
                                    derive(config.seed, {kMonitorScan, e}))
                  .min_eigenvalue_estimate
            : std::numeric_limits<double>::quiet_NaN();
    rec.wallclock_s =
        config.record_wallclock
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time)
                  .count()
            : 0.0;
    metrics << format_metrics_row(rec) << '\n' << std::flush;
    if (!metrics) throw std::runtime_error("write failed for " + metrics_path.string());
    result.metrics.push_back(rec);

    if (state.epoch % config.checkpoint_every == 0) {
      save_checkpoint(out_dir / ("checkpoint_epoch_" + std::to_string(state.epoch) + ".bin"),
                      {config, state, config_hash(config)});
    }
  }

  result.final_checkpoint = {config, state, config_hash(config)};
  save_checkpoint(out_dir / "checkpoint_final.bin", result.final_checkpoint);

  NetPotential final_potential(result.final_checkpoint.state.phi);
  GeneratorHandle final_gen{&final_potential, config.source_domain};
  if (config.monitor_scan_points > 0) {
    result.final_report = strong_convexity_scan(
        final_gen, config.monitor_scan_points,
        derive(config.seed, {kMonitorScan, static_cast<std::uint64_t>(state.epoch)}));
    if (!result.final_report.kappa_certified) {
      const std::string msg =
          "strong convexity certificate failed: min eigenvalue " +
          std::to_string(result.final_report.min_eigenvalue_estimate);
      if (config.abort_on_failed_certificate) throw std::runtime_error(msg);
      std::cerr << "warning: " << msg << '\n';
    }
  }
  return result;
}

}  // namespace brenier
