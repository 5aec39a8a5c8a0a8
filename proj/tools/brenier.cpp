// brenier: train, sample, certify and probe Brenier-potential GANs.

#include "brenier/config.hpp"
#include "brenier/eval.hpp"
#include "brenier/training.hpp"
#include "brenier/transport.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace brenier;

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string metrics;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> kappa;
  long n = 0;
  long points = 1000;
  int grid = 0;
};

Checkpoint open_checkpoint(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const CheckpointError& e) {
    throw IoError(e.what());
  }
}

int cmd_train(const Options& o) {
  TrainConfig config;
  try {
    config = load_config(o.config);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  if (o.seed) config.seed = *o.seed;
  if (o.epochs) config.epochs = *o.epochs;
  if (o.kappa) config.kappa = *o.kappa;
  config.validate();

  SampleSet data;
  try {
    data = load_dataset(config, o.data);
  } catch (const IdxError& e) {
    throw IoError(e.what());
  }
  const fs::path out = o.out;
  const TrainResult result = run_training(config, data, out);
  const Matrix samples =
      generate_samples(result.final_checkpoint.state.phi, config.source_domain,
                       config.sample_count, config.seed);
  write_samples_csv(out / "samples.csv", samples);
  std::printf("trained %d epochs; wrote %s\n", config.epochs,
              (out / "checkpoint_final.bin").c_str());
  return kOk;
}

int cmd_generate(const Options& o) {
  if (o.n < 1) throw UsageError("--n must be >= 1");
  const Checkpoint ckpt = open_checkpoint(o.checkpoint);
  const std::uint64_t seed = o.seed.value_or(ckpt.config.seed);
  const Matrix samples =
      generate_samples(ckpt.state.phi, ckpt.config.source_domain, o.n, seed);
  write_samples_csv(o.out, samples);
  return kOk;
}

void print_report(const ConvexityReport& r, double kappa) {
  std::printf("samples_scanned %lld\n", static_cast<long long>(r.samples_scanned));
  std::printf("min_eigenvalue %.17g\n", r.min_eigenvalue_estimate);
  std::printf("max_eigenvalue %.17g\n", r.max_eigenvalue_estimate);
  std::printf("worst_point");
  for (Eigen::Index i = 0; i < r.worst_point.size(); ++i) {
    std::printf(" %.17g", r.worst_point(i));
  }
  std::printf("\nkappa %.17g\n", kappa);
}

int cmd_verify(const Options& o) {
  if (o.points < 1) throw UsageError("--points must be >= 1");
  const Checkpoint ckpt = open_checkpoint(o.checkpoint);
  const double kappa = o.kappa.value_or(ckpt.config.kappa);
  NetPotential potential(ckpt.state.phi);
  const GeneratorHandle g{&potential, ckpt.config.source_domain};
  const ConvexityReport r =
      strong_convexity_scan(g, o.points, o.seed.value_or(ckpt.config.seed));
  print_report(r, kappa);
  const bool ok = r.min_eigenvalue_estimate >= kappa;
  std::printf("%s\n", ok ? "certified" : "not certified");
  return ok ? kOk : kCheckFailed;
}

int cmd_probe(const Options& o) {
  const Checkpoint ckpt = open_checkpoint(o.checkpoint);
  const TrainConfig& config = ckpt.config;
  const std::uint64_t seed = o.seed.value_or(config.seed);
  SampleSet real;
  try {
    real = load_dataset(config, o.data);
  } catch (const IdxError& e) {
    throw IoError(e.what());
  }
  const SampleSet fake{generate_samples(ckpt.state.phi, config.source_domain,
                                        real.size(), seed),
                       Origin::generated};
  std::vector<std::pair<std::string, double>> rows;
  const Balance b = discriminator_balance(ckpt.state.disc, real, fake);
  rows.emplace_back("disc_mean_real", b.mean_real);
  rows.emplace_back("disc_mean_fake", b.mean_fake);
  if (config.dim() <= 2) {
    const JsEstimate js = js_from_samples(real, fake, 0.1, 200);
    rows.emplace_back("js_divergence", js.value);
    rows.emplace_back("js_divergence_double_h", js.value_double_h);
  }
  const fs::path metrics =
      o.metrics.empty() ? fs::path(o.checkpoint).parent_path() / "metrics.csv"
                        : fs::path(o.metrics);
  if (fs::exists(metrics)) {
    const std::vector<double> history = convexity_history(metrics);
    if (!history.empty()) {
      std::size_t zeros = 0;
      for (double v : history) zeros += v == kLogFloor;
      rows.emplace_back("penalty_final", history.back());
      rows.emplace_back("penalty_zero_fraction",
                        static_cast<double>(zeros) / static_cast<double>(history.size()));
    }
  }
  write_eval_csv(o.out, rows);

  if (o.grid > 0) {
    if (config.dim() != 2) throw UsageError("--dump-potential-grid needs d = 2");
    const double lo = domain_low(config.source_domain);
    const double hi = domain_high(config.source_domain);
    const auto grid = DensityGrid::build(lo, hi, o.grid, [&](const Matrix& pts) {
      return Vector(ckpt.state.phi.evaluate(pts).row(0).transpose());
    });
    const fs::path path = fs::path(o.out).parent_path() / "potential_grid.csv";
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "x,y,phi\n";
    char buf[96];
    for (Eigen::Index i = 0; i < grid.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < grid.values.cols(); ++j) {
        const Vector p = grid.point(i, j);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p(0), p(1),
                      grid.values(i, j));
        f << buf;
      }
    }
    if (!f) throw IoError("write failed for " + path.string());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brenier-potential GAN training and diagnostics"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a potential and discriminator");
  train->add_option("--config", o.config, "JSON config")->required();
  train->add_option("--out", o.out, "output directory")->required();
  train->add_option("--data", o.data, "directory holding IDX files");
  train->add_option("--seed", o.seed, "override config seed");
  train->add_option("--epochs", o.epochs, "override config epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--kappa", o.kappa, "override config kappa");

  auto* generate = app.add_subcommand("generate", "sample G(Z) from a checkpoint");
  generate->add_option("--checkpoint", o.checkpoint)->required();
  generate->add_option("--n", o.n, "number of samples")->required();
  generate->add_option("--seed", o.seed);
  generate->add_option("--out", o.out, "CSV path")->required();

  auto* verify = app.add_subcommand("verify-convexity",
                                    "scan Hessian eigenvalues of the potential");
  verify->add_option("--checkpoint", o.checkpoint)->required();
  verify->add_option("--points", o.points, "scan points");
  verify->add_option("--kappa", o.kappa, "required lower bound");
  verify->add_option("--seed", o.seed);

  auto* probe = app.add_subcommand("probe", "balance, JS and convexity history");
  probe->add_option("--checkpoint", o.checkpoint)->required();
  probe->add_option("--data", o.data, "directory holding IDX files");
  probe->add_option("--metrics", o.metrics, "metrics CSV (default: next to checkpoint)");
  probe->add_option("--out", o.out, "eval CSV path")->required();
  probe->add_option("--seed", o.seed);
  probe->add_option("--dump-potential-grid", o.grid,
                    "also write potential_grid.csv on an N x N grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(o);
    if (*generate) return cmd_generate(o);
    if (*verify) return cmd_verify(o);
    if (*probe) return cmd_probe(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
