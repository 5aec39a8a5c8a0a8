#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "brenier/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace brenier;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "brenier_test_training" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig small_config() {
  TrainConfig c;
  c.generator_widths = {2, 8, 8, 1};
  c.discriminator_widths = {2, 16, 1};
  c.potential_init = InitScheme::fan_in;
  c.batch_size = 50;
  c.epochs = 5;
  c.penalty_samples = 10;
  c.monitor_points = 100;
  c.monitor_scan_points = 20;
  c.record_wallclock = false;
  c.reinit_policy = ReinitPolicy::every_k_until(2, 4);
  c.checkpoint_every = 2;
  c.data.n = 200;
  c.seed = 3;
  return c;
}

std::vector<ad::Parameter> one_param(double v) {
  return {{"w", Matrix::Constant(2, 2, v)}};
}

}  // namespace

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  auto p = one_param(1.5);
  AdamState s = AdamState::for_params(p);
  for (int i = 0; i < 10; ++i) adam_step(p, {Matrix::Zero(2, 2)}, s, 0.1);
  CHECK(p[0].value == Matrix::Constant(2, 2, 1.5));
  CHECK(s.step == 10);
}

TEST_CASE("adam step size tends to the learning rate under a constant gradient") {
  auto p = one_param(0.0);
  AdamState s = AdamState::for_params(p);
  const double lr = 0.01;
  double last = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double before = p[0].value(0, 0);
    adam_step(p, {Matrix::Constant(2, 2, 3.0)}, s, lr);
    last = before - p[0].value(0, 0);
  }
  CHECK(std::abs(last - lr) < 1e-6 * lr + 1e-9);
  CHECK(p[0].value(1, 1) < 0);
}

TEST_CASE("adam rejects non-finite gradients without mutating") {
  std::vector<ad::Parameter> p = {{"W1", Matrix::Ones(1, 1)}, {"B1", Matrix::Ones(1, 1)}};
  AdamState s = AdamState::for_params(p);
  Matrix bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(p, {Matrix::Ones(1, 1), bad}, s, 0.1);
    FAIL("expected an error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("B1") != std::string::npos);
  }
  CHECK(p[0].value(0, 0) == 1.0);
  CHECK(s.step == 0);
  CHECK_THROWS_AS(adam_step(p, {Matrix::Ones(2, 1), Matrix::Ones(1, 1)}, s, 0.1),
                  ad::ShapeError);
}

TEST_CASE("reinit policies") {
  const ReinitPolicy every = ReinitPolicy::every_k_until(50, 500);
  CHECK(reinit_due(every, 100, 0.7));
  CHECK(reinit_due(every, 500, 0.7));
  CHECK_FALSE(reinit_due(every, 600, 0.7));
  CHECK_FALSE(reinit_due(every, 0, 0.7));
  CHECK_FALSE(reinit_due(every, 101, 0.7));

  const ReinitPolicy band = ReinitPolicy::loss_band(0.001, 50);
  CHECK_FALSE(reinit_due(band, 10, 0.01));
  CHECK(reinit_due(band, 10, 0.0001));
  CHECK(reinit_due(band, 10, 60.0));
  CHECK_FALSE(reinit_due(ReinitPolicy::none(), 50, 0.0));

  TrainConfig c = small_config();
  TrainingState s = TrainingState::initial(c);
  const Matrix before = s.disc.weight(1);
  s.adam_disc.step = 7;
  CHECK_FALSE(maybe_reinit_discriminator(s, c, 1));
  CHECK(s.disc.weight(1) == before);
  CHECK(maybe_reinit_discriminator(s, c, 2));
  CHECK(s.disc.weight(1) != before);
  CHECK(s.adam_disc.step == 0);
}

TEST_CASE("linear decay schedule") {
  TrainConfig c = small_config();
  c.epochs = 10;
  CHECK(learning_rate_factor(c, 3) == 1.0);
  c.lr_schedule = LrSchedule::linear_decay;
  CHECK(learning_rate_factor(c, 0) == 1.0);
  CHECK(learning_rate_factor(c, 5) == doctest::Approx(0.5));
}

TEST_CASE("train_step is deterministic and moves both nets") {
  const TrainConfig c = small_config();
  const SampleSet data = load_dataset(c);
  const Matrix batch = data.points.leftCols(50);
  TrainingState a = TrainingState::initial(c);
  TrainingState b = TrainingState::initial(c);
  const Matrix phi0 = a.phi.weight(1);
  const Matrix disc0 = a.disc.weight(1);
  const StepResult ra = train_step(a, batch, c, 42, 1e-3, 1e-3);
  const StepResult rb = train_step(b, batch, c, 42, 1e-3, 1e-3);
  CHECK(ra.generator.total == rb.generator.total);
  CHECK(ra.disc_loss == rb.disc_loss);
  CHECK(a.phi.weight(1) == b.phi.weight(1));
  CHECK(a.phi.weight(1) != phi0);
  CHECK(a.disc.weight(1) != disc0);
  CHECK(a.adam_phi.step == 1);
  CHECK(a.adam_disc.step == c.disc_steps_per_gen_step);
  CHECK(ra.disc_mean_on_fake > 0.0);
  CHECK(ra.disc_mean_on_fake < 1.0);
  CHECK_THROWS(train_step(a, Matrix(2, 0), c, 1, 1e-3, 1e-3));
}

TEST_CASE("a heavy penalty drives the convexity penalty down") {
  TrainConfig c = small_config();
  c.gamma = 100.0;
  c.kappa = 0.5;
  c.penalty_samples = 200;
  const SampleSet data = load_dataset(c);
  TrainingState s = TrainingState::initial(c);
  const double start =
      convexity_penalty_empirical(s.phi, c.kappa, 2000, 9, c.source_domain).value;
  REQUIRE(start > 0);
  for (int i = 0; i < 200; ++i) {
    train_step(s, data.points.leftCols(50), c, 100 + i, 1e-2, 1e-3);
  }
  const double end =
      convexity_penalty_empirical(s.phi, c.kappa, 2000, 9, c.source_domain).value;
  CHECK(end < 0.1 * start);
}

TEST_CASE("checkpoint round trip is bit identical") {
  const TrainConfig c = small_config();
  TrainingState s = TrainingState::initial(c);
  const SampleSet data = load_dataset(c);
  for (int i = 0; i < 3; ++i) train_step(s, data.points.leftCols(50), c, i, 1e-3, 1e-3);
  s.epoch = 3;
  s.last_disc_loss = 0.6931;
  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir / "a.bin", {c, s, config_hash(c)});
  const Checkpoint back = load_checkpoint(dir / "a.bin");
  CHECK(back.config_hash == config_hash(c));
  CHECK(back.state.epoch == 3);
  CHECK(back.state.last_disc_loss == 0.6931);
  CHECK(back.state.adam_phi.step == 3);
  for (std::size_t i = 0; i < s.phi.params().size(); ++i) {
    CHECK(back.state.phi.params()[i].value == s.phi.params()[i].value);
    CHECK(back.state.adam_phi.m[i] == s.adam_phi.m[i]);
    CHECK(back.state.adam_phi.v[i] == s.adam_phi.v[i]);
  }
  for (std::size_t i = 0; i < s.disc.params().size(); ++i) {
    CHECK(back.state.disc.params()[i].value == s.disc.params()[i].value);
    CHECK(back.state.adam_disc.v[i] == s.adam_disc.v[i]);
  }
  save_checkpoint(dir / "b.bin", back);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK_FALSE(fs::exists(dir / "a.bin.tmp"));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const TrainConfig c = small_config();
  const TrainingState s = TrainingState::initial(c);
  const fs::path dir = scratch("corrupt");
  save_checkpoint(dir / "good.bin", {c, s, config_hash(c)});
  const std::string bytes = slurp(dir / "good.bin");

  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), CheckpointError);

  std::ofstream(dir / "head.bin", std::ios::binary) << bytes.substr(0, 40);
  CHECK_THROWS_AS(load_checkpoint(dir / "head.bin"), CheckpointError);

  std::string v2 = bytes;
  const auto pos = v2.find("\"version\":1");
  REQUIRE(pos != std::string::npos);
  v2.replace(pos, 11, "\"version\":2");
  std::ofstream(dir / "v2.bin", std::ios::binary) << v2;
  try {
    load_checkpoint(dir / "v2.bin");
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  std::string tampered = bytes;
  const auto g = tampered.find("\"gamma\":0.1");
  REQUIRE(g != std::string::npos);
  tampered.replace(g, 11, "\"gamma\":0.2");
  std::ofstream(dir / "hash.bin", std::ios::binary) << tampered;
  CHECK_THROWS_AS(load_checkpoint(dir / "hash.bin"), CheckpointError);

  CHECK_THROWS_AS(load_checkpoint(dir / "absent.bin"), CheckpointError);
}

TEST_CASE("training writes metrics and checkpoints") {
  const TrainConfig c = small_config();
  const fs::path dir = scratch("run");
  const TrainResult r = run_training(c, load_dataset(c), dir);
  REQUIRE(r.metrics.size() == 5);
  CHECK(r.final_checkpoint.state.epoch == 5);
  CHECK(fs::exists(dir / "checkpoint_epoch_2.bin"));
  CHECK(fs::exists(dir / "checkpoint_epoch_4.bin"));
  CHECK(fs::exists(dir / "checkpoint_final.bin"));
  const std::string text = slurp(dir / "metrics.csv");
  CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  CHECK(text.find('\r') == std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  for (const auto& m : r.metrics) {
    CHECK(std::isfinite(m.gan_loss));
    CHECK(m.penalty >= 0);
    CHECK(m.wallclock_s == 0.0);
  }
  CHECK(r.final_report.samples_scanned == 20);
}

TEST_CASE("resuming reproduces an uninterrupted run") {
  TrainConfig c = small_config();
  const SampleSet data = load_dataset(c);
  const fs::path full = scratch("full");
  run_training(c, data, full);

  TrainConfig first = c;
  first.epochs = 3;
  const fs::path split = scratch("split");
  run_training(first, data, split);
  Checkpoint ck = load_checkpoint(split / "checkpoint_final.bin");
  CHECK(ck.state.epoch == 3);
  ck.config = c;
  run_training(c, data, split, &ck);
  CHECK(slurp(full / "metrics.csv") == slurp(split / "metrics.csv"));
  CHECK(slurp(full / "checkpoint_final.bin") == slurp(split / "checkpoint_final.bin"));
}

TEST_CASE("zero epochs still writes a header and a checkpoint") {
  TrainConfig c = small_config();
  c.epochs = 0;
  const fs::path dir = scratch("zero");
  const TrainResult r = run_training(c, load_dataset(c), dir);
  CHECK(r.metrics.empty());
  CHECK(slurp(dir / "metrics.csv") == std::string(kMetricsHeader) + "\n");
  CHECK(load_checkpoint(dir / "checkpoint_final.bin").state.epoch == 0);
}

TEST_CASE("generated samples") {
  const TrainConfig c = small_config();
  const TrainingState s = TrainingState::initial(c);
  const Matrix a = generate_samples(s.phi, c.source_domain, 5, 1);
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 5);
  CHECK(a == generate_samples(s.phi, c.source_domain, 5, 1));
  const fs::path dir = scratch("samples");
  write_samples_csv(dir / "s.csv", a);
  const std::string text = slurp(dir / "s.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(std::count(text.begin(), text.end(), ',') == 5);
}

TEST_CASE("metrics rows keep full precision") {
  MetricsRecord r;
  r.epoch = 2;
  r.gan_loss = -0.1;
  r.penalty = 0.0;
  r.min_eig_probe = std::numeric_limits<double>::quiet_NaN();
  const std::string row = format_metrics_row(r);
  CHECK(row.rfind("2,-0.10000000000000001,0,", 0) == 0);
  CHECK(row.find("nan") != std::string::npos);
}
