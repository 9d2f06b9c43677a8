#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "factorgan/core/hash.hpp"
#include "factorgan/io/table.hpp"
#include "factorgan/trainer/trainer.hpp"
#include "support/test_config.hpp"

using namespace fgan;
using namespace fgan::trainer;
namespace fs = std::filesystem;

namespace {

void wipe(const fs::path& p) { fs::remove_all(p); }

}  // namespace

TEST_CASE("smoke run: finite losses, parseable log, final checkpoint") {
  auto cfg = testing::tiny_config(40);
  auto data = testing::tiny_dataset(cfg, "smoke");
  const auto dir = fs::temp_directory_path() / "fgan_run_smoke";
  wipe(dir);

  auto out = train_phase1(cfg, data, dir.string());
  CHECK(out.final_step == 40);
  CHECK(fs::exists(out.checkpoint_path));
  CHECK(fs::exists(dir / "manifest.json"));

  const auto log = io::read_csv((dir / "metrics.csv").string());
  CHECK(log.rows.size() >= 8);
  for (const auto& row : log.rows)
    for (double v : row) CHECK(std::isfinite(v));

  // checkpoint round-trip: identical forward outputs on a probe batch
  auto st = nets::load_checkpoint(out.checkpoint_path);
  CHECK(st.step == 40);
  auto rng = Rng::seeded(3);
  auto zs = latent::sample_z(cfg.layout, 2, rng);
  ad::NoGradGuard ng;
  auto za = st.model.mapping.map_vector(zs[0]);
  auto zb = st.model.mapping.map_vector(zs[0]);
  CHECK(za.flat == zb.flat);
  wipe(dir);
}

TEST_CASE("resume reproduces the uninterrupted run exactly") {
  auto cfg = testing::tiny_config(30);
  cfg.trainer.save_interval = 15;
  auto data = testing::tiny_dataset(cfg, "smoke");

  const auto dir_a = fs::temp_directory_path() / "fgan_run_a";
  const auto dir_b = fs::temp_directory_path() / "fgan_run_b";
  wipe(dir_a);
  wipe(dir_b);

  auto full = train_phase1(cfg, data, dir_a.string());
  REQUIRE(fs::exists(dir_a / "step_00000015.ckpt"));

  auto resumed = train_phase1(cfg, data, dir_b.string(),
                              (dir_a / "step_00000015.ckpt").string());
  CHECK(hash_file(full.checkpoint_path) ==
        hash_file(resumed.checkpoint_path));
  wipe(dir_a);
  wipe(dir_b);
}

TEST_CASE("resume rejects a checkpoint from a different config") {
  auto cfg = testing::tiny_config(20);
  cfg.trainer.save_interval = 10;
  auto data = testing::tiny_dataset(cfg, "smoke");
  const auto dir = fs::temp_directory_path() / "fgan_run_c";
  wipe(dir);
  train_phase1(cfg, data, dir.string());

  auto other = cfg;
  other.trainer.lambda_c = 2.0f;
  const auto dir2 = fs::temp_directory_path() / "fgan_run_d";
  wipe(dir2);
  CHECK_THROWS_AS(train_phase1(other, data, dir2.string(),
                               (dir / "step_00000010.ckpt").string()),
                  ValidationError);
  wipe(dir);
  wipe(dir2);
}

TEST_CASE("training requires resolved thresholds and a matching dataset") {
  auto cfg = testing::tiny_config(10);
  auto data = testing::tiny_dataset(cfg, "smoke");
  auto unresolved = cfg;
  unresolved.attributes[0].taus_set = false;
  const auto dir = fs::temp_directory_path() / "fgan_run_e";
  wipe(dir);
  CHECK_THROWS_AS(train_phase1(unresolved, data, dir.string()),
                  ValidationError);
  wipe(dir);
}

TEST_CASE("run lock blocks concurrent runs on the same directory") {
  const auto dir = fs::temp_directory_path() / "fgan_lock";
  wipe(dir);
  {
    RunLock lock(dir.string());
    CHECK_THROWS_AS(RunLock second(dir.string()), ValidationError);
  }
  // released on destruction
  RunLock third(dir.string());
  wipe(dir);
}

TEST_CASE("evaluate_snapshot: untrained ratios near 1, n validation") {
  auto cfg = testing::tiny_config(10);
  auto model = nets::Model::build(cfg.layout, cfg.gen, cfg.disc,
                                  cfg.mapping_depth, cfg.mapping_width_min,
                                  99);
  auto rng = Rng::seeded(5);
  CHECK_THROWS_AS(evaluate_snapshot(model, cfg.attributes, 0, rng),
                  ValidationError);
  CHECK_THROWS_AS(evaluate_snapshot(model, cfg.attributes, 63, rng),
                  ValidationError);

  auto m = evaluate_snapshot(model, cfg.attributes, 96, rng);
  for (const auto& [name, e] : m.per_attribute) {
    INFO("attribute " << name);
    if (e.same > 0 && e.diff > 0) {
      const double ratio = e.same / e.diff;
      CHECK(ratio > 0.4);
      CHECK(ratio < 2.5);
    }
  }
}
