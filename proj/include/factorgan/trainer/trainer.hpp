#pragma once

#include <map>
#include <string>

#include "factorgan/config.hpp"
#include "factorgan/nets/checkpoint.hpp"
#include "factorgan/shapeworld/dataset.hpp"

namespace fgan::trainer {

struct TrainOutcome {
  std::string checkpoint_path;
  std::int64_t final_step = 0;
};

// Phase-1 loop: alternating D/G updates; every G step draws a paired batch,
// reuses its images for the adversarial term and adds lambda_c * L_c.
// Checkpoints carry parameters, EMA, optimizer state and the rng stream, so
// a resumed run continues the interrupted one exactly.
TrainOutcome train_phase1(const ExperimentConfig& cfg,
                          const shapeworld::Dataset& data,
                          const std::string& out_dir,
                          const std::string& resume_checkpoint = "");

struct SnapshotMetrics {
  // attribute -> (mean d over shared-subvector pairs, mean d over
  // independent pairs, skipped pair count)
  struct Entry {
    double same = 0, diff = 0;
    std::int64_t skipped = 0;
  };
  std::map<std::string, Entry> per_attribute;
};

// Quick training telemetry on freshly sampled pairs (no truncation).
SnapshotMetrics evaluate_snapshot(
    const nets::Model& model,
    const std::vector<predictors::AttributeSpec>& specs, int n, Rng& rng);

// Exclusive marker for a run directory; removed on destruction.
class RunLock {
 public:
  explicit RunLock(const std::string& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

}  // namespace fgan::trainer
