#pragma once

#include <cstdint>

#include "factorgan/predictors/predictors.hpp"
#include "factorgan/shapeworld/dataset.hpp"

namespace fgan::predictors {

struct CalibrationResult {
  double tau_plus = 0.0;
  double tau_minus = 0.0;
  std::int64_t same_pairs = 0;
  std::int64_t rand_pairs = 0;
};

// tau+ = spec.q_lo quantile of d_k over pairs whose ground-truth attribute
// falls in the same bin; tau- = spec.q_hi quantile over random pairs.
// Throws ThresholdInversion when tau+ >= tau- (non-discriminative
// predictor) and ValidationError when the dataset has fewer than 1000
// samples or the attribute has no ground-truth binning.
CalibrationResult calibrate_thresholds(const AttributeSpec& spec,
                                       const shapeworld::Dataset& data,
                                       int max_samples, std::uint64_t seed);

}  // namespace fgan::predictors
