#pragma once

// Brute-force enumeration oracle for the factorized contrastive loss,
// written directly from the loss definition and independent of the library
// implementation: ordered pairs i != j, per-attribute hinge terms
// normalized by the ordered pair counts C_k^+/-. Distances are recomputed
// here from raw embedding values with plain Eigen math.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

namespace fgan::testing {

struct OracleAttribute {
  std::string name;
  int subspace = 0;                         // index into z subvectors
  std::vector<std::vector<Eigen::VectorXd>> emb;  // [predictor][image]
  std::string metric;                       // "L1" | "L2" | "cosine" | "axis"
  double tau_plus = 0, tau_minus = 0;
  double weight = 1.0;
};

inline double oracle_metric(const std::string& metric,
                            const Eigen::VectorXd& a,
                            const Eigen::VectorXd& b) {
  if (metric == "L1") return (a - b).cwiseAbs().sum();
  if (metric == "L2") return (a - b).norm();
  if (metric == "cosine") return 1.0 - a.dot(b) / (a.norm() * b.norm());
  if (metric == "axis") {
    const double d = std::abs(a[0] - b[0]);
    return std::min(d, 180.0 - d);
  }
  throw std::runtime_error("oracle: unknown metric " + metric);
}

// z: per image, per subspace, the subvector values.
inline double contrastive_oracle(
    const std::vector<std::vector<Eigen::VectorXd>>& z,
    const std::vector<OracleAttribute>& attrs) {
  const int nb = static_cast<int>(z.size());
  double total = 0.0;
  for (const auto& a : attrs) {
    // ordered-pair counts
    double c_pos = 0, c_neg = 0;
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) {
        if (i == j) continue;
        (z[i][a.subspace] == z[j][a.subspace]) ? ++c_pos : ++c_neg;
      }
    double sum = 0.0;
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) {
        if (i == j) continue;
        double d = 0.0;
        for (const auto& pred : a.emb)
          d += oracle_metric(a.metric, pred[i], pred[j]);
        if (z[i][a.subspace] == z[j][a.subspace])
          sum += std::max(d - a.tau_plus, 0.0) / c_pos;
        else
          sum += std::max(a.tau_minus - d, 0.0) / c_neg;
      }
    total += a.weight * sum;
  }
  return total;
}

}  // namespace fgan::testing
