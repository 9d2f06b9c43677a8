#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "factorgan/core/common.hpp"
#include "factorgan/core/rng.hpp"
#include "factorgan/io/json_io.hpp"

namespace fgan::latent {

struct SubspaceDef {
  std::string name;
  int z_dim = 0;
  int w_dim = 0;
};

// Declarative split of Z and W into N control subspaces plus "other" (last).
class LatentLayout {
 public:
  explicit LatentLayout(std::vector<SubspaceDef> subs);

  int num_subspaces() const { return static_cast<int>(subs_.size()); }
  int num_controls() const { return num_subspaces() - 1; }
  const SubspaceDef& sub(int k) const { return subs_.at(k); }
  const std::vector<SubspaceDef>& subs() const { return subs_; }
  int index_of(const std::string& name) const;
  bool has(const std::string& name) const;

  int z_dim() const { return z_total_; }
  int w_dim() const { return w_total_; }
  int z_offset(int k) const { return z_off_.at(k); }
  int w_offset(int k) const { return w_off_.at(k); }

  bool operator==(const LatentLayout& o) const;

  io::Json to_json() const;
  static LatentLayout from_json(const io::Json& j);

 private:
  std::vector<SubspaceDef> subs_;
  std::vector<int> z_off_, w_off_;
  int z_total_ = 0, w_total_ = 0;
};

using LayoutPtr = std::shared_ptr<const LatentLayout>;

enum class Space { Z, W };

// Flat vector plus named subvector views on a layout.
struct FactorizedVector {
  LayoutPtr layout;
  Space space = Space::Z;
  Eigen::VectorXd flat;

  FactorizedVector() = default;
  FactorizedVector(LayoutPtr l, Space s);
  FactorizedVector(LayoutPtr l, Space s, Eigen::VectorXd values);

  int dim_of(int k) const;
  int offset_of(int k) const;

  Eigen::VectorBlock<Eigen::VectorXd> sub(int k);
  Eigen::VectorBlock<const Eigen::VectorXd> sub(int k) const;
  Eigen::VectorBlock<Eigen::VectorXd> sub(const std::string& name);
  Eigen::VectorBlock<const Eigen::VectorXd> sub(const std::string& name) const;
};

struct PairEntry {
  int i = 0;
  int j = 0;
  std::string attribute;
};

// 2N latent vectors where pair (2k, 2k+1) shares exactly subspace k.
struct TrainingBatch {
  std::vector<FactorizedVector> z;
  std::vector<PairEntry> pair_map;
};

// i.i.d. standard normal latents.
std::vector<FactorizedVector> sample_z(const LayoutPtr& layout, int count,
                                       Rng& rng);

TrainingBatch build_batch(const LayoutPtr& layout, Rng& rng);

// Re-derives the pair map from exact subvector equality and checks it
// matches the declared one; throws ValidationError otherwise.
void validate_batch(const TrainingBatch& batch);

// Per-subspace empirical means of mapped latents.
struct WMeans {
  LayoutPtr layout;
  Eigen::VectorXd flat;  // W-space
};

WMeans subspace_stats(
    const std::function<FactorizedVector(const FactorizedVector&)>& mapping,
    const LayoutPtr& layout, int n_samples, Rng& rng);

// Per non-exempt subspace k: mean + psi * (w - mean); exempt subspaces pass
// through unchanged. Unknown exempt names are an error.
FactorizedVector truncate(const FactorizedVector& w, const WMeans& means,
                          double psi, const std::set<std::string>& exempt);

}  // namespace fgan::latent
