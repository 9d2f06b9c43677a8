#include "factorgan/latent/latent.hpp"

#include <algorithm>
#include <map>

namespace fgan::latent {

LatentLayout::LatentLayout(std::vector<SubspaceDef> subs)
    : subs_(std::move(subs)) {
  if (subs_.size() < 2)
    throw ValidationError("layout needs at least one control plus 'other'");
  std::set<std::string> names;
  for (const auto& s : subs_) {
    if (s.name.empty()) throw ValidationError("layout: empty subspace name");
    if (!names.insert(s.name).second)
      throw ValidationError("layout: duplicate subspace '" + s.name + "'");
    if (s.z_dim < 1 || s.w_dim < 1)
      throw ValidationError("layout: subspace '" + s.name +
                            "' needs dims >= 1");
  }
  if (subs_.back().name != "other")
    throw ValidationError("layout: last subspace must be named 'other'");
  for (const auto& s : subs_) {
    z_off_.push_back(z_total_);
    w_off_.push_back(w_total_);
    z_total_ += s.z_dim;
    w_total_ += s.w_dim;
  }
}

int LatentLayout::index_of(const std::string& name) const {
  for (std::size_t k = 0; k < subs_.size(); ++k)
    if (subs_[k].name == name) return static_cast<int>(k);
  throw ValidationError("layout: unknown subspace '" + name + "'");
}

bool LatentLayout::has(const std::string& name) const {
  for (const auto& s : subs_)
    if (s.name == name) return true;
  return false;
}

bool LatentLayout::operator==(const LatentLayout& o) const {
  if (subs_.size() != o.subs_.size()) return false;
  for (std::size_t k = 0; k < subs_.size(); ++k)
    if (subs_[k].name != o.subs_[k].name ||
        subs_[k].z_dim != o.subs_[k].z_dim ||
        subs_[k].w_dim != o.subs_[k].w_dim)
      return false;
  return true;
}

io::Json LatentLayout::to_json() const {
  io::Json j = io::Json::array();
  for (const auto& s : subs_)
    j.push_back({{"name", s.name}, {"z_dim", s.z_dim}, {"w_dim", s.w_dim}});
  return j;
}

LatentLayout LatentLayout::from_json(const io::Json& j) {
  std::vector<SubspaceDef> subs;
  for (const auto& e : j)
    subs.push_back({e.at("name").get<std::string>(), e.at("z_dim").get<int>(),
                    e.at("w_dim").get<int>()});
  return LatentLayout(std::move(subs));
}

FactorizedVector::FactorizedVector(LayoutPtr l, Space s)
    : layout(std::move(l)), space(s) {
  flat = Eigen::VectorXd::Zero(space == Space::Z ? layout->z_dim()
                                                 : layout->w_dim());
}

FactorizedVector::FactorizedVector(LayoutPtr l, Space s,
                                   Eigen::VectorXd values)
    : layout(std::move(l)), space(s), flat(std::move(values)) {
  const int want =
      space == Space::Z ? layout->z_dim() : layout->w_dim();
  if (flat.size() != want)
    throw ValidationError("factorized vector length does not match layout");
}

int FactorizedVector::dim_of(int k) const {
  return space == Space::Z ? layout->sub(k).z_dim : layout->sub(k).w_dim;
}
int FactorizedVector::offset_of(int k) const {
  return space == Space::Z ? layout->z_offset(k) : layout->w_offset(k);
}

Eigen::VectorBlock<Eigen::VectorXd> FactorizedVector::sub(int k) {
  return flat.segment(offset_of(k), dim_of(k));
}
Eigen::VectorBlock<const Eigen::VectorXd> FactorizedVector::sub(int k) const {
  return flat.segment(offset_of(k), dim_of(k));
}
Eigen::VectorBlock<Eigen::VectorXd> FactorizedVector::sub(
    const std::string& name) {
  return sub(layout->index_of(name));
}
Eigen::VectorBlock<const Eigen::VectorXd> FactorizedVector::sub(
    const std::string& name) const {
  return sub(layout->index_of(name));
}

std::vector<FactorizedVector> sample_z(const LayoutPtr& layout, int count,
                                       Rng& rng) {
  if (count < 1) throw ValidationError("sample_z: count must be >= 1");
  std::vector<FactorizedVector> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    FactorizedVector v(layout, Space::Z);
    for (int d = 0; d < v.flat.size(); ++d) v.flat[d] = rng.normal();
    out.push_back(std::move(v));
  }
  return out;
}

TrainingBatch build_batch(const LayoutPtr& layout, Rng& rng) {
  const int n = layout->num_controls();
  if (n < 1) throw ValidationError("build_batch: layout has no controls");
  TrainingBatch batch;
  batch.z = sample_z(layout, 2 * n, rng);
  for (int k = 0; k < n; ++k) {
    const int i = 2 * k, j = 2 * k + 1;
    batch.z[j].sub(k) = batch.z[i].sub(k);  // shared subvector, bit-exact
    batch.pair_map.push_back({i, j, layout->sub(k).name});
  }
  return batch;
}

void validate_batch(const TrainingBatch& batch) {
  if (batch.z.empty()) throw ValidationError("batch: empty");
  const LayoutPtr layout = batch.z[0].layout;
  const int nb = static_cast<int>(batch.z.size());

  // Derive shared pairs from exact equality.
  std::vector<PairEntry> derived;
  for (int i = 0; i < nb; ++i)
    for (int j = i + 1; j < nb; ++j)
      for (int k = 0; k < layout->num_subspaces(); ++k)
        if (batch.z[i].sub(k) == batch.z[j].sub(k)) {
          if (k == layout->num_subspaces() - 1)
            throw ValidationError("batch: pair shares the 'other' subspace");
          derived.push_back({i, j, layout->sub(k).name});
        }

  if (derived.size() != batch.pair_map.size())
    throw ValidationError("batch: derived pair map size mismatch");
  std::set<std::string> seen;
  for (std::size_t p = 0; p < derived.size(); ++p) {
    const auto& d = derived[p];
    const auto& e = batch.pair_map[p];
    if (d.i != e.i || d.j != e.j || d.attribute != e.attribute)
      throw ValidationError("batch: derived pair map differs from declared");
    if (!seen.insert(d.attribute).second)
      throw ValidationError("batch: attribute '" + d.attribute +
                            "' shared by more than one pair");
  }
  for (int k = 0; k < layout->num_controls(); ++k)
    if (!seen.count(layout->sub(k).name))
      throw ValidationError("batch: attribute '" + layout->sub(k).name +
                            "' has no shared pair");
}

WMeans subspace_stats(
    const std::function<FactorizedVector(const FactorizedVector&)>& mapping,
    const LayoutPtr& layout, int n_samples, Rng& rng) {
  if (n_samples < 1000)
    throw ValidationError("subspace_stats: n_samples must be >= 1000");
  WMeans m{layout, Eigen::VectorXd::Zero(layout->w_dim())};
  for (int i = 0; i < n_samples; ++i) {
    FactorizedVector z(layout, Space::Z);
    for (int d = 0; d < z.flat.size(); ++d) z.flat[d] = rng.normal();
    const FactorizedVector w = mapping(z);
    if (w.space != Space::W || w.flat.size() != layout->w_dim())
      throw ValidationError("subspace_stats: mapping returned wrong space");
    m.flat += w.flat;
  }
  m.flat /= static_cast<double>(n_samples);
  return m;
}

FactorizedVector truncate(const FactorizedVector& w, const WMeans& means,
                          double psi, const std::set<std::string>& exempt) {
  if (w.space != Space::W)
    throw ValidationError("truncate operates on W-space vectors");
  if (!(psi >= 0.0 && psi <= 1.0))
    throw ValidationError("truncate: psi must be in [0,1]");
  for (const auto& name : exempt)
    if (!w.layout->has(name))
      throw ValidationError("truncate: unknown exempt subspace '" + name +
                            "'");
  FactorizedVector out = w;
  if (psi == 1.0) return out;  // exact identity
  for (int k = 0; k < w.layout->num_subspaces(); ++k) {
    if (exempt.count(w.layout->sub(k).name)) continue;
    const auto mean_k =
        means.flat.segment(w.layout->w_offset(k), w.layout->sub(k).w_dim);
    out.sub(k) = mean_k + psi * (w.sub(k) - mean_k);
  }
  return out;
}

}  // namespace fgan::latent
