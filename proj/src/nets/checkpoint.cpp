#include "factorgan/nets/checkpoint.hpp"

#include "factorgan/io/bundle.hpp"

namespace fgan::nets {

Model Model::build(const latent::LayoutPtr& layout,
                   const GeneratorConfig& gcfg,
                   const DiscriminatorConfig& dcfg, int mapping_depth,
                   int mapping_width_min, std::uint64_t init_seed) {
  if (gcfg.resolution != dcfg.resolution)
    throw ValidationError("model: generator/discriminator resolution differ");
  Rng root = Rng::seeded(init_seed);
  Rng rng_map = root.derive("init.mapping");
  Rng rng_gen = root.derive("init.generator");
  Rng rng_disc = root.derive("init.discriminator");
  Model m;
  m.layout = layout;
  m.mapping =
      MappingStack<float>(layout, mapping_depth, mapping_width_min, rng_map);
  m.gen = Generator<float>(layout, gcfg, rng_gen);
  m.disc = Discriminator<float>(dcfg, rng_disc);
  m.mapping_depth = mapping_depth;
  m.mapping_width_min = mapping_width_min;
  return m;
}

std::vector<ad::Tensor<float>> Model::g_params() const {
  std::vector<ad::Tensor<float>> out = mapping.params().params;
  const auto& gp = gen.params().params;
  out.insert(out.end(), gp.begin(), gp.end());
  return out;
}

std::vector<ad::Tensor<float>> Model::d_params() const {
  return disc.params().params;
}

namespace {

std::vector<float> to_blob(const ad::ArrayX<float>& a) {
  return std::vector<float>(a.data(), a.data() + a.size());
}

ad::ArrayX<float> from_blob(const std::vector<float>& v) {
  ad::ArrayX<float> a(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    a[static_cast<Eigen::Index>(i)] = v[i];
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state) {
  io::TensorBundle b;
  b.meta["kind"] = "checkpoint";
  b.meta["layout"] = state.model.layout->to_json();
  b.meta["generator"] = state.model.gen.config().to_json();
  b.meta["discriminator"] = state.model.disc.config().to_json();
  b.meta["mapping_depth"] = state.model.mapping_depth;
  b.meta["mapping_width_min"] = state.model.mapping_width_min;
  b.meta["step"] = state.step;
  b.meta["rng_state"] = state.rng_state;
  b.meta["config_hash"] = state.config_hash;
  b.meta["init_seed"] = state.init_seed;
  b.meta["g_opt_t"] = state.g_opt_t;
  b.meta["d_opt_t"] = state.d_opt_t;

  for (const auto& p : state.model.g_params())
    b.blobs.emplace_back("param." + p.name(), to_blob(p.value()));
  for (const auto& p : state.model.d_params())
    b.blobs.emplace_back("param." + p.name(), to_blob(p.value()));
  const auto g_params = state.model.g_params();
  for (std::size_t i = 0; i < state.ema_values.size(); ++i)
    b.blobs.emplace_back("ema." + g_params[i].name(),
                         to_blob(state.ema_values[i]));
  for (std::size_t i = 0; i < state.g_opt.size(); ++i)
    b.blobs.emplace_back("gopt." + std::to_string(i), to_blob(state.g_opt[i]));
  for (std::size_t i = 0; i < state.d_opt.size(); ++i)
    b.blobs.emplace_back("dopt." + std::to_string(i), to_blob(state.d_opt[i]));
  {
    std::vector<float> wm(state.w_means.size());
    for (int i = 0; i < state.w_means.size(); ++i)
      wm[i] = static_cast<float>(state.w_means[i]);
    b.blobs.emplace_back("w_means", std::move(wm));
  }
  save_bundle(path, b);
}

ModelState load_checkpoint(const std::string& path) {
  const io::TensorBundle b = io::load_bundle(path);
  if (b.meta.value("kind", "") != "checkpoint")
    throw ValidationError(path + " is not a checkpoint");

  auto layout = std::make_shared<latent::LatentLayout>(
      latent::LatentLayout::from_json(b.meta.at("layout")));
  ModelState st;
  st.init_seed = b.meta.at("init_seed").get<std::uint64_t>();
  st.model = Model::build(layout,
                          GeneratorConfig::from_json(b.meta.at("generator")),
                          DiscriminatorConfig::from_json(
                              b.meta.at("discriminator")),
                          b.meta.at("mapping_depth").get<int>(),
                          b.meta.at("mapping_width_min").get<int>(),
                          st.init_seed);
  st.step = b.meta.at("step").get<std::int64_t>();
  st.rng_state = b.meta.at("rng_state").get<std::string>();
  st.config_hash = b.meta.at("config_hash").get<std::string>();
  st.g_opt_t = b.meta.at("g_opt_t").get<std::int64_t>();
  st.d_opt_t = b.meta.at("d_opt_t").get<std::int64_t>();

  auto load_params = [&](std::vector<ad::Tensor<float>> params) {
    for (auto& p : params) {
      const auto& blob = b.blob("param." + p.name());
      if (static_cast<std::int64_t>(blob.size()) != p.numel())
        throw ValidationError("checkpoint: size mismatch for " + p.name());
      p.mutable_value() = from_blob(blob);
    }
  };
  load_params(st.model.g_params());
  load_params(st.model.d_params());

  for (const auto& p : st.model.g_params())
    st.ema_values.push_back(from_blob(b.blob("ema." + p.name())));
  for (std::size_t i = 0; b.has_blob("gopt." + std::to_string(i)); ++i)
    st.g_opt.push_back(from_blob(b.blob("gopt." + std::to_string(i))));
  for (std::size_t i = 0; b.has_blob("dopt." + std::to_string(i)); ++i)
    st.d_opt.push_back(from_blob(b.blob("dopt." + std::to_string(i))));

  const auto& wm = b.blob("w_means");
  st.w_means = Eigen::VectorXd(wm.size());
  for (std::size_t i = 0; i < wm.size(); ++i) st.w_means[i] = wm[i];
  return st;
}

Model ema_model(const ModelState& state) {
  Model m = Model::build(state.model.layout, state.model.gen.config(),
                         state.model.disc.config(), state.model.mapping_depth,
                         state.model.mapping_width_min, state.init_seed);
  auto params = m.g_params();
  if (params.size() != state.ema_values.size())
    throw ValidationError("checkpoint: EMA parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].mutable_value() = state.ema_values[i];
  // Discriminator weights come along for completeness.
  auto dsrc = state.model.d_params();
  auto ddst = m.d_params();
  for (std::size_t i = 0; i < ddst.size(); ++i)
    ddst[i].mutable_value() = dsrc[i].value();
  return m;
}

latent::WMeans checkpoint_w_means(const ModelState& state) {
  return {state.model.layout, state.w_means};
}

}  // namespace fgan::nets
