#include "factorgan/nets/nets.hpp"

namespace fgan::nets {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void GeneratorConfig::validate() const {
  if (!power_of_two(resolution) || resolution < 8)
    throw ValidationError("generator: resolution must be a power of two >= 8");
  const int blocks = num_blocks();
  if (blocks < 1 || (4 << blocks) != resolution)
    throw ValidationError(
        "generator: channels must list base plus one entry per x2 block");
  for (int c : channels)
    if (c < 1) throw ValidationError("generator: channels must be >= 1");
}

io::Json GeneratorConfig::to_json() const {
  return {{"resolution", resolution},
          {"channels", channels},
          {"noise_inputs", noise_inputs}};
}

GeneratorConfig GeneratorConfig::from_json(const io::Json& j) {
  GeneratorConfig c;
  c.resolution = j.at("resolution").get<int>();
  c.channels = j.at("channels").get<std::vector<int>>();
  c.noise_inputs = j.value("noise_inputs", false);
  c.validate();
  return c;
}

void DiscriminatorConfig::validate() const {
  if (!power_of_two(resolution) || resolution < 8)
    throw ValidationError(
        "discriminator: resolution must be a power of two >= 8");
  const int stages = static_cast<int>(channels.size()) - 1;
  if (stages < 1 || (4 << stages) != resolution)
    throw ValidationError(
        "discriminator: channels must step the resolution down to 4x4");
  for (int c : channels)
    if (c < 1) throw ValidationError("discriminator: channels must be >= 1");
}

io::Json DiscriminatorConfig::to_json() const {
  return {{"resolution", resolution}, {"channels", channels}};
}

DiscriminatorConfig DiscriminatorConfig::from_json(const io::Json& j) {
  DiscriminatorConfig c;
  c.resolution = j.at("resolution").get<int>();
  c.channels = j.at("channels").get<std::vector<int>>();
  c.validate();
  return c;
}

}  // namespace fgan::nets
