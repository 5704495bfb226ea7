#include "ftip/cascade.hpp"
#include "ftip/nn/serialize.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

namespace ftip::cascade {

namespace fs = std::filesystem;

void write_descriptor(const ModelDescriptor& d, const fs::path& path) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["fill_mean"] = {d.fill_mean[0], d.fill_mean[1], d.fill_mean[2]};
  j["input_geometry"] = {{"train_size", d.geometry.train_size},
                         {"crop_size", d.geometry.crop_size},
                         {"mfd_patch_size", d.geometry.mfd_patch_size}};
  j["margin"] = d.margin;
  j["bias_max"] = d.bias_max;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

ModelDescriptor read_descriptor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing model descriptor: " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("version").get<int>() != 1)
      throw std::runtime_error("unsupported descriptor version");
    ModelDescriptor d;
    const auto& m = j.at("fill_mean");
    if (!m.is_array() || m.size() != 3) throw std::runtime_error("fill_mean needs 3 values");
    for (int c = 0; c < 3; ++c) d.fill_mean[c] = m[c].get<float>();
    const auto& g = j.at("input_geometry");
    d.geometry = {g.at("train_size").get<int>(), g.at("crop_size").get<int>(),
                  g.at("mfd_patch_size").get<int>()};
    d.geometry.validate();
    d.margin = j.at("margin").get<double>();
    d.bias_max = j.at("bias_max").get<int>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad model descriptor " + path.string() + ": " + e.what());
  }
}

void save_models(const TrainedModels& m, const fs::path& dir) {
  fs::create_directories(dir);
  nn::save_weights(m.rough_hand.spec, m.rough_hand.weights, dir / kRoughFile);
  nn::save_weights(m.attention_hand.spec, m.attention_hand.weights, dir / kAttentionFile);
  nn::save_weights(m.finger_multi.spec, m.finger_multi.weights, dir / kFingerMultiFile);
  nn::save_weights(m.finger_single.spec, m.finger_single.weights, dir / kFingerSingleFile);
  write_descriptor({m.fill_mean, m.geometry, m.margin, m.bias_max}, dir / kDescriptorFile);
}

TrainedModels load_models(const fs::path& dir) {
  for (const char* name :
       {kDescriptorFile, kRoughFile, kAttentionFile, kFingerMultiFile, kFingerSingleFile})
    if (!fs::exists(dir / name))
      throw std::runtime_error("missing model file: " + (dir / name).string());

  auto load = [&](const char* name) {
    auto stored = nn::load_weights(dir / name);
    return NetworkModel{std::move(stored.spec), std::move(stored.weights)};
  };
  TrainedModels m;
  const ModelDescriptor d = read_descriptor(dir / kDescriptorFile);
  m.fill_mean = d.fill_mean;
  m.geometry = d.geometry;
  m.margin = d.margin;
  m.bias_max = d.bias_max;
  m.rough_hand = load(kRoughFile);
  m.attention_hand = load(kAttentionFile);
  m.finger_multi = load(kFingerMultiFile);
  m.finger_single = load(kFingerSingleFile);
  m.validate();
  return m;
}

}  // namespace ftip::cascade
