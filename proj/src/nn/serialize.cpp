#include "ftip/nn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ftip::nn {

static_assert(std::endian::native == std::endian::little,
              "weight I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

using nlohmann::json;

json spec_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv:
        j["out_channels"] = l.out_channels;
        j["kernel_size"] = l.kernel_size;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        break;
      case LayerKind::maxpool:
        j["window"] = l.window;
        j["stride"] = l.stride;
        break;
      case LayerKind::fc:
        j["out_features"] = l.out_features;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"input", {spec.input.channels, spec.input.height, spec.input.width}},
          {"layers", std::move(layers)},
          {"output_dim", spec.output_dim}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  const auto& in = j.at("input");
  spec.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  for (const auto& lj : j.at("layers")) {
    LayerSpec l;
    l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
    switch (l.kind) {
      case LayerKind::conv:
        l = LayerSpec::conv(lj.at("out_channels"), lj.at("kernel_size"),
                            lj.at("stride"), lj.at("padding"));
        break;
      case LayerKind::maxpool:
        l = LayerSpec::maxpool(lj.at("window"), lj.at("stride"));
        break;
      case LayerKind::fc:
        l = LayerSpec::fc(lj.at("out_features"));
        break;
      default:
        break;
    }
    spec.layers.push_back(l);
  }
  spec.output_dim = j.at("output_dim");
  validate(spec);
  return spec;
}

namespace {

void append_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void append_floats(std::string& out, const float* p, Eigen::Index n) {
  out.append(reinterpret_cast<const char*>(p),
             static_cast<std::size_t>(n) * sizeof(float));
}

}  // namespace

std::string encode_weights(const NetworkSpec& spec,
                           const NetworkWeights<float>& weights) {
  validate(spec);
  check_weights(spec, weights);
  json table = json::array();
  for (const auto& p : parameter_shapes(spec))
    table.push_back({{"layer", p.layer}, {"name", p.name}, {"shape", p.shape}});
  const std::string header =
      json{{"version", 1}, {"spec", spec_to_json(spec)}, {"tensors", table}}
          .dump();

  std::string out(kWeightsMagic, 4);
  append_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& l : weights.layers) {
    if (l.empty()) continue;
    // Eigen storage is column-major; the file is row-major.
    const RowMatrix<float> rm = l.weight;
    append_floats(out, rm.data(), rm.size());
    append_floats(out, l.bias.data(), l.bias.size());
  }
  return out;
}

StoredNetwork decode_weights(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightsMagic, 4) != 0)
    throw WeightsFormatError(0, "not a weights file (bad magic bytes)");
  if (bytes.size() < 8)
    throw WeightsFormatError(
        bytes.size(), "truncated: missing bytes [4, 8) (header length)");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, 4);
  const std::uint64_t header_end = 8 + std::uint64_t{header_len};
  if (bytes.size() < header_end)
    throw WeightsFormatError(bytes.size(),
                             "truncated: missing bytes [" +
                                 std::to_string(bytes.size()) + ", " +
                                 std::to_string(header_end) + ") (header)");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + header_end);
  } catch (const json::exception& e) {
    throw WeightsFormatError(8, std::string("corrupt header: ") + e.what());
  }

  StoredNetwork out;
  std::vector<ParameterShape> expected;
  try {
    if (header.at("version").get<int>() != 1)
      throw WeightsFormatError(8, "unsupported version " +
                                      header.at("version").dump());
    out.spec = spec_from_json(header.at("spec"));
    expected = parameter_shapes(out.spec);
  } catch (const WeightsFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw WeightsFormatError(8, std::string("corrupt header: ") + e.what());
  }

  const auto& table = header.at("tensors");
  if (!table.is_array() || table.size() != expected.size())
    throw WeightsFormatError(8, "shape table has " + std::to_string(table.size()) +
                                    " entries, spec implies " +
                                    std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = table[i];
    if (e.value("layer", -1) != expected[i].layer ||
        e.value("name", "") != expected[i].name ||
        e.value("shape", Shape{}) != expected[i].shape)
      throw WeightsFormatError(8, "shape table entry " + std::to_string(i) +
                                      " disagrees with spec: expected layer " +
                                      std::to_string(expected[i].layer) + " " +
                                      expected[i].name + " " +
                                      shape_string(expected[i].shape));
  }

  std::uint64_t pos = header_end;
  auto read_block = [&](Eigen::Index count, float* dst) {
    const std::uint64_t len = static_cast<std::uint64_t>(count) * 4;
    if (bytes.size() < pos + len)
      throw WeightsFormatError(bytes.size(),
                               "truncated: missing bytes [" +
                                   std::to_string(bytes.size()) + ", " +
                                   std::to_string(pos + len) + ")");
    std::memcpy(dst, bytes.data() + pos, len);
    pos += len;
  };
  const auto shapes = propagate_shapes(out.spec);
  for (std::size_t i = 0; i < out.spec.layers.size(); ++i) {
    const auto& l = out.spec.layers[i];
    LayerParams<float> p;
    if (l.has_parameters()) {
      const Eigen::Index rows =
          l.kind == LayerKind::conv ? l.out_channels : l.out_features;
      const Eigen::Index cols =
          l.kind == LayerKind::conv
              ? Eigen::Index{shapes[i].channels} * l.kernel_size * l.kernel_size
              : shapes[i].size();
      RowMatrix<float> rm(rows, cols);
      read_block(rm.size(), rm.data());
      p.weight = rm;
      p.bias.resize(rows);
      read_block(rows, p.bias.data());
    }
    out.weights.layers.push_back(std::move(p));
  }
  if (pos != bytes.size())
    throw WeightsFormatError(pos, "trailing bytes [" + std::to_string(pos) +
                                      ", " + std::to_string(bytes.size()) +
                                      ") after last tensor");
  return out;
}

void save_weights(const NetworkSpec& spec, const NetworkWeights<float>& weights,
                  const std::filesystem::path& path) {
  const std::string bytes = encode_weights(spec, weights);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

StoredNetwork load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return decode_weights(ss.str());
  } catch (const WeightsFormatError& e) {
    throw WeightsFormatError(e.offset(), path.string() + ": " + e.what());
  }
}

}  // namespace ftip::nn
