#pragma once

#include "ftip/nn/network.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>

namespace ftip::nn {

// Weight file layout:
//   "CDW1" | u32 LE header length | UTF-8 JSON header | f32 LE parameters
// The header holds the NetworkSpec and the ordered shape table; parameters
// follow in table order, each tensor row-major.
inline constexpr char kWeightsMagic[4] = {'C', 'D', 'W', '1'};

class WeightsFormatError : public std::runtime_error {
 public:
  WeightsFormatError(std::uint64_t offset, const std::string& what)
      : std::runtime_error(what), offset_(offset) {}
  // Byte offset of the first inconsistency.
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

struct StoredNetwork {
  NetworkSpec spec;
  NetworkWeights<float> weights;
};

std::string encode_weights(const NetworkSpec& spec,
                           const NetworkWeights<float>& weights);
StoredNetwork decode_weights(const std::string& bytes);

void save_weights(const NetworkSpec& spec, const NetworkWeights<float>& weights,
                  const std::filesystem::path& path);
StoredNetwork load_weights(const std::filesystem::path& path);

}  // namespace ftip::nn
