#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clover/policy.hpp"

namespace clover {

// Tensor dump: magic, a JSON header (shapes + arbitrary metadata), then the
// raw little-endian doubles in header order. Round-trips bit-exactly.
struct TensorFile {
    nlohmann::ordered_json meta;
    std::vector<std::pair<std::string, std::vector<double>>> tensors;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

// Policy checkpoint with a config echo in the header.
void save_policy(const PolicyParams& params, const std::filesystem::path& path,
                 const nlohmann::ordered_json& extra_meta = {});
std::pair<PolicyParams, nlohmann::ordered_json> load_policy(const std::filesystem::path& path);

}  // namespace clover
