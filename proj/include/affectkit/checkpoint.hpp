#pragma once

// Checkpoint container:
//
//   bytes 0..7   magic "AFKCKPT1"
//   bytes 8..15  header length L (uint64, little-endian)
//   next L bytes UTF-8 JSON header:
//                {"format", "version", "config", "step", "best_metric", "extra",
//                 "tensors": [{"name", "shape", "offset", "count"}, ...]}
//   remainder    float32 little-endian payload; tensor i starts at byte `offset`.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "affectkit/tensor.hpp"

namespace affectkit::checkpoint {

inline constexpr std::string_view kMagic = "AFKCKPT1";
inline constexpr int kFormatVersion = 1;

struct CheckpointManifest {
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> parameters;  // stored as float32
    std::size_t step = 0;
    double best_metric = 0.0;
    nlohmann::json extra = nlohmann::json::object();

    const Tensor* find(std::string_view name) const;
};

std::string encode(const CheckpointManifest& manifest);
CheckpointManifest decode(std::string_view bytes);

void save(const std::filesystem::path& path, const CheckpointManifest& manifest);
CheckpointManifest load(const std::filesystem::path& path);

}  // namespace affectkit::checkpoint
