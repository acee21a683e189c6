#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "affectkit/backbone.hpp"
#include "affectkit/task.hpp"

namespace affectkit {

enum class HeadKind { Fc, Lstm };

HeadKind parse_head(std::string_view name);
std::string head_name(HeadKind head);

// Which backbone stages keep their (pretrained or initial) weights.
struct FreezeFlags {
    bool backbone = true;   // trunk
    bool attention = true;  // dual-direction attention
    bool gdconv = true;     // global depthwise pooling + projection

    bool all() const { return backbone && attention && gdconv; }
};

struct OptimizerConfig {
    std::string name = "adam";
    // Unset: 1e-3 when every backbone stage is frozen, 1e-4 otherwise.
    std::optional<double> learning_rate;
    std::size_t batch_size = 32;  // frames per step
    std::size_t steps = 300;
    std::size_t eval_every = 25;
};

struct DataPaths {
    std::string root;           // empty -> $AFFECTKIT_DATA
    std::string index;          // curated JSONL, relative to root unless absolute; "{task}" expands
    std::string images = "images";
    std::string train_split = "train";
    std::string val_split = "val";
};

struct ClipConfig {
    std::string provider = "stub";
    std::uint64_t provider_seed = 0;
    std::string prompt_template = "a face showing {emotion}";
    std::vector<std::string> categories;  // empty -> default 8 names
    double temperature = 1.0;
};

struct RunConfig {
    Task task = Task::EXPR;
    HeadKind head = HeadKind::Fc;
    bool clip = false;
    backbone::BackboneConfig backbone = backbone::BackboneConfig::preset_named("tiny");
    std::string backbone_weights;  // optional checkpoint whose backbone.* tensors are imported
    FreezeFlags freeze;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    std::size_t lstm_hidden = 256;
    std::size_t window = 16;
    double va_min = -1.0;
    double va_max = 1.0;
    ClipConfig clip_config;
    DataPaths data;
    std::string out;  // checkpoint destination used by the CLI

    double learning_rate() const;
    bool unit_va_range() const { return va_min >= 0.0; }
    // Images are only needed through the backbone/provider at train time
    // when some backbone stage is trainable.
    bool features_frozen() const { return clip || freeze.all(); }

    std::filesystem::path data_root() const;
    std::filesystem::path index_path() const;
    std::filesystem::path images_root() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

// "DDAMFN+Fc", "DDAMFN+LSTM", "CLIP+Fc", "CLIP+LSTM"
std::string architecture_name(const RunConfig& c);

}  // namespace affectkit
