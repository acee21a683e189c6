#pragma once

// MobileFaceNet-style trunk -> dual-direction attention -> global depthwise
// pooling -> fixed-width embedding.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "affectkit/nn.hpp"

namespace affectkit::backbone {

using ag::Var;

struct BottleneckStage {
    std::size_t out_channels;
    std::size_t expansion;
    std::size_t stride;  // applied by the first block of the stage
    std::size_t repeats;
};

struct BackboneConfig {
    std::string preset = "tiny";
    std::size_t input_size = 112;
    std::size_t stem_channels = 16;
    std::vector<BottleneckStage> stages;
    std::size_t trunk_channels = 128;
    std::size_t attention_heads = 2;
    // Bottleneck width of each attention head: max(attention_min_width, C / attention_reduction).
    std::size_t attention_reduction = 8;
    std::size_t attention_min_width = 8;
    std::size_t embedding_width = 512;

    // "tiny" (default, ~0.2M parameters), "mfn" (full MobileFaceNet widths), "toy" (gradient checks).
    static BackboneConfig preset_named(std::string_view name);

    // Spatial extent of the trunk output for the configured input size.
    std::size_t feature_size() const;
    std::size_t attention_width() const;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

// conv -> optional PReLU
struct ConvBlock {
    ConvBlock() = default;
    ConvBlock(std::size_t in, std::size_t out, std::size_t kernel, ag::ConvSpec spec, bool activation, nn::Rng& rng);
    Var operator()(const Var& x) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

    nn::Conv2d conv;
    bool has_activation = false;
    nn::PRelu act;
};

// Inverted residual: 1x1 expand, 3x3 depthwise, 1x1 linear projection.
struct Bottleneck {
    Bottleneck() = default;
    Bottleneck(std::size_t in, std::size_t out, std::size_t expansion, std::size_t stride, nn::Rng& rng);
    Var operator()(const Var& x) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

    ConvBlock expand;
    ConvBlock depthwise;
    ConvBlock project;
    bool residual = false;
};

class Trunk {
public:
    Trunk() = default;
    Trunk(const BackboneConfig& config, nn::Rng& rng);
    Var operator()(const Var& images) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

private:
    ConvBlock stem_;
    ConvBlock stem_depthwise_;
    std::vector<Bottleneck> blocks_;
    ConvBlock tail_;
};

struct HeadMaps {
    Var horizontal;  // (N, C, H, 1)
    Var vertical;    // (N, C, 1, W)
};

struct AttentionOutput {
    Var attended;   // features * combined
    Var combined;   // element-wise max over heads of horizontal x vertical
    std::vector<HeadMaps> maps;
};

// One coordinate-style head: axis-wise average pooling, shared 1x1 bottleneck
// with hard-swish, then per-axis 1x1 projections gated by a logistic.
class AttentionHead {
public:
    AttentionHead() = default;
    AttentionHead(std::size_t channels, std::size_t width, nn::Rng& rng);
    HeadMaps operator()(const Var& features) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

    nn::Conv2d reduce;
    nn::Conv2d to_horizontal;
    nn::Conv2d to_vertical;
};

class DualDirectionAttention {
public:
    DualDirectionAttention() = default;
    DualDirectionAttention(std::size_t channels, std::size_t heads, std::size_t width, nn::Rng& rng);
    AttentionOutput operator()(const Var& features) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

    std::vector<AttentionHead>& heads() { return heads_; }

private:
    std::vector<AttentionHead> heads_;
};

// Depthwise conv whose kernel covers the whole map, then a linear projection.
class GDConvPool {
public:
    GDConvPool() = default;
    GDConvPool(std::size_t channels, std::size_t kernel, std::size_t width, nn::Rng& rng);
    // (N, C, k, k) -> (N, C)
    Var pool(const Var& attended) const;
    // (N, C, k, k) -> (N, width)
    Var operator()(const Var& attended) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

    nn::Conv2d depthwise;
    nn::Linear projection;
    std::size_t kernel = 0;
};

class Backbone {
public:
    Backbone() = default;
    Backbone(BackboneConfig config, nn::Rng& rng);

    const BackboneConfig& config() const { return config_; }

    Var extract_features(const Var& images) const;
    AttentionOutput dda_attend(const Var& features) const;
    Var gdconv_pool(const Var& attended) const;
    Var forward(const Var& images) const;

    // Convenience inference entry: no graph is recorded.
    Tensor embed(const Tensor& images) const;

    void collect(const std::string& prefix, nn::ParameterList& out);
    void collect_trunk(const std::string& prefix, nn::ParameterList& out);
    void collect_attention(const std::string& prefix, nn::ParameterList& out);
    void collect_gdconv(const std::string& prefix, nn::ParameterList& out);

    DualDirectionAttention& attention() { return attention_; }
    GDConvPool& gdconv() { return gdconv_; }

private:
    BackboneConfig config_;
    Trunk trunk_;
    DualDirectionAttention attention_;
    GDConvPool gdconv_;
};

}  // namespace affectkit::backbone
