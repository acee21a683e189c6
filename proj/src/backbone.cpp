#include "affectkit/backbone.hpp"

#include <algorithm>

#include "affectkit/errors.hpp"

namespace affectkit::backbone {

namespace {

std::size_t conv_out(std::size_t size, std::size_t kernel, std::size_t stride, std::size_t pad) {
    return (size + 2 * pad - kernel) / stride + 1;
}

void require_feature_shape(const Var& x, std::size_t channels, const char* what) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != channels) {
        throw ContractViolation(std::string(what) + ": expected (N, " + std::to_string(channels) +
                                ", H, W), got " + to_string(s));
    }
}

}  // namespace

BackboneConfig BackboneConfig::preset_named(std::string_view name) {
    BackboneConfig c;
    c.preset = std::string(name);
    if (name == "tiny") {
        c.stem_channels = 16;
        c.stages = {{24, 2, 2, 2}, {48, 2, 2, 2}, {64, 2, 2, 1}};
        c.trunk_channels = 128;
    } else if (name == "mfn") {
        c.stem_channels = 64;
        c.stages = {{64, 2, 2, 5}, {128, 4, 2, 1}, {128, 2, 1, 6}, {128, 4, 2, 1}, {128, 2, 1, 2}};
        c.trunk_channels = 512;
    } else if (name == "toy") {
        c.input_size = 8;
        c.stem_channels = 2;
        c.stages = {{3, 2, 2, 1}};
        c.trunk_channels = 4;
        c.attention_reduction = 2;
        c.attention_min_width = 2;
        c.embedding_width = 6;
    } else {
        throw ContractViolation("unknown backbone preset '" + std::string(name) + "'");
    }
    return c;
}

std::size_t BackboneConfig::feature_size() const {
    std::size_t s = conv_out(input_size, 3, 2, 1);
    for (const auto& stage : stages) {
        if (stage.repeats > 0) s = conv_out(s, 3, stage.stride, 1);
    }
    return s;
}

std::size_t BackboneConfig::attention_width() const {
    return std::max(attention_min_width, trunk_channels / attention_reduction);
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : c.stages) stages.push_back({s.out_channels, s.expansion, s.stride, s.repeats});
    j = {{"preset", c.preset},
         {"input_size", c.input_size},
         {"stem_channels", c.stem_channels},
         {"stages", stages},
         {"trunk_channels", c.trunk_channels},
         {"attention_heads", c.attention_heads},
         {"attention_reduction", c.attention_reduction},
         {"attention_min_width", c.attention_min_width},
         {"embedding_width", c.embedding_width}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
    c = BackboneConfig::preset_named(j.value("preset", std::string("tiny")));
    c.input_size = j.value("input_size", c.input_size);
    c.stem_channels = j.value("stem_channels", c.stem_channels);
    if (j.contains("stages")) {
        c.stages.clear();
        for (const auto& s : j.at("stages")) {
            c.stages.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<std::size_t>(),
                                s.at(3).get<std::size_t>()});
        }
    }
    c.trunk_channels = j.value("trunk_channels", c.trunk_channels);
    c.attention_heads = j.value("attention_heads", c.attention_heads);
    c.attention_reduction = j.value("attention_reduction", c.attention_reduction);
    c.attention_min_width = j.value("attention_min_width", c.attention_min_width);
    c.embedding_width = j.value("embedding_width", c.embedding_width);
}

// ---- blocks --------------------------------------------------------------

ConvBlock::ConvBlock(std::size_t in, std::size_t out, std::size_t kernel, ag::ConvSpec spec, bool activation,
                     nn::Rng& rng)
    : conv(in, out, kernel, spec, rng), has_activation(activation) {
    if (activation) act = nn::PRelu(out);
}

Var ConvBlock::operator()(const Var& x) const {
    Var y = conv(x);
    return has_activation ? act(y) : y;
}

void ConvBlock::collect(const std::string& prefix, nn::ParameterList& out) {
    conv.collect(prefix + ".conv", out);
    if (has_activation) act.collect(prefix + ".act", out);
}

Bottleneck::Bottleneck(std::size_t in, std::size_t out, std::size_t expansion, std::size_t stride, nn::Rng& rng)
    : residual(stride == 1 && in == out) {
    const std::size_t hidden = in * expansion;
    expand = ConvBlock(in, hidden, 1, {1, 0, 1}, true, rng);
    depthwise = ConvBlock(hidden, hidden, 3, {stride, 1, hidden}, true, rng);
    project = ConvBlock(hidden, out, 1, {1, 0, 1}, false, rng);
}

Var Bottleneck::operator()(const Var& x) const {
    Var y = project(depthwise(expand(x)));
    return residual ? ag::add(x, y) : y;
}

void Bottleneck::collect(const std::string& prefix, nn::ParameterList& out) {
    expand.collect(prefix + ".expand", out);
    depthwise.collect(prefix + ".depthwise", out);
    project.collect(prefix + ".project", out);
}

Trunk::Trunk(const BackboneConfig& c, nn::Rng& rng) {
    stem_ = ConvBlock(3, c.stem_channels, 3, {2, 1, 1}, true, rng);
    stem_depthwise_ = ConvBlock(c.stem_channels, c.stem_channels, 3, {1, 1, c.stem_channels}, true, rng);
    std::size_t channels = c.stem_channels;
    for (const auto& stage : c.stages) {
        for (std::size_t r = 0; r < stage.repeats; ++r) {
            blocks_.emplace_back(channels, stage.out_channels, stage.expansion, r == 0 ? stage.stride : 1, rng);
            channels = stage.out_channels;
        }
    }
    tail_ = ConvBlock(channels, c.trunk_channels, 1, {1, 0, 1}, true, rng);
}

Var Trunk::operator()(const Var& images) const {
    Var x = stem_depthwise_(stem_(images));
    for (const auto& block : blocks_) x = block(x);
    return tail_(x);
}

void Trunk::collect(const std::string& prefix, nn::ParameterList& out) {
    stem_.collect(prefix + ".stem", out);
    stem_depthwise_.collect(prefix + ".stem_dw", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
    tail_.collect(prefix + ".tail", out);
}

// ---- attention -----------------------------------------------------------

AttentionHead::AttentionHead(std::size_t channels, std::size_t width, nn::Rng& rng)
    : reduce(channels, width, 1, {1, 0, 1}, rng, true),
      to_horizontal(width, channels, 1, {1, 0, 1}, rng, true),
      to_vertical(width, channels, 1, {1, 0, 1}, rng, true) {}

HeadMaps AttentionHead::operator()(const Var& features) const {
    // Pool along W for the per-row (horizontal) descriptor, along H for per-column.
    Var rows = ag::mean_axis(features, 3);  // (N, C, H, 1)
    Var cols = ag::mean_axis(features, 2);  // (N, C, 1, W)
    Var hidden_rows = ag::hard_swish(reduce(rows));
    Var hidden_cols = ag::hard_swish(reduce(cols));
    return {ag::sigmoid(to_horizontal(hidden_rows)), ag::sigmoid(to_vertical(hidden_cols))};
}

void AttentionHead::collect(const std::string& prefix, nn::ParameterList& out) {
    reduce.collect(prefix + ".reduce", out);
    to_horizontal.collect(prefix + ".to_h", out);
    to_vertical.collect(prefix + ".to_w", out);
}

DualDirectionAttention::DualDirectionAttention(std::size_t channels, std::size_t heads, std::size_t width,
                                               nn::Rng& rng) {
    if (heads == 0) throw ContractViolation("attention needs at least one head");
    for (std::size_t h = 0; h < heads; ++h) heads_.emplace_back(channels, width, rng);
}

AttentionOutput DualDirectionAttention::operator()(const Var& features) const {
    AttentionOutput out;
    for (const auto& head : heads_) {
        HeadMaps maps = head(features);
        Var head_map = ag::mul(maps.horizontal, maps.vertical);
        out.combined = out.combined.defined() ? ag::maximum(out.combined, head_map) : head_map;
        out.maps.push_back(std::move(maps));
    }
    out.attended = ag::mul(features, out.combined);
    return out;
}

void DualDirectionAttention::collect(const std::string& prefix, nn::ParameterList& out) {
    for (std::size_t h = 0; h < heads_.size(); ++h) heads_[h].collect(prefix + ".head" + std::to_string(h), out);
}

// ---- pooling -------------------------------------------------------------

GDConvPool::GDConvPool(std::size_t channels, std::size_t k, std::size_t width, nn::Rng& rng)
    : depthwise(channels, channels, k, {1, 0, channels}, rng), projection(channels, width, rng), kernel(k) {}

Var GDConvPool::pool(const Var& attended) const {
    const Shape& s = attended.shape();
    if (s.size() != 4 || s[2] != kernel || s[3] != kernel) {
        throw ContractViolation("gdconv: expected spatial " + std::to_string(kernel) + "x" + std::to_string(kernel) +
                                ", got " + to_string(s));
    }
    Var pooled = depthwise(attended);  // (N, C, 1, 1)
    return ag::reshape(pooled, {s[0], s[1]});
}

Var GDConvPool::operator()(const Var& attended) const { return projection(pool(attended)); }

void GDConvPool::collect(const std::string& prefix, nn::ParameterList& out) {
    depthwise.collect(prefix + ".depthwise", out);
    projection.collect(prefix + ".projection", out);
}

// ---- backbone ------------------------------------------------------------

Backbone::Backbone(BackboneConfig config, nn::Rng& rng) : config_(std::move(config)) {
    if (config_.input_size == 0 || config_.stem_channels == 0 || config_.trunk_channels == 0 ||
        config_.embedding_width == 0) {
        throw ContractViolation("backbone config has a zero dimension");
    }
    trunk_ = Trunk(config_, rng);
    attention_ = DualDirectionAttention(config_.trunk_channels, config_.attention_heads, config_.attention_width(), rng);
    gdconv_ = GDConvPool(config_.trunk_channels, config_.feature_size(), config_.embedding_width, rng);
}

Var Backbone::extract_features(const Var& images) const {
    const Shape& s = images.shape();
    const std::size_t n = config_.input_size;
    if (s.size() != 4 || s[0] == 0 || s[1] != 3 || s[2] != n || s[3] != n) {
        throw ContractViolation("backbone: expected images (N, 3, " + std::to_string(n) + ", " + std::to_string(n) +
                                "), got " + to_string(s));
    }
    return trunk_(images);
}

AttentionOutput Backbone::dda_attend(const Var& features) const {
    require_feature_shape(features, config_.trunk_channels, "dda_attend");
    return attention_(features);
}

Var Backbone::gdconv_pool(const Var& attended) const {
    require_feature_shape(attended, config_.trunk_channels, "gdconv_pool");
    return gdconv_(attended);
}

Var Backbone::forward(const Var& images) const {
    return gdconv_pool(dda_attend(extract_features(images)).attended);
}

Tensor Backbone::embed(const Tensor& images) const {
    ag::NoGradGuard guard;
    return forward(Var(images)).value();
}

void Backbone::collect(const std::string& prefix, nn::ParameterList& out) {
    collect_trunk(prefix, out);
    collect_attention(prefix, out);
    collect_gdconv(prefix, out);
}

void Backbone::collect_trunk(const std::string& prefix, nn::ParameterList& out) { trunk_.collect(prefix + ".trunk", out); }

void Backbone::collect_attention(const std::string& prefix, nn::ParameterList& out) {
    attention_.collect(prefix + ".attention", out);
}

void Backbone::collect_gdconv(const std::string& prefix, nn::ParameterList& out) {
    gdconv_.collect(prefix + ".gdconv", out);
}

}  // namespace affectkit::backbone
