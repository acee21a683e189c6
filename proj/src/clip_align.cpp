#include "affectkit/clip_align.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "affectkit/errors.hpp"
#include "affectkit/task.hpp"

namespace affectkit::clip {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2 || t.dim(0) == 0 || t.dim(1) == 0) {
        throw ContractViolation(std::string(what) + ": expected a non-empty (N, D) matrix, got " + to_string(t.shape()));
    }
}

}  // namespace

const std::vector<std::string>& default_category_names() {
    static const std::vector<std::string> names{"Neutral", "Anger",   "Disgust",  "Fear",
                                                "Happiness", "Sadness", "Surprise", "Other"};
    return names;
}

// ---- providers -----------------------------------------------------------

StubProvider::StubProvider(ProviderOptions options) : options_(options) {
    if (options_.width == 0) throw ContractViolation("stub provider: zero width");
    std::mt19937_64 rng(options_.seed ^ 0x5eed0c11bULL);
    const std::size_t in = 3 * kGrid * kGrid;
    projection_ = nn::normal_init({options_.width, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

Tensor StubProvider::embed_images(const Tensor& images) const {
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) < kGrid || images.dim(3) < kGrid) {
        throw ContractViolation("stub provider: expected (N, 3, H, W) images with H, W >= 8, got " +
                                to_string(images.shape()));
    }
    const std::size_t n = images.dim(0);
    const std::size_t h = images.dim(2);
    const std::size_t w = images.dim(3);
    const std::size_t in = 3 * kGrid * kGrid;
    Tensor out({n, options_.width});
    std::vector<double> stats(in);
    for (std::size_t s = 0; s < n; ++s) {
        std::fill(stats.begin(), stats.end(), 0.0);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < h; ++y) {
                const std::size_t gy = y * kGrid / h;
                for (std::size_t x = 0; x < w; ++x) {
                    const std::size_t gx = x * kGrid / w;
                    stats[(c * kGrid + gy) * kGrid + gx] += images.at(s, c, y, x);
                }
            }
        }
        const double cell = static_cast<double>(h * w) / static_cast<double>(kGrid * kGrid);
        for (auto& v : stats) v /= cell;
        for (std::size_t o = 0; o < options_.width; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += projection_.at(o, i) * stats[i];
            out.at(s, o) = acc;
        }
    }
    return out;
}

Tensor StubProvider::embed_texts(std::span<const std::string> prompts) const {
    Tensor out({prompts.size(), options_.width});
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        std::mt19937_64 rng(fnv1a(prompts[p]) ^ options_.seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (std::size_t o = 0; o < options_.width; ++o) out.at(p, o) = dist(rng);
    }
    return out;
}

ProviderRegistry::ProviderRegistry() {
    factories_["stub"] = [](const ProviderOptions& o) { return std::make_unique<StubProvider>(o); };
}

ProviderRegistry& ProviderRegistry::instance() {
    static ProviderRegistry registry;
    return registry;
}

void ProviderRegistry::add(const std::string& name, ProviderFactory factory) { factories_[name] = std::move(factory); }

std::unique_ptr<EmbeddingProvider> ProviderRegistry::create(const std::string& name,
                                                            const ProviderOptions& options) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) throw ContractViolation("no embedding provider registered as '" + name + "'");
    return it->second(options);
}

std::vector<std::string> ProviderRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : factories_) out.push_back(name);
    return out;
}

// ---- prompts / adapter ---------------------------------------------------

PromptSet build_prompts(std::span<const std::string> category_names, std::string_view prompt_template) {
    if (category_names.size() != kExpressionCount) {
        throw ContractViolation("build_prompts: expected 8 category names, got " +
                                std::to_string(category_names.size()));
    }
    constexpr std::string_view placeholder = "{emotion}";
    const auto at = prompt_template.find(placeholder);
    if (at == std::string_view::npos) throw ContractViolation("prompt template lacks {emotion}");
    PromptSet set;
    for (const auto& name : category_names) {
        std::string lower = name;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        std::string prompt(prompt_template.substr(0, at));
        prompt += lower;
        prompt += prompt_template.substr(at + placeholder.size());
        set.prompts.push_back(std::move(prompt));
    }
    return set;
}

Adapter::Adapter(std::size_t width, nn::Rng& rng) : layer1(width, width, rng), layer2(width, width, rng) {}

Var Adapter::operator()(const Var& embeddings) const {
    const Shape& s = embeddings.shape();
    if (s.size() != 2 || s[1] != width()) {
        throw ContractViolation("adapter: expected (N, " + std::to_string(width()) + "), got " + to_string(s));
    }
    return layer2(ag::relu(layer1(embeddings)));
}

Tensor Adapter::adapt(const Tensor& embeddings) const {
    ag::NoGradGuard guard;
    return (*this)(Var(embeddings)).value();
}

void Adapter::collect(const std::string& prefix, nn::ParameterList& out) {
    layer1.collect(prefix + ".layer1", out);
    layer2.collect(prefix + ".layer2", out);
}

// ---- loss / classification -----------------------------------------------

Tensor normalize_rows(const Tensor& x) {
    require_matrix(x, "normalize_rows");
    Tensor out = x;
    const std::size_t d = x.dim(1);
    for (std::size_t r = 0; r < x.dim(0); ++r) {
        double norm = 0.0;
        for (std::size_t c = 0; c < d; ++c) norm += x.at(r, c) * x.at(r, c);
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw ContractViolation("cannot normalise row " + std::to_string(r) + ": zero or non-finite norm");
        }
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) /= norm;
    }
    return out;
}

ContrastiveLoss contrastive_loss(const Tensor& image_embeddings, const Tensor& text_embeddings, double temperature) {
    require_matrix(image_embeddings, "contrastive_loss images");
    require_matrix(text_embeddings, "contrastive_loss texts");
    if (image_embeddings.shape() != text_embeddings.shape()) {
        throw ContractViolation("contrastive_loss: image " + to_string(image_embeddings.shape()) + " vs text " +
                                to_string(text_embeddings.shape()));
    }
    if (!(temperature > 0.0)) throw ContractViolation("contrastive_loss: temperature must be positive");

    const std::size_t n = image_embeddings.dim(0);
    const std::size_t d = image_embeddings.dim(1);
    const Tensor u = normalize_rows(image_embeddings);
    const Tensor v = normalize_rows(text_embeddings);
    const double nn_ = static_cast<double>(n);

    Tensor sim({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += u.at(i, k) * v.at(j, k);
            sim.at(i, j) = dot / temperature;
        }

    // Row softmax (image -> texts) and column softmax (text -> images).
    Tensor row_p({n, n});
    Tensor col_p({n, n});
    ContrastiveLoss out;
    for (std::size_t i = 0; i < n; ++i) {
        double peak = sim.at(i, 0);
        for (std::size_t j = 1; j < n; ++j) peak = std::max(peak, sim.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(sim.at(i, j) - peak);
        for (std::size_t j = 0; j < n; ++j) row_p.at(i, j) = std::exp(sim.at(i, j) - peak) / sum;
        out.image += std::log(sum) + peak - sim.at(i, i);
    }
    for (std::size_t j = 0; j < n; ++j) {
        double peak = sim.at(0, j);
        for (std::size_t i = 1; i < n; ++i) peak = std::max(peak, sim.at(i, j));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += std::exp(sim.at(i, j) - peak);
        for (std::size_t i = 0; i < n; ++i) col_p.at(i, j) = std::exp(sim.at(i, j) - peak) / sum;
        out.text += std::log(sum) + peak - sim.at(j, j);
    }
    out.image /= nn_;
    out.text /= nn_;
    out.combined = 0.5 * (out.image + out.text);

    // d combined / d sim
    Tensor g_sim({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double delta = i == j ? 1.0 : 0.0;
            g_sim.at(i, j) = 0.5 * ((row_p.at(i, j) - delta) + (col_p.at(i, j) - delta)) / nn_ / temperature;
        }

    // Through the dot products, then the normalisation.
    Tensor g_u({n, d});
    Tensor g_v({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double g = g_sim.at(i, j);
            for (std::size_t k = 0; k < d; ++k) {
                g_u.at(i, k) += g * v.at(j, k);
                g_v.at(j, k) += g * u.at(i, k);
            }
        }
    auto through_norm = [d](const Tensor& raw, const Tensor& unit, const Tensor& g_unit) {
        Tensor g(raw.shape());
        for (std::size_t r = 0; r < raw.dim(0); ++r) {
            double norm = 0.0;
            double proj = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                norm += raw.at(r, k) * raw.at(r, k);
                proj += unit.at(r, k) * g_unit.at(r, k);
            }
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < d; ++k) g.at(r, k) = (g_unit.at(r, k) - unit.at(r, k) * proj) / norm;
        }
        return g;
    };
    out.grad_image = through_norm(image_embeddings, u, g_u);
    out.grad_text = through_norm(text_embeddings, v, g_v);
    return out;
}

std::vector<int> classify(const Tensor& adapted, const Tensor& prompt_embeddings) {
    require_matrix(adapted, "classify");
    require_matrix(prompt_embeddings, "classify prompts");
    if (adapted.dim(1) != prompt_embeddings.dim(1)) {
        throw ContractViolation("classify: width mismatch " + to_string(adapted.shape()) + " vs " +
                                to_string(prompt_embeddings.shape()));
    }
    const Tensor u = normalize_rows(adapted);
    const Tensor v = normalize_rows(prompt_embeddings);
    const std::size_t d = u.dim(1);
    std::vector<int> labels(u.dim(0), 0);
    for (std::size_t i = 0; i < u.dim(0); ++i) {
        double best = -2.0;
        for (std::size_t j = 0; j < v.dim(0); ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += u.at(i, k) * v.at(j, k);
            if (dot > best) {
                best = dot;
                labels[i] = static_cast<int>(j);
            }
        }
    }
    return labels;
}

}  // namespace affectkit::clip
