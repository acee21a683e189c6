#pragma once

// Contrastive image/text alignment: frozen embedding providers, emotion
// prompts, a two-layer image-side adapter, the symmetric contrastive loss and
// cosine-argmax classification.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "affectkit/nn.hpp"
#include "affectkit/tensor.hpp"

namespace affectkit::clip {

using ag::Var;

inline constexpr std::string_view kDefaultPromptTemplate = "a face showing {emotion}";

// Expression categories in label order 0..7.
const std::vector<std::string>& default_category_names();

// Frozen encoder pair. Implementations must be deterministic and safe for
// concurrent const calls.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string name() const = 0;
    virtual std::size_t width() const = 0;
    // images: (N, 3, H, W) -> (N, width)
    virtual Tensor embed_images(const Tensor& images) const = 0;
    // -> (prompts.size(), width)
    virtual Tensor embed_texts(std::span<const std::string> prompts) const = 0;
};

struct ProviderOptions {
    std::uint64_t seed = 0;
    std::size_t width = 512;
};

// Seeded stand-in for a real encoder pair. Images: average-pool to an 8x8 grid
// per channel, then apply a fixed Gaussian projection. Texts: unit-variance
// Gaussian vectors seeded from an FNV-1a hash of the string.
class StubProvider final : public EmbeddingProvider {
public:
    static constexpr std::size_t kGrid = 8;

    explicit StubProvider(ProviderOptions options = {});

    std::string name() const override { return "stub"; }
    std::size_t width() const override { return options_.width; }
    Tensor embed_images(const Tensor& images) const override;
    Tensor embed_texts(std::span<const std::string> prompts) const override;

    const Tensor& projection() const { return projection_; }

private:
    ProviderOptions options_;
    Tensor projection_;  // (width, 3 * kGrid * kGrid)
};

using ProviderFactory = std::function<std::unique_ptr<EmbeddingProvider>(const ProviderOptions&)>;

// Name -> factory. "stub" is registered up front.
class ProviderRegistry {
public:
    static ProviderRegistry& instance();
    void add(const std::string& name, ProviderFactory factory);
    std::unique_ptr<EmbeddingProvider> create(const std::string& name, const ProviderOptions& options) const;
    std::vector<std::string> names() const;

private:
    ProviderRegistry();
    std::map<std::string, ProviderFactory> factories_;
};

struct PromptSet {
    std::vector<std::string> prompts;  // one per category, label order
};

// Exactly 8 names; each is lowercased and substituted for "{emotion}".
PromptSet build_prompts(std::span<const std::string> category_names,
                        std::string_view prompt_template = kDefaultPromptTemplate);

// layer2(relu(layer1(x))), both width -> width; identity output keeps negatives.
class Adapter {
public:
    Adapter() = default;
    Adapter(std::size_t width, nn::Rng& rng);

    Var operator()(const Var& embeddings) const;
    Tensor adapt(const Tensor& embeddings) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

    std::size_t width() const { return layer1.in_features(); }

    nn::Linear layer1;
    nn::Linear layer2;
};

struct ContrastiveLoss {
    double image = 0.0;     // row-softmax term
    double text = 0.0;      // column-softmax term
    double combined = 0.0;  // (image + text) / 2
    Tensor grad_image;      // d combined / d image_embeddings
    Tensor grad_text;       // d combined / d text_embeddings
};

// Rows are L2-normalised first; similarities are cosines divided by `temperature`.
ContrastiveLoss contrastive_loss(const Tensor& image_embeddings, const Tensor& text_embeddings,
                                 double temperature = 1.0);

// Cosine argmax against prompt rows; ties go to the lowest index.
std::vector<int> classify(const Tensor& adapted, const Tensor& prompt_embeddings);

// Row-wise L2 normalisation; throws on zero rows.
Tensor normalize_rows(const Tensor& x);

}  // namespace affectkit::clip
