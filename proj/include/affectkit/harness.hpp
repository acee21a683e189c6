#pragma once

// Per-task training, evaluation and inference on top of a curated index.
//
// Images live at <images_root>/<video_id>/<frame:05d>.ppm. Each task trains
// on its own; nothing is shared between runs except optionally imported
// backbone weights.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "affectkit/backbone.hpp"
#include "affectkit/checkpoint.hpp"
#include "affectkit/clip_align.hpp"
#include "affectkit/curation.hpp"
#include "affectkit/evaluation.hpp"
#include "affectkit/heads.hpp"
#include "affectkit/run_config.hpp"

namespace affectkit::harness {

using ag::Var;
using checkpoint::CheckpointManifest;
using curation::CuratedIndex;
using evaluation::MetricReport;

// Frames are embedded in fixed chunks so cached and recomputed features agree
// bit for bit.
inline constexpr std::size_t kEmbedChunk = 32;

class AffectModel {
public:
    explicit AffectModel(const RunConfig& config);
    AffectModel(const AffectModel&) = delete;
    AffectModel& operator=(const AffectModel&) = delete;

    const RunConfig& config() const { return config_; }

    // Every parameter, in a stable order, with checkpoint names.
    nn::ParameterList parameters();
    nn::ParameterList trainable_parameters();

    // Per-frame input to the head: backbone embedding, or the frozen provider
    // image embedding on the contrastive path. Recorded when the backbone has
    // trainable stages and gradients are enabled.
    Var frame_features(const Tensor& images) const;
    std::size_t feature_width() const;

    // Applies the head to per-frame features laid out as consecutive groups
    // (windows for the LSTM head). Rows come back in the same order.
    // Output: VA (n, 2), EXPR logits (n, 8), AU probabilities (n, 12), or
    // adapted (n, 512) embeddings on the contrastive path.
    Var forward(const Var& features, const std::vector<std::size_t>& group_lengths) const;

    // Prompt embeddings for the 8 categories (contrastive path only).
    const Tensor& prompt_embeddings() const { return prompt_embeddings_; }

    void load_parameters(const std::vector<std::pair<std::string, Tensor>>& tensors);
    // Copies backbone.* tensors; returns how many were imported.
    std::size_t import_backbone(const CheckpointManifest& source);
    std::vector<std::pair<std::string, Tensor>> snapshot();

private:
    RunConfig config_;
    std::optional<backbone::Backbone> backbone_;
    std::unique_ptr<clip::EmbeddingProvider> provider_;
    std::optional<clip::Adapter> adapter_;
    std::optional<heads::FcHead> fc_;
    std::optional<heads::LstmHead> lstm_;
    Tensor prompt_embeddings_;
};

// Frames of one split grouped per video in frame order; positions refer to
// CuratedIndex::records.
struct VideoLayout {
    std::vector<std::string> video_ids;
    std::vector<std::vector<std::size_t>> frames;
};
VideoLayout layout_of(const CuratedIndex& index);

// Loads (n, 3, S, S) images for the listed records.
Tensor load_images(const std::filesystem::path& images_root, const CuratedIndex& index,
                   const std::vector<std::size_t>& records, std::size_t size);

// Features for every record, in record order, computed in kEmbedChunk chunks.
Tensor embed_index(const AffectModel& model, const CuratedIndex& index, const std::filesystem::path& images_root);

struct Predictions {
    Task task = Task::VA;
    Tensor values;            // (n, 2) VA | (n, 8) logits or (n, 512) adapted | (n, 12) probabilities
    std::vector<int> labels;  // EXPR argmax / cosine argmax
};

// Record-order predictions from precomputed features.
Predictions predict_features(const AffectModel& model, const CuratedIndex& index, const Tensor& features);
Predictions predict_index(const AffectModel& model, const CuratedIndex& index, const std::filesystem::path& images_root);

// AU: thresholds default to 0.5; `optimized` fills the optimized fields,
// otherwise they come from a sweep over this data.
MetricReport score(const Predictions& predictions, const CuratedIndex& index,
                   const std::optional<evaluation::ThresholdVector>& optimized = std::nullopt);

struct TrainOptions {
    std::filesystem::path images_root;  // empty -> config paths
    bool verbose = false;
};

// Adam over the trainable parameters; validation at step 0 and every
// eval_every steps (and the last step); keeps the best-scoring parameters.
CheckpointManifest train_task(const RunConfig& config, const CuratedIndex& train_index, const CuratedIndex& val_index,
                              const TrainOptions& options = {});

std::unique_ptr<AffectModel> load_model(const CheckpointManifest& manifest);

MetricReport evaluate_task(const CheckpointManifest& manifest, const CuratedIndex& index,
                           std::optional<std::filesystem::path> images_root = std::nullopt);

// Sweeps per-AU thresholds on `index` and stores them in manifest.extra["thresholds"].
evaluation::ThresholdVector optimize_checkpoint_thresholds(CheckpointManifest& manifest, const CuratedIndex& index,
                                                           std::optional<std::filesystem::path> images_root =
                                                               std::nullopt);

// Predicts every <images>/<video>/*.ppm (sorted by name) and writes one
// annotation-format file per video into `out_dir`. Returns files written.
std::size_t predict_directory(const CheckpointManifest& manifest, const std::filesystem::path& images_dir,
                              const std::filesystem::path& out_dir);

// Stored thresholds from manifest.extra, if any.
std::optional<evaluation::ThresholdVector> stored_thresholds(const CheckpointManifest& manifest);

// Evaluation report file: {"architecture", "split", "checkpoint", "metrics"}.
nlohmann::json report_document(const CheckpointManifest& manifest, const MetricReport& report,
                               const std::string& split, const std::string& checkpoint_name);

// Collects *.report.json under `runs_dir` into one row per architecture.
std::vector<evaluation::ResultsRow> collect_results(const std::filesystem::path& runs_dir);

}  // namespace affectkit::harness
