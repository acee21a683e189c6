#include "affectkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "affectkit/errors.hpp"
#include "affectkit/image_io.hpp"
#include "affectkit/objectives.hpp"

namespace affectkit::harness {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kPredictRows = 64;
constexpr std::size_t kPredictWindows = 8;

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    const std::size_t width = x.size() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data() + rows[i] * width, width, out.data() + i * width);
    return out;
}

const std::vector<std::string>& category_names(const RunConfig& config) {
    return config.clip_config.categories.empty() ? clip::default_category_names() : config.clip_config.categories;
}

int label_of(const curation::FrameAnnotation& r) { return std::get<curation::ExpressionId>(r.payload).label; }

Tensor va_targets(const CuratedIndex& index, const std::vector<std::size_t>& rows) {
    Tensor t({rows.size(), 2});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& va = std::get<curation::VAPair>(index.records[rows[i]].payload);
        t.at(i, 0) = va.valence;
        t.at(i, 1) = va.arousal;
    }
    return t;
}

std::vector<int> expr_targets(const CuratedIndex& index, const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(label_of(index.records[r]));
    return out;
}

std::vector<AuBits> au_targets(const CuratedIndex& index, const std::vector<std::size_t>& rows) {
    std::vector<AuBits> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(std::get<curation::AUVector>(index.records[r].payload).values);
    return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

// Non-overlapping windows per video; the last one may be short.
std::vector<std::vector<std::size_t>> make_windows(const VideoLayout& layout, std::size_t window) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& frames : layout.frames)
        for (std::size_t b = 0; b < frames.size(); b += window)
            out.emplace_back(frames.begin() + b, frames.begin() + std::min(frames.size(), b + window));
    return out;
}

Tensor embed_paths(const AffectModel& model, const std::vector<fs::path>& paths) {
    const std::size_t size = model.config().backbone.input_size;
    const std::size_t width = model.feature_width();
    Tensor out({paths.size(), width});
    ag::NoGradGuard guard;
    for (std::size_t begin = 0; begin < paths.size(); begin += kEmbedChunk) {
        const std::size_t end = std::min(paths.size(), begin + kEmbedChunk);
        Tensor images({end - begin, 3, size, size});
        const std::size_t per = 3 * size * size;
        for (std::size_t i = begin; i < end; ++i) {
            const Tensor img = image_io::read_ppm(paths[i]);
            if (img.shape() != Shape{3, size, size}) {
                throw DataError(fmt::format("{}: expected {}x{} image, got {}", paths[i].string(), size, size,
                                            to_string(img.shape())));
            }
            std::copy_n(img.data(), per, images.data() + (i - begin) * per);
        }
        const Tensor feats = model.frame_features(images).value();
        std::copy_n(feats.data(), feats.size(), out.data() + begin * width);
    }
    return out;
}

fs::path frame_path(const fs::path& root, const curation::FrameAnnotation& r) {
    return root / r.video_id / image_io::frame_file_name(r.frame_index);
}

// Rounds the given parameters to float32 for the lifetime of the scope, so
// validation sees exactly what a checkpoint would restore.
class Float32Scope {
public:
    explicit Float32Scope(const nn::ParameterList& params) : params_(params) {
        saved_.reserve(params_.size());
        for (const auto& p : params_) {
            saved_.push_back(p.var->value());
            for (double& v : p.var->mutable_value().values()) v = nn::round_to_float(v);
        }
    }
    ~Float32Scope() {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i].var->mutable_value() = std::move(saved_[i]);
    }
    Float32Scope(const Float32Scope&) = delete;
    Float32Scope& operator=(const Float32Scope&) = delete;

private:
    const nn::ParameterList& params_;
    std::vector<Tensor> saved_;
};

class Adam {
public:
    Adam(nn::ParameterList params, double lr) : params_(std::move(params)), lr_(lr) {
        for (const auto& p : params_) {
            m_.emplace_back(p.var->shape());
            v_.emplace_back(p.var->shape());
        }
    }

    void zero_grad() {
        for (const auto& p : params_) p.var->zero_grad();
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (!params_[i].var->has_grad()) continue;
            const Tensor g = params_[i].var->grad();
            Tensor& w = params_[i].var->mutable_value();
            for (std::size_t k = 0; k < w.size(); ++k) {
                m_[i][k] = kBeta1 * m_[i][k] + (1.0 - kBeta1) * g[k];
                v_[i][k] = kBeta2 * v_[i][k] + (1.0 - kBeta2) * g[k] * g[k];
                w[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + kEps);
            }
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    nn::ParameterList params_;
    double lr_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

// Yields groups of record positions for one optimisation step.
class Sampler {
public:
    Sampler(const RunConfig& config, const CuratedIndex& index, std::uint64_t seed)
        : config_(config), rng_(seed), layout_(layout_of(index)) {
        if (config.head == HeadKind::Lstm) {
            windows_ = make_windows(layout_, config.window);
            order_ = all_rows(windows_.size());
        } else if (config.clip) {
            for (std::size_t r = 0; r < index.records.size(); ++r) by_label_[label_of(index.records[r])].push_back(r);
        } else if (config.task != Task::VA) {
            order_ = all_rows(index.records.size());
        }
        cursor_ = order_.size();
    }

    std::vector<std::vector<std::size_t>> next() {
        const std::size_t batch = config_.optimizer.batch_size;
        if (config_.head == HeadKind::Lstm) {
            std::vector<std::vector<std::size_t>> out;
            for (std::size_t k = 0; k < std::max<std::size_t>(1, batch / config_.window); ++k)
                out.push_back(windows_[next_position()]);
            return out;
        }
        if (config_.clip) return category_groups(batch);
        if (config_.task == Task::VA) return {contiguous_clip(batch)};
        std::vector<std::size_t> rows;
        for (std::size_t k = 0; k < batch; ++k) rows.push_back(next_position());
        return {rows};
    }

private:
    std::size_t next_position() {
        if (cursor_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        return order_[cursor_++];
    }

    // A clip of up to `batch` consecutive frames, uniform over start positions.
    std::vector<std::size_t> contiguous_clip(std::size_t batch) {
        std::vector<std::size_t> starts;
        for (const auto& frames : layout_.frames) starts.push_back(frames.size() > batch ? frames.size() - batch + 1 : 1);
        const std::size_t total = std::accumulate(starts.begin(), starts.end(), std::size_t{0});
        std::size_t pick = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng_);
        std::size_t v = 0;
        while (pick >= starts[v]) pick -= starts[v++];
        const auto& frames = layout_.frames[v];
        const std::size_t end = std::min(frames.size(), pick + batch);
        return {frames.begin() + pick, frames.begin() + end};
    }

    // Each group holds one random frame per category present.
    std::vector<std::vector<std::size_t>> category_groups(std::size_t batch) {
        const std::size_t groups = std::max<std::size_t>(1, batch / by_label_.size());
        std::vector<std::vector<std::size_t>> out(groups);
        for (auto& g : out)
            for (const auto& [label, rows] : by_label_)
                g.push_back(rows[std::uniform_int_distribution<std::size_t>(0, rows.size() - 1)(rng_)]);
        return out;
    }

    const RunConfig& config_;
    std::mt19937_64 rng_;
    VideoLayout layout_;
    std::vector<std::vector<std::size_t>> windows_;
    std::map<int, std::vector<std::size_t>> by_label_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

// Contrastive loss over the first frame of each category inside every group.
Var contrastive_objective(const AffectModel& model, const Var& adapted, const std::vector<int>& labels,
                          const std::vector<std::size_t>& group_lengths) {
    const Tensor& out = adapted.value();
    const std::size_t width = out.dim(1);
    Tensor grad(out.shape());
    double total = 0.0;
    std::size_t offset = 0;
    for (std::size_t len : group_lengths) {
        std::vector<std::size_t> rows;
        std::vector<std::size_t> prompt_rows;
        std::set<int> seen;
        for (std::size_t i = offset; i < offset + len; ++i) {
            if (seen.insert(labels[i]).second) {
                rows.push_back(i);
                prompt_rows.push_back(static_cast<std::size_t>(labels[i]));
            }
        }
        const auto loss = clip::contrastive_loss(gather_rows(out, rows), gather_rows(model.prompt_embeddings(), prompt_rows),
                                                 model.config().clip_config.temperature);
        total += loss.combined;
        for (std::size_t k = 0; k < rows.size(); ++k)
            for (std::size_t c = 0; c < width; ++c) grad.at(rows[k], c) += loss.grad_image.at(k, c);
        offset += len;
    }
    const double inv = 1.0 / static_cast<double>(group_lengths.size());
    for (double& g : grad.values()) g *= inv;
    return ag::external(total * inv, {adapted}, {grad});
}

Var task_objective(const AffectModel& model, const Var& out, const CuratedIndex& index,
                   const std::vector<std::size_t>& rows, const std::vector<std::size_t>& group_lengths) {
    const RunConfig& config = model.config();
    if (config.clip) {
        // LSTM windows are pooled into one group; fc batches are sampled per group.
        const std::vector<std::size_t> groups =
            config.head == HeadKind::Lstm ? std::vector<std::size_t>{rows.size()} : group_lengths;
        return contrastive_objective(model, out, expr_targets(index, rows), groups);
    }
    objectives::LossValue loss;
    switch (config.task) {
        case Task::VA: loss = objectives::ccc_loss(out.value(), va_targets(index, rows)); break;
        case Task::EXPR: loss = objectives::cross_entropy(out.value(), expr_targets(index, rows)); break;
        case Task::AU: loss = objectives::binary_cross_entropy(out.value(), au_targets(index, rows)); break;
    }
    return ag::external(loss.value, {out}, {loss.grad});
}

void check_task(const CuratedIndex& index, Task task, const char* what) {
    if (index.task != task) {
        throw ContractViolation(fmt::format("{}: index task {} does not match config task {}", what,
                                            task_name(index.task), task_name(task)));
    }
    if (index.records.empty()) throw ContractViolation(fmt::format("{}: empty index", what));
}

}  // namespace

// ---- model -----------------------------------------------------------------

AffectModel::AffectModel(const RunConfig& config) : config_(config) {
    nn::Rng rng(config.seed);
    const bool unit = config.unit_va_range();
    if (config.clip) {
        provider_ = clip::ProviderRegistry::instance().create(config.clip_config.provider,
                                                              {config.clip_config.provider_seed, 512});
        const std::size_t width = provider_->width();
        adapter_.emplace(width, rng);
        if (config.head == HeadKind::Lstm) {
            lstm_.emplace(width, config.lstm_hidden, width, heads::OutputActivation::Identity, rng);
        }
        prompt_embeddings_ =
            provider_->embed_texts(clip::build_prompts(category_names(config), config.clip_config.prompt_template).prompts);
    } else {
        backbone_.emplace(config.backbone, rng);
        const std::size_t width = config.backbone.embedding_width;
        if (config.head == HeadKind::Fc) {
            fc_.emplace(config.task, width, rng, unit);
        } else {
            lstm_.emplace(config.task, width, config.lstm_hidden, rng, unit);
        }
        nn::ParameterList part;
        backbone_->collect_trunk("backbone", part);
        nn::set_trainable(part, !config.freeze.backbone);
        part.clear();
        backbone_->collect_attention("backbone", part);
        nn::set_trainable(part, !config.freeze.attention);
        part.clear();
        backbone_->collect_gdconv("backbone", part);
        nn::set_trainable(part, !config.freeze.gdconv);
    }
}

nn::ParameterList AffectModel::parameters() {
    nn::ParameterList out;
    if (backbone_) backbone_->collect("backbone", out);
    if (adapter_) adapter_->collect("clip.adapter", out);
    const std::string head = "head." + task_name(config_.task);
    if (fc_) fc_->collect(head, out);
    if (lstm_) lstm_->collect(head, out);
    return out;
}

nn::ParameterList AffectModel::trainable_parameters() {
    nn::ParameterList out;
    for (const auto& p : parameters())
        if (p.var->requires_grad()) out.push_back(p);
    return out;
}

std::size_t AffectModel::feature_width() const {
    return provider_ ? provider_->width() : config_.backbone.embedding_width;
}

Var AffectModel::frame_features(const Tensor& images) const {
    if (provider_) return Var(provider_->embed_images(images));
    return backbone_->forward(Var(images));
}

Var AffectModel::forward(const Var& features, const std::vector<std::size_t>& group_lengths) const {
    const std::size_t n = features.shape()[0];
    if (std::accumulate(group_lengths.begin(), group_lengths.end(), std::size_t{0}) != n) {
        throw ContractViolation("forward: group lengths do not cover the feature rows");
    }
    if (fc_) return (*fc_)(features);
    const Var x = adapter_ ? (*adapter_)(features) : features;
    if (!lstm_) return x;

    const std::size_t steps = *std::max_element(group_lengths.begin(), group_lengths.end());
    std::vector<std::size_t> gather;
    std::size_t offset = 0;
    for (std::size_t len : group_lengths) {
        // Padding repeats the last valid frame; it never reaches a selected output.
        for (std::size_t t = 0; t < steps; ++t) gather.push_back(offset + std::min(t, len - 1));
        offset += len;
    }
    const Var seq = ag::reshape(ag::select_rows(x, gather), {group_lengths.size(), steps, x.shape()[1]});
    return (*lstm_)(heads::SequenceBatch{seq, group_lengths});
}

void AffectModel::load_parameters(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : tensors) by_name[name] = &t;
    for (const auto& p : parameters()) {
        const auto it = by_name.find(p.name);
        if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter " + p.name);
        if (it->second->shape() != p.var->shape()) {
            throw CheckpointError(fmt::format("parameter {} has shape {}, expected {}", p.name,
                                              to_string(it->second->shape()), to_string(p.var->shape())));
        }
        p.var->mutable_value() = *it->second;
    }
}

std::size_t AffectModel::import_backbone(const CheckpointManifest& source) {
    std::size_t imported = 0;
    for (const auto& p : parameters()) {
        if (p.name.rfind("backbone.", 0) != 0) continue;
        const Tensor* t = source.find(p.name);
        if (!t) continue;
        if (t->shape() != p.var->shape()) throw CheckpointError("backbone weight shape mismatch for " + p.name);
        p.var->mutable_value() = *t;
        ++imported;
    }
    return imported;
}

std::vector<std::pair<std::string, Tensor>> AffectModel::snapshot() {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& p : parameters()) out.emplace_back(p.name, p.var->value());
    return out;
}

// ---- data ------------------------------------------------------------------

VideoLayout layout_of(const CuratedIndex& index) {
    VideoLayout layout;
    std::map<std::string, std::size_t> slot;
    for (std::size_t r = 0; r < index.records.size(); ++r) {
        const auto& id = index.records[r].video_id;
        auto [it, fresh] = slot.emplace(id, layout.video_ids.size());
        if (fresh) {
            layout.video_ids.push_back(id);
            layout.frames.emplace_back();
        }
        layout.frames[it->second].push_back(r);
    }
    for (auto& frames : layout.frames) {
        std::stable_sort(frames.begin(), frames.end(), [&](std::size_t a, std::size_t b) {
            return index.records[a].frame_index < index.records[b].frame_index;
        });
    }
    return layout;
}

Tensor load_images(const fs::path& images_root, const CuratedIndex& index, const std::vector<std::size_t>& records,
                   std::size_t size) {
    const std::size_t per = 3 * size * size;
    Tensor out({records.size(), 3, size, size});
    for (std::size_t i = 0; i < records.size(); ++i) {
        const fs::path path = frame_path(images_root, index.records[records[i]]);
        const Tensor img = image_io::read_ppm(path);
        if (img.shape() != Shape{3, size, size}) {
            throw DataError(fmt::format("{}: expected {}x{} image, got {}", path.string(), size, size,
                                        to_string(img.shape())));
        }
        std::copy_n(img.data(), per, out.data() + i * per);
    }
    return out;
}

Tensor embed_index(const AffectModel& model, const CuratedIndex& index, const fs::path& images_root) {
    std::vector<fs::path> paths;
    paths.reserve(index.records.size());
    for (const auto& r : index.records) paths.push_back(frame_path(images_root, r));
    return embed_paths(model, paths);
}

// ---- inference ---------------------------------------------------------------

Predictions predict_features(const AffectModel& model, const CuratedIndex& index, const Tensor& features) {
    const RunConfig& config = model.config();
    const std::size_t n = index.records.size();
    if (features.rank() != 2 || features.dim(0) != n) throw ContractViolation("predict: feature rows do not match index");
    ag::NoGradGuard guard;

    std::vector<std::vector<std::size_t>> batches;  // record positions, flattened groups
    std::vector<std::vector<std::size_t>> lengths;
    if (config.head == HeadKind::Lstm) {
        const auto windows = make_windows(layout_of(index), config.window);
        for (std::size_t b = 0; b < windows.size(); b += kPredictWindows) {
            batches.emplace_back();
            lengths.emplace_back();
            for (std::size_t w = b; w < std::min(windows.size(), b + kPredictWindows); ++w) {
                batches.back().insert(batches.back().end(), windows[w].begin(), windows[w].end());
                lengths.back().push_back(windows[w].size());
            }
        }
    } else {
        for (std::size_t b = 0; b < n; b += kPredictRows) {
            const std::size_t e = std::min(n, b + kPredictRows);
            batches.emplace_back(all_rows(e - b));
            for (auto& r : batches.back()) r += b;
            lengths.push_back({e - b});
        }
    }

    Predictions pred;
    pred.task = config.task;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const Tensor out = model.forward(Var(gather_rows(features, batches[b])), lengths[b]).value();
        if (pred.values.empty()) pred.values = Tensor({n, out.dim(1)});
        const std::size_t width = out.dim(1);
        for (std::size_t i = 0; i < batches[b].size(); ++i)
            std::copy_n(out.data() + i * width, width, pred.values.data() + batches[b][i] * width);
    }

    if (config.task == Task::EXPR) {
        if (config.clip) {
            pred.labels = clip::classify(pred.values, model.prompt_embeddings());
        } else {
            const std::size_t width = pred.values.dim(1);
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = pred.values.data() + i * width;
                pred.labels.push_back(static_cast<int>(std::max_element(row, row + width) - row));
            }
        }
    }
    return pred;
}

Predictions predict_index(const AffectModel& model, const CuratedIndex& index, const fs::path& images_root) {
    return predict_features(model, index, embed_index(model, index, images_root));
}

MetricReport score(const Predictions& predictions, const CuratedIndex& index,
                   const std::optional<evaluation::ThresholdVector>& optimized) {
    const auto rows = all_rows(index.records.size());
    switch (predictions.task) {
        case Task::VA: return evaluation::metric_va(predictions.values, va_targets(index, rows));
        case Task::EXPR: return evaluation::metric_expr(predictions.labels, expr_targets(index, rows));
        case Task::AU: break;
    }
    const auto labels = au_targets(index, rows);
    MetricReport report = evaluation::metric_au(predictions.values, labels, evaluation::ThresholdVector::uniform(0.5));
    const auto grid = evaluation::default_threshold_grid();
    const auto thresholds = optimized ? *optimized : evaluation::optimize_thresholds(predictions.values, labels, grid);
    evaluation::attach_optimized(report, predictions.values, labels, thresholds);
    return report;
}

// ---- training ----------------------------------------------------------------

CheckpointManifest train_task(const RunConfig& config, const CuratedIndex& train_index, const CuratedIndex& val_index,
                              const TrainOptions& options) {
    check_task(train_index, config.task, "train_task (train)");
    check_task(val_index, config.task, "train_task (val)");
    const fs::path root = options.images_root.empty() ? config.images_root() : options.images_root;

    AffectModel model(config);
    if (!config.backbone_weights.empty()) {
        if (config.clip) throw ContractViolation("backbone_weights has no effect on the contrastive path");
        if (model.import_backbone(checkpoint::load(config.backbone_weights)) == 0) {
            throw CheckpointError("no backbone.* tensors in " + config.backbone_weights);
        }
    }
    const nn::ParameterList all = model.parameters();
    const nn::ParameterList trainable = model.trainable_parameters();
    Adam adam(trainable, config.learning_rate());
    Sampler sampler(config, train_index, config.seed ^ 0x9E3779B97F4A7C15ULL);

    std::optional<Tensor> train_cache;
    std::optional<Tensor> val_cache;
    if (config.features_frozen()) {
        train_cache = embed_index(model, train_index, root);
        val_cache = embed_index(model, val_index, root);
    }

    CheckpointManifest manifest;
    MetricReport best;
    bool have_best = false;
    nlohmann::json history = nlohmann::json::array();
    auto validate = [&](std::size_t step) {
        Float32Scope rounded(trainable);
        const Predictions pred = val_cache ? predict_features(model, val_index, *val_cache)
                                           : predict_index(model, val_index, root);
        MetricReport report = score(pred, val_index);
        history.push_back({{"step", step}, {"metric", report.score}});
        if (options.verbose) fmt::print(stderr, "step {:>5}  val {:.4f}\n", step, report.score);
        if (!have_best || report.score > best.score) {
            best = std::move(report);
            have_best = true;
            manifest.step = step;
            manifest.parameters.clear();
            for (const auto& p : all) manifest.parameters.emplace_back(p.name, p.var->value());
        }
    };

    validate(0);
    const std::size_t steps = config.optimizer.steps;
    for (std::size_t step = 1; step <= steps; ++step) {
        const auto groups = sampler.next();
        std::vector<std::size_t> rows;
        std::vector<std::size_t> lengths;
        for (const auto& g : groups) {
            rows.insert(rows.end(), g.begin(), g.end());
            lengths.push_back(g.size());
        }
        adam.zero_grad();
        const Var features = train_cache ? Var(gather_rows(*train_cache, rows))
                                         : model.frame_features(load_images(root, train_index, rows,
                                                                            config.backbone.input_size));
        const Var out = model.forward(features, lengths);
        task_objective(model, out, train_index, rows, lengths).backward();
        adam.step();
        if (step % config.optimizer.eval_every == 0 || step == steps) validate(step);
    }

    manifest.config = config;
    manifest.best_metric = best.score;
    manifest.extra = {{"architecture", architecture_name(config)},
                      {"report", evaluation::to_json(best)},
                      {"history", history},
                      {"steps_run", steps}};
    return manifest;
}

// ---- evaluation --------------------------------------------------------------

std::unique_ptr<AffectModel> load_model(const CheckpointManifest& manifest) {
    RunConfig config;
    try {
        config = manifest.config.get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint config unreadable: ") + e.what());
    }
    config.backbone_weights.clear();
    auto model = std::make_unique<AffectModel>(config);
    model->load_parameters(manifest.parameters);
    return model;
}

std::optional<evaluation::ThresholdVector> stored_thresholds(const CheckpointManifest& manifest) {
    if (!manifest.extra.contains("thresholds")) return std::nullopt;
    const auto values = manifest.extra.at("thresholds").get<std::vector<double>>();
    if (values.size() != kActionUnitCount) throw CheckpointError("stored thresholds must have 12 entries");
    evaluation::ThresholdVector t;
    std::copy(values.begin(), values.end(), t.values.begin());
    return t;
}

MetricReport evaluate_task(const CheckpointManifest& manifest, const CuratedIndex& index,
                           std::optional<fs::path> images_root) {
    const auto model = load_model(manifest);
    check_task(index, model->config().task, "evaluate_task");
    const fs::path root = images_root ? *images_root : model->config().images_root();
    return score(predict_index(*model, index, root), index, stored_thresholds(manifest));
}

evaluation::ThresholdVector optimize_checkpoint_thresholds(CheckpointManifest& manifest, const CuratedIndex& index,
                                                           std::optional<fs::path> images_root) {
    const auto model = load_model(manifest);
    if (model->config().task != Task::AU) throw ContractViolation("threshold optimisation applies to AU checkpoints");
    check_task(index, Task::AU, "optimize_thresholds");
    const fs::path root = images_root ? *images_root : model->config().images_root();
    const Predictions pred = predict_index(*model, index, root);
    const auto grid = evaluation::default_threshold_grid();
    const auto thresholds =
        evaluation::optimize_thresholds(pred.values, au_targets(index, all_rows(index.records.size())), grid);
    manifest.extra["thresholds"] = thresholds.values;
    return thresholds;
}

std::size_t predict_directory(const CheckpointManifest& manifest, const fs::path& images_dir, const fs::path& out_dir) {
    const auto model = load_model(manifest);
    const Task task = model->config().task;
    if (!fs::is_directory(images_dir)) throw DataError("not a directory: " + images_dir.string());
    std::vector<fs::path> videos;
    for (const auto& e : fs::directory_iterator(images_dir))
        if (e.is_directory()) videos.push_back(e.path());
    std::sort(videos.begin(), videos.end());
    fs::create_directories(out_dir);
    const auto thresholds = stored_thresholds(manifest).value_or(evaluation::ThresholdVector::uniform(0.5));

    std::size_t written = 0;
    for (const auto& dir : videos) {
        std::vector<fs::path> frames;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".ppm") frames.push_back(e.path());
        if (frames.empty()) continue;
        std::sort(frames.begin(), frames.end());

        CuratedIndex index;
        index.task = task;
        const std::string id = dir.filename().string();
        for (std::size_t i = 0; i < frames.size(); ++i) {
            curation::Payload payload = curation::ExpressionId{};
            if (task == Task::VA) payload = curation::VAPair{};
            if (task == Task::AU) payload = curation::AUVector{};
            index.records.push_back({id, i, payload});
        }
        const Predictions pred = predict_features(*model, index, embed_paths(*model, frames));

        std::vector<curation::Payload> payloads;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            switch (task) {
                case Task::VA: payloads.push_back(curation::VAPair{pred.values.at(i, 0), pred.values.at(i, 1)}); break;
                case Task::EXPR: payloads.push_back(curation::ExpressionId{pred.labels[i]}); break;
                case Task::AU: {
                    curation::AUVector v;
                    for (std::size_t a = 0; a < kActionUnitCount; ++a)
                        v.values[a] = pred.values.at(i, a) >= thresholds.values[a] ? 1 : 0;
                    payloads.push_back(v);
                    break;
                }
            }
        }
        std::ofstream out(out_dir / (id + ".txt"));
        if (!out) throw DataError("cannot write predictions to " + out_dir.string());
        out << curation::format_annotation_file(task, payloads);
        ++written;
    }
    return written;
}

// ---- reporting ---------------------------------------------------------------

nlohmann::json report_document(const CheckpointManifest& manifest, const MetricReport& report, const std::string& split,
                               const std::string& checkpoint_name) {
    std::string architecture = manifest.extra.value("architecture", std::string());
    if (architecture.empty()) architecture = architecture_name(manifest.config.get<RunConfig>());
    return {{"architecture", architecture},
            {"task", task_name(report.task)},
            {"split", split},
            {"checkpoint", checkpoint_name},
            {"metrics", evaluation::to_json(report)}};
}

std::vector<evaluation::ResultsRow> collect_results(const fs::path& runs_dir) {
    if (!fs::is_directory(runs_dir)) throw DataError("not a directory: " + runs_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(runs_dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 12 && name.ends_with(".report.json")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());

    std::map<std::string, evaluation::ResultsRow> rows;
    for (const auto& path : files) {
        std::ifstream in(path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("invalid report " + path.string() + ": " + e.what());
        }
        const auto arch = doc.at("architecture").get<std::string>();
        const MetricReport report = evaluation::report_from_json(doc.at("metrics"));
        auto& row = rows[arch];
        row.architecture = arch;
        switch (report.task) {
            case Task::VA: row.ccc_va = report.score; break;
            case Task::EXPR: row.f1_expr = report.score; break;
            case Task::AU:
                row.f1_au = report.score;
                row.f1_au_opt = report.optimized_score;
                break;
        }
    }

    std::vector<evaluation::ResultsRow> out;
    for (const char* known : {"DDAMFN+Fc", "DDAMFN+LSTM", "CLIP+Fc", "CLIP+LSTM"}) {
        if (auto it = rows.find(known); it != rows.end()) {
            out.push_back(it->second);
            rows.erase(it);
        }
    }
    for (auto& [arch, row] : rows) out.push_back(row);
    return out;
}

}  // namespace affectkit::harness
