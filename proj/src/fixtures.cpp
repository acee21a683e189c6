#include "affectkit/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "affectkit/curation.hpp"
#include "affectkit/errors.hpp"
#include "affectkit/image_io.hpp"
#include "affectkit/tensor.hpp"

namespace affectkit::fixtures {

namespace fs = std::filesystem;
using Rng = std::mt19937_64;

namespace {

// Well-separated RGB base colours, one per expression category.
constexpr double kPalette[kExpressionCount][3] = {
    {0.55, 0.55, 0.55}, {0.85, 0.20, 0.20}, {0.30, 0.65, 0.20}, {0.45, 0.25, 0.70},
    {0.95, 0.80, 0.25}, {0.20, 0.35, 0.85}, {0.95, 0.55, 0.85}, {0.15, 0.75, 0.75},
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t salt_of(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    return h;
}

void add_noise(Tensor& img, double stddev, Rng& rng) {
    if (stddev <= 0.0) return;
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : img.values()) v = std::clamp(v + dist(rng), 0.0, 1.0);
}

Tensor expression_image(int label, std::size_t size, Rng& rng) {
    Tensor img({3, size, size});
    const double theta = std::numbers::pi * label / 8.0;
    const double cx = std::cos(theta), sy = std::sin(theta);
    const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    const double freq = 2.0 * std::numbers::pi / 14.0;
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double stripe = 0.15 * std::sin(freq * (cx * x + sy * y) + phase);
            for (std::size_t c = 0; c < 3; ++c) img[(c * size + y) * size + x] = kPalette[label][c] + stripe;
        }
    return img;
}

Tensor au_image(const AuBits& bits, std::size_t size) {
    Tensor img({3, size, size}, 0.25);
    const std::size_t cols = 4, rows = 3;
    const std::size_t cw = size / cols, ch = size / rows;
    for (std::size_t a = 0; a < kActionUnitCount; ++a) {
        if (bits[a] != 1) continue;
        const std::size_t x0 = (a % cols) * cw, y0 = (a / cols) * ch;
        for (std::size_t y = y0 + ch / 6; y < y0 + ch - ch / 6; ++y)
            for (std::size_t x = x0 + cw / 6; x < x0 + cw - cw / 6; ++x)
                for (std::size_t c = 0; c < 3; ++c) img[(c * size + y) * size + x] = 0.9;
    }
    return img;
}

Tensor va_image(double v, double a, std::size_t size) {
    Tensor img({3, size, size});
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            img[(0 * size + y) * size + x] = 0.5 + 0.4 * v;
            img[(1 * size + y) * size + x] = 0.5 + 0.1 * std::sin(0.2 * static_cast<double>(x + y));
            img[(2 * size + y) * size + x] = 0.5 + 0.4 * a;
        }
    return img;
}

struct Frame {
    Tensor image;
    curation::Payload payload;
};

// Assigns segment labels so that every split follows the category weights as
// closely as possible: the category furthest below its quota goes next.
class LabelQuota {
public:
    explicit LabelQuota(const std::vector<double>& weights) : weights_(weights), counts_(weights.size(), 0.0) {
        const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
        for (double& w : weights_) w /= total;
    }

    int next(Rng& rng) {
        ++issued_;
        double best = -1e300;
        std::vector<int> ties;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            if (weights_[k] <= 0.0) continue;
            const double deficit = weights_[k] * issued_ - counts_[k];
            if (deficit > best + 1e-12) {
                best = deficit;
                ties = {static_cast<int>(k)};
            } else if (deficit > best - 1e-12) {
                ties.push_back(static_cast<int>(k));
            }
        }
        const int label = ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng)];
        counts_[label] += 1.0;
        return label;
    }

private:
    std::vector<double> weights_;
    std::vector<double> counts_;
    double issued_ = 0.0;
};

std::vector<Frame> expression_video(const FixtureSpec& spec, std::size_t frames, LabelQuota& quota, Rng& rng) {
    const std::size_t segment = std::max<std::size_t>(1, spec.segment_length);
    std::vector<Frame> out;
    int label = 0;
    for (std::size_t t = 0; t < frames; ++t) {
        if (t % segment == 0) label = quota.next(rng);
        out.push_back({expression_image(label, spec.image_size, rng), curation::ExpressionId{label}});
    }
    return out;
}

std::vector<Frame> au_video(const FixtureSpec& spec, std::size_t frames, Rng& rng) {
    std::bernoulli_distribution active(spec.au_active_rate);
    std::bernoulli_distribution resample(1.0 / static_cast<double>(std::max<std::size_t>(1, spec.segment_length)));
    AuBits bits{};
    for (int& b : bits) b = active(rng) ? 1 : 0;
    std::vector<Frame> out;
    for (std::size_t t = 0; t < frames; ++t) {
        if (t > 0)
            for (int& b : bits)
                if (resample(rng)) b = active(rng) ? 1 : 0;
        out.push_back({au_image(bits, spec.image_size), curation::AUVector{bits}});
    }
    return out;
}

std::vector<Frame> va_video(const FixtureSpec& spec, std::size_t frames, Rng& rng) {
    std::vector<Frame> out;
    if (spec.temporal_window > 0) {
        std::uniform_real_distribution<double> latent(-0.9, 0.9);
        std::vector<std::pair<double, double>> z;
        for (std::size_t t = 0; t < frames; ++t) {
            z.emplace_back(latent(rng), latent(rng));
            const std::size_t from = t + 1 >= spec.temporal_window ? t + 1 - spec.temporal_window : 0;
            double v = 0.0, a = 0.0;
            for (std::size_t k = from; k <= t; ++k) {
                v += z[k].first;
                a += z[k].second;
            }
            const double n = static_cast<double>(t + 1 - from);
            out.push_back({va_image(z[t].first, z[t].second, spec.image_size), curation::VAPair{v / n, a / n}});
        }
        return out;
    }
    std::uniform_real_distribution<double> period(20.0, 60.0), phase(0.0, 2.0 * std::numbers::pi);
    const double pv = period(rng), pa = period(rng), fv = phase(rng), fa = phase(rng);
    for (std::size_t t = 0; t < frames; ++t) {
        const double v = 0.85 * std::sin(2.0 * std::numbers::pi * t / pv + fv);
        const double a = 0.85 * std::sin(2.0 * std::numbers::pi * t / pa + fa);
        out.push_back({va_image(v, a, spec.image_size), curation::VAPair{v, a}});
    }
    return out;
}

// Replaces the annotation (not the image) with the task's sentinel pattern.
void apply_sentinel(curation::Payload& payload, Rng& rng) {
    if (auto* va = std::get_if<curation::VAPair>(&payload)) {
        *va = {curation::kInvalidVA, curation::kInvalidVA};
    } else if (auto* e = std::get_if<curation::ExpressionId>(&payload)) {
        e->label = curation::kInvalidLabel;
    } else {
        auto& bits = std::get<curation::AUVector>(payload).values;
        bits[std::uniform_int_distribution<std::size_t>(0, kActionUnitCount - 1)(rng)] = curation::kInvalidLabel;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

void to_json(nlohmann::json& j, const FixtureSpec& s) {
    std::vector<std::string> tasks;
    for (Task t : s.tasks) tasks.push_back(task_name(t));
    nlohmann::json splits = nlohmann::json::object();
    for (const auto& [name, sp] : s.splits) splits[name] = {{"videos", sp.videos}, {"frames", sp.frames}};
    j = {{"tasks", tasks},
         {"splits", splits},
         {"image_size", s.image_size},
         {"noise", s.noise},
         {"sentinel_rate", s.sentinel_rate},
         {"category_weights", s.category_weights},
         {"segment_length", s.segment_length},
         {"au_active_rate", s.au_active_rate},
         {"temporal_window", s.temporal_window}};
}

void from_json(const nlohmann::json& j, FixtureSpec& s) {
    s = FixtureSpec{};
    if (j.contains("tasks")) {
        s.tasks.clear();
        for (const auto& t : j.at("tasks")) s.tasks.push_back(parse_task(t.get<std::string>()));
    }
    if (j.contains("splits")) {
        s.splits.clear();
        for (const auto& [name, sp] : j.at("splits").items())
            s.splits[name] = {sp.at("videos").get<std::size_t>(), sp.at("frames").get<std::size_t>()};
    }
    s.image_size = j.value("image_size", s.image_size);
    s.noise = j.value("noise", s.noise);
    s.sentinel_rate = j.value("sentinel_rate", s.sentinel_rate);
    s.category_weights = j.value("category_weights", s.category_weights);
    s.segment_length = j.value("segment_length", s.segment_length);
    s.au_active_rate = j.value("au_active_rate", s.au_active_rate);
    s.temporal_window = j.value("temporal_window", s.temporal_window);

    if (s.category_weights.size() != kExpressionCount) throw ContractViolation("fixtures: need 8 category weights");
    if (std::any_of(s.category_weights.begin(), s.category_weights.end(), [](double w) { return w < 0.0; }) ||
        std::all_of(s.category_weights.begin(), s.category_weights.end(), [](double w) { return w == 0.0; })) {
        throw ContractViolation("fixtures: category weights must be non-negative with a positive sum");
    }
    if (s.image_size < 8) throw ContractViolation("fixtures: image_size must be at least 8");
    if (s.sentinel_rate < 0.0 || s.sentinel_rate >= 1.0) throw ContractViolation("fixtures: sentinel_rate in [0, 1)");
    if (s.au_active_rate < 0.0 || s.au_active_rate > 1.0) throw ContractViolation("fixtures: au_active_rate in [0, 1]");
    if (s.noise < 0.0) throw ContractViolation("fixtures: noise must be non-negative");
}

FixtureSpec load_fixture_spec(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read fixture spec " + path.string());
    try {
        return nlohmann::json::parse(in).get<FixtureSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid fixture spec " + path.string() + ": " + e.what());
    }
}

nlohmann::ordered_json generate_fixtures(std::uint64_t seed, const FixtureSpec& spec, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create fixture directory " + out_dir.string());

    nlohmann::json spec_json = spec;
    nlohmann::ordered_json manifest;
    manifest["seed"] = seed;
    manifest["spec"] = spec_json;
    manifest["layout"] = {{"images", "images/<video_id>/<frame:05d>.ppm"},
                          {"annotations", "annotations/<TASK>/<split>/<video_id>.txt"}};
    nlohmann::ordered_json tasks = nlohmann::ordered_json::object();

    for (Task task : spec.tasks) {
        nlohmann::ordered_json task_entry = nlohmann::ordered_json::object();
        for (const auto& [split, sp] : spec.splits) {
            const fs::path ann_dir = out_dir / "annotations" / task_folder(task) / split;
            fs::create_directories(ann_dir);
            nlohmann::ordered_json videos = nlohmann::ordered_json::array();
            std::size_t sentinels = 0;
            LabelQuota quota(spec.category_weights);
            for (std::size_t v = 0; v < sp.videos; ++v) {
                const std::string id = fmt::format("{}_{}_{:02d}", task_name(task), split, v);
                Rng rng(mix(seed, salt_of(id)));
                std::vector<Frame> frames;
                switch (task) {
                    case Task::VA: frames = va_video(spec, sp.frames, rng); break;
                    case Task::EXPR: frames = expression_video(spec, sp.frames, quota, rng); break;
                    case Task::AU: frames = au_video(spec, sp.frames, rng); break;
                }
                const fs::path img_dir = out_dir / "images" / id;
                fs::create_directories(img_dir);
                std::bernoulli_distribution sentinel(spec.sentinel_rate);
                std::vector<curation::Payload> payloads;
                for (std::size_t t = 0; t < frames.size(); ++t) {
                    add_noise(frames[t].image, spec.noise, rng);
                    image_io::write_ppm(img_dir / image_io::frame_file_name(t), frames[t].image);
                    if (sentinel(rng)) {
                        apply_sentinel(frames[t].payload, rng);
                        ++sentinels;
                    }
                    payloads.push_back(frames[t].payload);
                }
                std::string text = curation::format_annotation_file(task, payloads);
                text.erase(0, text.find('\n') + 1);  // data lines only
                write_text(ann_dir / (id + ".txt"), text);
                videos.push_back(id);
            }
            task_entry[split] = {{"videos", videos}, {"frames", sp.videos * sp.frames}, {"sentinels", sentinels}};
        }
        tasks[task_name(task)] = task_entry;
    }
    manifest["tasks"] = tasks;
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

}  // namespace affectkit::fixtures
