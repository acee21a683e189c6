#pragma once

// Procedural datasets whose images carry the label signal:
//   EXPR  per-class colour and stripe orientation
//   AU    a 4x3 grid of patches, bright where the unit is active
//   VA    red channel tracks valence, blue tracks arousal
//
// Output layout under the target directory:
//   images/<video_id>/<frame:05d>.ppm
//   annotations/<VA|EXPR|AU>/<split>/<video_id>.txt   (no header, one line per frame)
//   manifest.json

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "affectkit/task.hpp"

namespace affectkit::fixtures {

struct SplitSpec {
    std::size_t videos = 1;
    std::size_t frames = 60;  // per video
};

struct FixtureSpec {
    std::vector<Task> tasks{Task::VA, Task::EXPR, Task::AU};
    std::map<std::string, SplitSpec> splits{{"train", {3, 80}}, {"val", {2, 60}}};
    std::size_t image_size = 112;
    double noise = 0.03;          // per-pixel Gaussian standard deviation
    double sentinel_rate = 0.03;  // fraction of frames whose annotation is a sentinel
    std::vector<double> category_weights = std::vector<double>(kExpressionCount, 1.0);
    std::size_t segment_length = 12;  // expression segment length; mean AU run length
    double au_active_rate = 0.35;
    // VA only. When > 0 each frame shows an independent latent and its label is
    // the mean latent over the last `temporal_window` frames.
    std::size_t temporal_window = 0;
};

void to_json(nlohmann::json& j, const FixtureSpec& s);
void from_json(const nlohmann::json& j, FixtureSpec& s);
FixtureSpec load_fixture_spec(const std::filesystem::path& path);

// Byte-identical output for the same (seed, spec). Returns the manifest.
nlohmann::ordered_json generate_fixtures(std::uint64_t seed, const FixtureSpec& spec,
                                         const std::filesystem::path& out_dir);

}  // namespace affectkit::fixtures
