#pragma once

// Per-frame annotation parsing, sentinel filtering and dataset summaries.
//
// On-disk layout (one directory per task, one text file per video):
//
//   <annotations>/<split>/<video_id>.txt
//
// Each file holds one line per frame with an optional header line, detected by
// a non-numeric first token:
//   VA    "valence,arousal"
//   EXPR  "label"
//   AU    12 comma-separated integers (AU1 ... AU26)
// The data line number (0-based, header excluded) is the frame index.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "affectkit/task.hpp"

namespace affectkit::curation {

inline constexpr double kInvalidVA = -5.0;
inline constexpr int kInvalidLabel = -1;

struct VAPair {
    double valence = 0.0;
    double arousal = 0.0;
    friend bool operator==(const VAPair&, const VAPair&) = default;
};

struct ExpressionId {
    int label = 0;
    friend bool operator==(const ExpressionId&, const ExpressionId&) = default;
};

struct AUVector {
    AuBits values{};
    friend bool operator==(const AUVector&, const AUVector&) = default;
};

using Payload = std::variant<VAPair, ExpressionId, AUVector>;

struct FrameAnnotation {
    std::string video_id;
    std::size_t frame_index = 0;
    Payload payload;
    friend bool operator==(const FrameAnnotation&, const FrameAnnotation&) = default;
};

struct CurationOptions {
    // Valid VA interval (inclusive). The -5 sentinel is rejected regardless.
    double va_min = -1.0;
    double va_max = 1.0;
};

struct CuratedIndex {
    Task task = Task::VA;
    std::vector<FrameAnnotation> records;
    std::size_t dropped_count = 0;

    std::size_t total() const { return records.size() + dropped_count; }
};

Task payload_task(const Payload& payload);
bool is_valid(const Payload& payload, const CurationOptions& options = {});

std::vector<FrameAnnotation> parse_annotation_file(std::string_view content, Task task,
                                                   std::string_view video_id = {});
CuratedIndex filter_invalid(std::vector<FrameAnnotation> records, Task task, const CurationOptions& options = {});

struct SplitSummary {
    std::string split;
    std::size_t frames = 0;
    std::size_t curated = 0;
};

struct CurationSummary {
    Task task = Task::VA;
    std::vector<SplitSummary> rows;

    // Row-wise sum; summaries of disjoint split sets merge associatively.
    CurationSummary& merge(const CurationSummary& other);
};

using SplitIndices = std::map<std::string, CuratedIndex>;

CurationSummary summarize(const SplitIndices& indices);
// Two-column table: Frames / Curated frames per split, thousands separators.
std::string render_summary(const CurationSummary& summary);

// Loads every <split>/<video>.txt under `root`. Text files directly under
// `root` form a single split named after the directory. Videos are sorted by id.
SplitIndices curate_directory(const std::filesystem::path& root, Task task, const CurationOptions& options = {});

// JSON Lines: {"split", "video_id", "frame_index", <payload fields>} per record.
void write_index_jsonl(std::ostream& out, const SplitIndices& indices);
SplitIndices read_index_jsonl(std::istream& in, Task task);

// Inverse of parse_annotation_file for one video's records, header included.
std::string format_annotation_file(Task task, const std::vector<Payload>& payloads);
std::string annotation_header(Task task);

}  // namespace affectkit::curation
