#include "affectkit/curation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "affectkit/errors.hpp"

namespace affectkit::curation {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_double(std::string_view token, double& out) {
    if (token.empty()) return false;
    if (token.front() == '+') token.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    return ec == std::errc() && ptr == token.data() + token.size();
}

bool parse_int(std::string_view token, int& out) {
    if (token.empty()) return false;
    if (token.front() == '+') token.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    return ec == std::errc() && ptr == token.data() + token.size();
}

std::size_t arity(Task task) {
    switch (task) {
        case Task::VA: return 2;
        case Task::EXPR: return 1;
        case Task::AU: return kActionUnitCount;
    }
    return 0;
}

Payload parse_payload(const std::vector<std::string_view>& fields, Task task, std::size_t line_no) {
    if (fields.size() != arity(task)) {
        throw ParseError(line_no, "expected " + std::to_string(arity(task)) + " field(s) for " + task_name(task) +
                                      ", found " + std::to_string(fields.size()));
    }
    auto bad = [&](std::string_view tok) {
        return ParseError(line_no, "non-numeric token '" + std::string(tok) + "'");
    };
    switch (task) {
        case Task::VA: {
            VAPair p;
            if (!parse_double(fields[0], p.valence)) throw bad(fields[0]);
            if (!parse_double(fields[1], p.arousal)) throw bad(fields[1]);
            return p;
        }
        case Task::EXPR: {
            ExpressionId e;
            if (!parse_int(fields[0], e.label)) throw bad(fields[0]);
            return e;
        }
        case Task::AU: {
            AUVector a;
            for (std::size_t i = 0; i < kActionUnitCount; ++i)
                if (!parse_int(fields[i], a.values[i])) throw bad(fields[i]);
            return a;
        }
    }
    throw ContractViolation("unknown task");
}

std::string split_title(const std::string& split) {
    if (split == "train") return "Training";
    if (split == "val") return "Validation";
    if (split == "test") return "Test";
    return split;
}

std::string with_commas(std::size_t v) {
    std::string out = std::to_string(v);
    for (std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(out.size()) - 3; pos > 0; pos -= 3) {
        out.insert(static_cast<std::size_t>(pos), 1, ',');
    }
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CuratedIndex curate_split(const fs::path& dir, Task task, const CurationOptions& options) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    CuratedIndex merged{task, {}, 0};
    std::set<std::string> seen;
    for (const auto& file : files) {
        const std::string video = file.stem().string();
        if (!seen.insert(video).second) throw DataError("duplicate video id '" + video + "' in " + dir.string());
        std::vector<FrameAnnotation> records;
        try {
            records = parse_annotation_file(read_file(file), task, video);
        } catch (const ParseError& e) {
            throw ParseError(e.line(), file.string() + ": " + e.what());
        }
        CuratedIndex part = filter_invalid(std::move(records), task, options);
        merged.dropped_count += part.dropped_count;
        std::move(part.records.begin(), part.records.end(), std::back_inserter(merged.records));
    }
    return merged;
}

}  // namespace

Task payload_task(const Payload& payload) {
    switch (payload.index()) {
        case 0: return Task::VA;
        case 1: return Task::EXPR;
        default: return Task::AU;
    }
}

bool is_valid(const Payload& payload, const CurationOptions& options) {
    if (const auto* va = std::get_if<VAPair>(&payload)) {
        for (double v : {va->valence, va->arousal}) {
            if (v == kInvalidVA || !std::isfinite(v) || v < options.va_min || v > options.va_max) return false;
        }
        return true;
    }
    if (const auto* e = std::get_if<ExpressionId>(&payload)) {
        return e->label >= 0 && e->label < static_cast<int>(kExpressionCount);
    }
    const auto& au = std::get<AUVector>(payload);
    return std::all_of(au.values.begin(), au.values.end(), [](int v) { return v == 0 || v == 1; });
}

std::vector<FrameAnnotation> parse_annotation_file(std::string_view content, Task task, std::string_view video_id) {
    std::vector<FrameAnnotation> out;
    if (content.size() >= 3 && content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);

    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= content.size()) {
        const auto nl = content.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(content.substr(start));
            break;
        }
        lines.push_back(content.substr(start, nl - start));
        start = nl + 1;
    }
    // Trailing blank lines (including the one after a final newline) carry no frames.
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) return out;

    std::size_t first = 0;
    {
        const auto fields = split_fields(lines[0]);
        double probe = 0.0;
        if (!parse_double(fields[0], probe)) first = 1;
    }
    for (std::size_t i = first; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const std::string_view line = trim(lines[i]);
        if (line.empty()) throw ParseError(line_no, "blank line inside annotation data");
        out.push_back({std::string(video_id), i - first, parse_payload(split_fields(line), task, line_no)});
    }
    return out;
}

CuratedIndex filter_invalid(std::vector<FrameAnnotation> records, Task task, const CurationOptions& options) {
    CuratedIndex index{task, {}, 0};
    index.records.reserve(records.size());
    for (auto& r : records) {
        if (payload_task(r.payload) != task) {
            throw ContractViolation("filter_invalid: record payload does not match task " + task_name(task));
        }
        if (is_valid(r.payload, options)) {
            index.records.push_back(std::move(r));
        } else {
            ++index.dropped_count;
        }
    }
    return index;
}

CurationSummary& CurationSummary::merge(const CurationSummary& other) {
    for (const auto& row : other.rows) {
        auto it = std::find_if(rows.begin(), rows.end(), [&](const SplitSummary& r) { return r.split == row.split; });
        if (it == rows.end()) {
            rows.push_back(row);
        } else {
            it->frames += row.frames;
            it->curated += row.curated;
        }
    }
    return *this;
}

CurationSummary summarize(const SplitIndices& indices) {
    if (indices.empty()) throw ContractViolation("summarize: no splits");
    CurationSummary s;
    s.task = indices.begin()->second.task;
    // Canonical ordering: train, val, test, then anything else alphabetically.
    std::vector<std::string> order;
    for (const char* known : {"train", "val", "test"})
        if (indices.count(known)) order.emplace_back(known);
    for (const auto& [name, _] : indices)
        if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    for (const auto& name : order) {
        const auto& idx = indices.at(name);
        s.rows.push_back({name, idx.total(), idx.records.size()});
    }
    return s;
}

std::string render_summary(const CurationSummary& summary) {
    static const std::map<Task, std::string> titles{
        {Task::VA, "VA estimation"}, {Task::EXPR, "EXPR recognition"}, {Task::AU, "AU detection"}};
    const std::string& title = titles.at(summary.task);
    std::size_t width = title.size();
    for (const auto& row : summary.rows) width = std::max(width, split_title(row.split).size());
    std::string out = fmt::format("{:<{}}  {:>12}  {:>16}\n", title, width, "Frames", "Curated frames");
    out += std::string(width + 32, '-') + "\n";
    for (const auto& row : summary.rows) {
        out += fmt::format("{:<{}}  {:>12}  {:>16}\n", split_title(row.split), width, with_commas(row.frames),
                           with_commas(row.curated));
    }
    return out;
}

SplitIndices curate_directory(const fs::path& root, Task task, const CurationOptions& options) {
    if (!fs::is_directory(root)) throw DataError("annotation directory not found: " + root.string());
    SplitIndices out;
    bool loose_files = false;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            out[entry.path().filename().string()] = curate_split(entry.path(), task, options);
        } else if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            loose_files = true;
        }
    }
    if (loose_files) {
        const std::string name = root.filename().empty() ? root.parent_path().filename().string()
                                                         : root.filename().string();
        out[name] = curate_split(root, task, options);
    }
    if (out.empty()) throw DataError("no annotation files under " + root.string());
    return out;
}

void write_index_jsonl(std::ostream& out, const SplitIndices& indices) {
    for (const auto& [split, index] : indices) {
        for (const auto& r : index.records) {
            nlohmann::ordered_json j{{"split", split}, {"video_id", r.video_id}, {"frame_index", r.frame_index}};
            if (const auto* va = std::get_if<VAPair>(&r.payload)) {
                j["valence"] = va->valence;
                j["arousal"] = va->arousal;
            } else if (const auto* e = std::get_if<ExpressionId>(&r.payload)) {
                j["label"] = e->label;
            } else {
                j["aus"] = std::get<AUVector>(r.payload).values;
            }
            out << j.dump() << '\n';
        }
    }
}

SplitIndices read_index_jsonl(std::istream& in, Task task) {
    SplitIndices out;
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::set<std::pair<std::string, std::size_t>>> keys;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        try {
            FrameAnnotation r;
            r.video_id = j.at("video_id").get<std::string>();
            r.frame_index = j.at("frame_index").get<std::size_t>();
            if (task == Task::VA) {
                if (!j.contains("valence")) throw ParseError(line_no, "record is not a VA record");
                r.payload = VAPair{j.at("valence").get<double>(), j.at("arousal").get<double>()};
            } else if (task == Task::EXPR) {
                if (!j.contains("label")) throw ParseError(line_no, "record is not an EXPR record");
                r.payload = ExpressionId{j.at("label").get<int>()};
            } else {
                if (!j.contains("aus")) throw ParseError(line_no, "record is not an AU record");
                r.payload = AUVector{j.at("aus").get<AuBits>()};
            }
            const std::string split = j.value("split", std::string("all"));
            if (!keys[split].insert({r.video_id, r.frame_index}).second) {
                throw ParseError(line_no, "duplicate frame " + r.video_id + "/" + std::to_string(r.frame_index));
            }
            auto& index = out[split];
            index.task = task;
            index.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("malformed record: ") + e.what());
        }
    }
    return out;
}

std::string annotation_header(Task task) {
    switch (task) {
        case Task::VA: return "valence,arousal";
        case Task::EXPR: return "Neutral,Anger,Disgust,Fear,Happiness,Sadness,Surprise,Other";
        case Task::AU: return "AU1,AU2,AU4,AU6,AU7,AU10,AU12,AU15,AU23,AU24,AU25,AU26";
    }
    return {};
}

std::string format_annotation_file(Task task, const std::vector<Payload>& payloads) {
    std::string out = annotation_header(task) + "\n";
    for (const auto& p : payloads) {
        if (payload_task(p) != task) throw ContractViolation("format_annotation_file: payload/task mismatch");
        if (const auto* va = std::get_if<VAPair>(&p)) {
            out += fmt::format("{},{}\n", va->valence, va->arousal);
        } else if (const auto* e = std::get_if<ExpressionId>(&p)) {
            out += fmt::format("{}\n", e->label);
        } else {
            const auto& v = std::get<AUVector>(p).values;
            out += fmt::format("{}\n", fmt::join(v, ","));
        }
    }
    return out;
}

}  // namespace affectkit::curation
