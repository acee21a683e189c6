#include "affectkit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "affectkit/errors.hpp"

namespace affectkit::checkpoint {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, double value) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f32(std::string_view bytes, std::size_t at) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

const Tensor* CheckpointManifest::find(std::string_view name) const {
    for (const auto& [n, t] : parameters)
        if (n == name) return &t;
    return nullptr;
}

std::string encode(const CheckpointManifest& m) {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : m.parameters) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
        offset += 4 * t.size();
    }
    const nlohmann::json header{{"format", "affectkit-checkpoint"}, {"version", kFormatVersion},
                                {"config", m.config},                {"step", m.step},
                                {"best_metric", m.best_metric},      {"extra", m.extra},
                                {"tensors", tensors}};
    const std::string text = header.dump();
    std::string out(kMagic);
    put_u64(out, text.size());
    out += text;
    out.reserve(out.size() + offset);
    for (const auto& [name, t] : m.parameters)
        for (double v : t.values()) put_f32(out, v);
    return out;
}

CheckpointManifest decode(std::string_view bytes) {
    if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
        throw CheckpointError("not an affectkit checkpoint (bad magic)");
    }
    const std::uint64_t header_len = get_u64(bytes, kMagic.size());
    const std::size_t header_at = kMagic.size() + 8;
    if (header_len > bytes.size() - header_at) throw CheckpointError("truncated checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(header_at, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    const std::string_view payload = bytes.substr(header_at + header_len);
    CheckpointManifest m;
    try {
        if (header.at("format") != "affectkit-checkpoint" || header.at("version") != kFormatVersion) {
            throw CheckpointError("unsupported checkpoint format/version");
        }
        m.config = header.at("config");
        m.step = header.at("step").get<std::size_t>();
        m.best_metric = header.at("best_metric").get<double>();
        m.extra = header.value("extra", nlohmann::json::object());
        for (const auto& t : header.at("tensors")) {
            const auto shape = t.at("shape").get<Shape>();
            const auto offset = t.at("offset").get<std::size_t>();
            const auto count = t.at("count").get<std::size_t>();
            if (count != element_count(shape)) throw CheckpointError("tensor count/shape mismatch");
            if (offset > payload.size() || 4 * count > payload.size() - offset) {
                throw CheckpointError("truncated checkpoint payload for " + t.at("name").get<std::string>());
            }
            std::vector<double> values(count);
            for (std::size_t i = 0; i < count; ++i) values[i] = get_f32(payload, offset + 4 * i);
            m.parameters.emplace_back(t.at("name").get<std::string>(), Tensor(shape, std::move(values)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    return m;
}

void save(const std::filesystem::path& path, const CheckpointManifest& manifest) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    const std::string bytes = encode(manifest);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

CheckpointManifest load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode(ss.str());
}

}  // namespace affectkit::checkpoint
