#include "affectkit/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "affectkit/errors.hpp"

namespace affectkit::image_io {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
}

}  // namespace

std::string encode_ppm(const Tensor& chw) {
    if (chw.rank() != 3 || chw.dim(0) != 3) throw ContractViolation("encode_ppm: expected (3, H, W), got " + to_string(chw.shape()));
    const std::size_t h = chw.dim(1);
    const std::size_t w = chw.dim(2);
    std::string out = fmt::format("P6\n{} {}\n255\n", w, h);
    const std::size_t header = out.size();
    out.resize(header + 3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(chw[(c * h + y) * w + x], 0.0, 1.0);
                out[header + (y * w + x) * 3 + c] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0)));
            }
    return out;
}

Tensor decode_ppm(const std::string& bytes) {
    std::size_t pos = 0;
    if (next_token(bytes, pos) != "P6") throw DataError("not a binary PPM (P6) image");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(next_token(bytes, pos));
        h = std::stoul(next_token(bytes, pos));
        maxval = std::stoul(next_token(bytes, pos));
    } catch (const std::exception&) {
        throw DataError("malformed PPM header");
    }
    if (maxval != 255 || w == 0 || h == 0) throw DataError("unsupported PPM (need 8-bit, non-empty)");
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + 3 * w * h) throw DataError("truncated PPM payload");
    Tensor out({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const auto byte = static_cast<std::uint8_t>(bytes[pos + (y * w + x) * 3 + c]);
                out[(c * h + y) * w + x] = byte / 255.0;
            }
    return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& chw) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const std::string bytes = encode_ppm(chw);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read image " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_ppm(ss.str());
}

std::string frame_file_name(std::size_t frame_index) { return fmt::format("{:05d}.ppm", frame_index); }

}  // namespace affectkit::image_io
