#include "motionmodes/flow_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <zlib.h>

namespace motionmodes {

FlowFormatError::FlowFormatError(const std::string& what, std::uint64_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "MMFF stores IEEE-754 float32");

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xff));
}

std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in bounded chunks.
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_flow(const FlowField& field) {
    const FlowShape& s = field.shape();
    std::vector<std::uint8_t> out;
    out.reserve(kFlowHeaderBytes + 4 * field.size() + 4);
    for (char c : {'M', 'M', 'F', 'F'}) out.push_back(static_cast<std::uint8_t>(c));
    put_u16(out, kFlowFormatVersion);
    put_u16(out, 0);
    put_u32(out, static_cast<std::uint32_t>(s.frames));
    put_u32(out, static_cast<std::uint32_t>(s.height));
    put_u32(out, static_cast<std::uint32_t>(s.width));
    for (double v : field.data()) {
        const auto f = static_cast<float>(v);
        if (!std::isfinite(f)) throw InvalidArgument("flow entry not representable as finite float32");
        put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    put_u32(out, crc32_of(out.data() + kFlowHeaderBytes, out.size() - kFlowHeaderBytes));
    return out;
}

FlowField decode_flow(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "MMFF", 4) != 0) {
        throw FlowFormatError("bad magic", 0);
    }
    if (bytes.size() < kFlowHeaderBytes) throw FlowFormatError("truncated header", bytes.size());
    const std::uint8_t* p = bytes.data();
    if (const auto version = get_u16(p + 4); version != kFlowFormatVersion) {
        throw FlowFormatError("unsupported version " + std::to_string(version), 4);
    }
    if (get_u16(p + 6) != 0) throw FlowFormatError("nonzero reserved field", 6);
    const std::uint64_t f = get_u32(p + 8), h = get_u32(p + 12), w = get_u32(p + 16);
    if (f == 0) throw FlowFormatError("zero frame count", 8);
    if (h == 0) throw FlowFormatError("zero height", 12);
    if (w == 0) throw FlowFormatError("zero width", 16);
    constexpr std::uint64_t kMaxDim = static_cast<std::uint64_t>(std::numeric_limits<int>::max());
    const std::uint64_t limit = std::numeric_limits<std::size_t>::max() / 16;
    if (f > kMaxDim || h > kMaxDim || w > kMaxDim || f * h > limit || f * h * w > limit) {
        throw FlowFormatError("shape overflow", 8);
    }
    const std::uint64_t count = f * h * w * 2;
    const std::uint64_t payload_end = kFlowHeaderBytes + 4 * count;
    if (bytes.size() < payload_end) throw FlowFormatError("truncated payload", bytes.size());
    if (bytes.size() < payload_end + 4) throw FlowFormatError("truncated checksum", bytes.size());
    if (bytes.size() > payload_end + 4) throw FlowFormatError("trailing bytes", payload_end + 4);
    const std::uint32_t stored = get_u32(p + payload_end);
    if (crc32_of(p + kFlowHeaderBytes, payload_end - kFlowHeaderBytes) != stored) {
        throw FlowFormatError("checksum mismatch", payload_end);
    }
    std::vector<double> data(count);
    for (std::uint64_t n = 0; n < count; ++n) {
        const float v = std::bit_cast<float>(get_u32(p + kFlowHeaderBytes + 4 * n));
        if (!std::isfinite(v)) throw FlowFormatError("non-finite value", kFlowHeaderBytes + 4 * n);
        data[n] = v;
    }
    return FlowField({static_cast<int>(f), static_cast<int>(h), static_cast<int>(w)}, std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

FlowField read_flow(const std::filesystem::path& path) { return decode_flow(read_file_bytes(path)); }

void write_flow(const FlowField& field, const std::filesystem::path& path) {
    write_file_bytes(path, encode_flow(field));
}

}  // namespace motionmodes
