#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "motionmodes/flow.hpp"

namespace motionmodes {

/// Malformed flow file. `offset()` is the byte position where decoding failed.
class FlowFormatError : public std::runtime_error {
public:
    FlowFormatError(const std::string& what, std::uint64_t offset);
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

// MMFF layout, all little-endian:
//   "MMFF" | u16 version=1 | u16 reserved=0 | u32 F | u32 H | u32 W
//   | F*H*W*2 float32 [frame][row][col][dx,dy] | u32 CRC32(payload)
inline constexpr std::uint16_t kFlowFormatVersion = 1;
inline constexpr std::size_t kFlowHeaderBytes = 20;

std::vector<std::uint8_t> encode_flow(const FlowField& field);
FlowField decode_flow(const std::vector<std::uint8_t>& bytes);

FlowField read_flow(const std::filesystem::path& path);
void write_flow(const FlowField& field, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace motionmodes
