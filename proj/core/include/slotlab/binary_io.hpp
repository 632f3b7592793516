#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

// Little-endian primitives shared by the checkpoint and dataset formats.
namespace slotlab::io {

void WriteU8(std::ostream& out, std::uint8_t v);
void WriteU32(std::ostream& out, std::uint32_t v);
void WriteU64(std::ostream& out, std::uint64_t v);
void WriteI32(std::ostream& out, std::int32_t v);
void WriteF32(std::ostream& out, float v);
void WriteF64(std::ostream& out, double v);
void WriteString(std::ostream& out, const std::string& s);  // u32 length + bytes
void WriteBytes(std::ostream& out, std::span<const std::uint8_t> bytes);

std::uint8_t ReadU8(std::istream& in);
std::uint32_t ReadU32(std::istream& in);
std::uint64_t ReadU64(std::istream& in);
std::int32_t ReadI32(std::istream& in);
float ReadF32(std::istream& in);
double ReadF64(std::istream& in);
std::string ReadString(std::istream& in, std::size_t max_length = 1u << 26);
void ReadBytes(std::istream& in, std::span<std::uint8_t> bytes);

// Writes `contents` to `path` through a sibling temporary and a rename so a
// reader never observes a half-written file.
void AtomicWriteFile(const std::string& path, const std::string& contents);
std::string ReadFile(const std::string& path);

}  // namespace slotlab::io
