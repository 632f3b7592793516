#include "slotlab/binary_io.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slotlab/error.hpp"

namespace slotlab::io {
namespace {

template <typename U>
void WriteLittle(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename U>
U ReadLittle(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (!in) Fail(ErrorCategory::kFormat, "unexpected end of stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void WriteU8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
void WriteU32(std::ostream& out, std::uint32_t v) { WriteLittle(out, v); }
void WriteU64(std::ostream& out, std::uint64_t v) { WriteLittle(out, v); }
void WriteI32(std::ostream& out, std::int32_t v) { WriteLittle(out, static_cast<std::uint32_t>(v)); }
void WriteF32(std::ostream& out, float v) { WriteLittle(out, std::bit_cast<std::uint32_t>(v)); }
void WriteF64(std::ostream& out, double v) { WriteLittle(out, std::bit_cast<std::uint64_t>(v)); }

void WriteString(std::ostream& out, const std::string& s) {
  WriteU32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void WriteBytes(std::ostream& out, std::span<const std::uint8_t> bytes) {
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint8_t ReadU8(std::istream& in) { return ReadLittle<std::uint8_t>(in); }
std::uint32_t ReadU32(std::istream& in) { return ReadLittle<std::uint32_t>(in); }
std::uint64_t ReadU64(std::istream& in) { return ReadLittle<std::uint64_t>(in); }
std::int32_t ReadI32(std::istream& in) { return static_cast<std::int32_t>(ReadLittle<std::uint32_t>(in)); }
float ReadF32(std::istream& in) { return std::bit_cast<float>(ReadLittle<std::uint32_t>(in)); }
double ReadF64(std::istream& in) { return std::bit_cast<double>(ReadLittle<std::uint64_t>(in)); }

std::string ReadString(std::istream& in, std::size_t max_length) {
  const std::uint32_t n = ReadU32(in);
  if (n > max_length) Fail(ErrorCategory::kFormat, "string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) Fail(ErrorCategory::kFormat, "unexpected end of stream in string");
  return s;
}

void ReadBytes(std::istream& in, std::span<std::uint8_t> bytes) {
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) Fail(ErrorCategory::kFormat, "unexpected end of stream in byte block");
}

void AtomicWriteFile(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path temp = target.string() + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorCategory::kIo, "cannot open " + temp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) Fail(ErrorCategory::kIo, "write failed for " + temp.string());
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) Fail(ErrorCategory::kIo, "cannot rename " + temp.string() + " to " + path + ": " + ec.message());
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCategory::kIo, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace slotlab::io
