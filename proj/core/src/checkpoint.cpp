#include "slotlab/checkpoint.hpp"

#include <sstream>

#include "slotlab/binary_io.hpp"
#include "slotlab/error.hpp"

namespace slotlab {
namespace {

constexpr char kMagic[4] = {'S', 'L', 'C', 'K'};

template <typename T>
NamedArray ToNamedArray(const std::string& name, const Shape& shape, std::span<const T> values) {
  NamedArray a;
  a.name = name;
  a.shape = shape;
  if constexpr (std::is_same_v<T, float>) {
    a.dtype = DType::kFloat32;
    a.f32.assign(values.begin(), values.end());
  } else {
    a.dtype = DType::kFloat64;
    a.f64.assign(values.begin(), values.end());
  }
  return a;
}

template <typename T>
void CopyOut(const NamedArray& a, std::span<T> dst) {
  const std::size_t n = a.dtype == DType::kFloat32 ? a.f32.size() : a.f64.size();
  if (n != dst.size()) Fail(ErrorCategory::kFormat, "checkpoint entry " + a.name + " has wrong size");
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = a.dtype == DType::kFloat32 ? static_cast<T>(a.f32[i]) : static_cast<T>(a.f64[i]);
  }
}

}  // namespace

const NamedArray* Checkpoint::Find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::string SerializeCheckpoint(const Checkpoint& checkpoint) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  io::WriteU32(out, checkpoint.version);
  io::WriteString(out, checkpoint.preamble);
  io::WriteU32(out, static_cast<std::uint32_t>(checkpoint.entries.size()));
  for (const auto& e : checkpoint.entries) {
    io::WriteString(out, e.name);
    io::WriteU8(out, static_cast<std::uint8_t>(e.dtype));
    io::WriteU32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) io::WriteU64(out, d);
    const std::size_t n = NumElements(e.shape);
    if (e.dtype == DType::kFloat32) {
      if (e.f32.size() != n) Fail(ErrorCategory::kFormat, "entry " + e.name + " size/shape mismatch");
      for (float v : e.f32) io::WriteF32(out, v);
    } else {
      if (e.f64.size() != n) Fail(ErrorCategory::kFormat, "entry " + e.name + " size/shape mismatch");
      for (double v : e.f64) io::WriteF64(out, v);
    }
  }
  return out.str();
}

Checkpoint ParseCheckpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
    Fail(ErrorCategory::kFormat, "not a checkpoint file (bad magic)");
  }
  Checkpoint c;
  c.version = io::ReadU32(in);
  if (c.version != Checkpoint::kVersion) {
    Fail(ErrorCategory::kFormat, "unsupported checkpoint version " + std::to_string(c.version));
  }
  c.preamble = io::ReadString(in);
  const std::uint32_t count = io::ReadU32(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray e;
    e.name = io::ReadString(in, 1 << 16);
    const std::uint8_t dtype = io::ReadU8(in);
    if (dtype != 1 && dtype != 2) Fail(ErrorCategory::kFormat, "unknown dtype tag in entry " + e.name);
    e.dtype = static_cast<DType>(dtype);
    const std::uint32_t rank = io::ReadU32(in);
    if (rank > 8) Fail(ErrorCategory::kFormat, "rank too large in entry " + e.name);
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(io::ReadU64(in));
    const std::size_t n = NumElements(e.shape);
    const std::size_t width = e.dtype == DType::kFloat32 ? 4 : 8;
    if (n > bytes.size() / width) Fail(ErrorCategory::kFormat, "entry " + e.name + " larger than file");
    if (e.dtype == DType::kFloat32) {
      e.f32.resize(n);
      for (auto& v : e.f32) v = io::ReadF32(in);
    } else {
      e.f64.resize(n);
      for (auto& v : e.f64) v = io::ReadF64(in);
    }
    c.entries.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof()) Fail(ErrorCategory::kFormat, "trailing bytes after checkpoint");
  return c;
}

void WriteCheckpoint(const std::string& path, const Checkpoint& checkpoint) {
  io::AtomicWriteFile(path, SerializeCheckpoint(checkpoint));
}

Checkpoint ReadCheckpoint(const std::string& path) { return ParseCheckpoint(io::ReadFile(path)); }

template <typename T>
void AppendParameters(Checkpoint& checkpoint, const ParameterSet<T>& params, const std::string& prefix) {
  for (const auto& [name, t] : params) {
    checkpoint.entries.push_back(ToNamedArray<T>(prefix + name, t.shape(), t.data()));
  }
}

template <typename T>
void LoadParameters(const Checkpoint& checkpoint, ParameterSet<T>& params, const std::string& prefix) {
  for (auto& [name, t] : params) {
    const NamedArray* a = checkpoint.Find(prefix + name);
    if (a == nullptr) Fail(ErrorCategory::kFormat, "checkpoint is missing parameter " + prefix + name);
    if (a->shape != t.shape()) {
      Fail(ErrorCategory::kFormat, "parameter " + name + " has shape " + ShapeString(a->shape) +
                                       " in checkpoint, model expects " + ShapeString(t.shape()));
    }
    CopyOut<T>(*a, t.mutable_data());
  }
}

template <typename T>
void AppendAdamState(Checkpoint& checkpoint, const AdamState& state, const ParameterSet<T>& params,
                     const std::string& prefix) {
  std::vector<double> step{static_cast<double>(state.step)};
  checkpoint.entries.push_back(ToNamedArray<double>(prefix + "step", Shape{1}, step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    checkpoint.entries.push_back(
        ToNamedArray<double>(prefix + "m/" + params.name(p), params[p].shape(), state.first_moment[p]));
    checkpoint.entries.push_back(
        ToNamedArray<double>(prefix + "v/" + params.name(p), params[p].shape(), state.second_moment[p]));
  }
}

template <typename T>
AdamState LoadAdamState(const Checkpoint& checkpoint, const ParameterSet<T>& params, AdamConfig config,
                        const std::string& prefix) {
  AdamState state = MakeAdamState(params, config);
  const NamedArray* step = checkpoint.Find(prefix + "step");
  if (step == nullptr) Fail(ErrorCategory::kFormat, "checkpoint has no optimizer state");
  std::vector<double> s(1);
  CopyOut<double>(*step, s);
  state.step = static_cast<std::uint64_t>(s[0]);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const NamedArray* m = checkpoint.Find(prefix + "m/" + params.name(p));
    const NamedArray* v = checkpoint.Find(prefix + "v/" + params.name(p));
    if (m == nullptr || v == nullptr) Fail(ErrorCategory::kFormat, "optimizer state missing for " + params.name(p));
    CopyOut<double>(*m, state.first_moment[p]);
    CopyOut<double>(*v, state.second_moment[p]);
  }
  return state;
}

template void AppendParameters(Checkpoint&, const ParameterSet<float>&, const std::string&);
template void AppendParameters(Checkpoint&, const ParameterSet<double>&, const std::string&);
template void LoadParameters(const Checkpoint&, ParameterSet<float>&, const std::string&);
template void LoadParameters(const Checkpoint&, ParameterSet<double>&, const std::string&);
template void AppendAdamState(Checkpoint&, const AdamState&, const ParameterSet<float>&, const std::string&);
template void AppendAdamState(Checkpoint&, const AdamState&, const ParameterSet<double>&, const std::string&);
template AdamState LoadAdamState(const Checkpoint&, const ParameterSet<float>&, AdamConfig, const std::string&);
template AdamState LoadAdamState(const Checkpoint&, const ParameterSet<double>&, AdamConfig, const std::string&);

}  // namespace slotlab
