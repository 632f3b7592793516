#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slotlab/optim.hpp"
#include "slotlab/tensor.hpp"

namespace slotlab {

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

struct NamedArray {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<float> f32;   // populated when dtype == kFloat32
  std::vector<double> f64;  // populated when dtype == kFloat64
};

// On disk:
//   "SLCK" | u32 version | u32 len + UTF-8 preamble | u32 count |
//   count x (u32 len + UTF-8 name | u8 dtype | u32 rank | rank x u64 extent |
//            raw little-endian values)
// The preamble is free-form text owned by the caller (models store their
// config there as JSON).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  std::string preamble;
  std::vector<NamedArray> entries;

  const NamedArray* Find(const std::string& name) const;
};

std::string SerializeCheckpoint(const Checkpoint& checkpoint);
Checkpoint ParseCheckpoint(const std::string& bytes);
void WriteCheckpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint ReadCheckpoint(const std::string& path);

template <typename T>
void AppendParameters(Checkpoint& checkpoint, const ParameterSet<T>& params, const std::string& prefix = "");

// Copies stored values into existing parameters by name. Shapes must agree;
// precision converts when the stored dtype differs from T.
template <typename T>
void LoadParameters(const Checkpoint& checkpoint, ParameterSet<T>& params, const std::string& prefix = "");

// Moments go in as f64 entries "<prefix>m/<param>" and "<prefix>v/<param>";
// the step counter as a one-element f64 entry "<prefix>step".
template <typename T>
void AppendAdamState(Checkpoint& checkpoint, const AdamState& state, const ParameterSet<T>& params,
                     const std::string& prefix = "adam/");
template <typename T>
AdamState LoadAdamState(const Checkpoint& checkpoint, const ParameterSet<T>& params, AdamConfig config,
                        const std::string& prefix = "adam/");

}  // namespace slotlab
