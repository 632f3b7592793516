#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slotlab/envs/buffer.hpp"
#include "slotlab/models/batch.hpp"
#include "slotlab/models/cswm.hpp"

namespace slotlab::diagnostics {

using models::StepRef;

// Maps observations [B, C, H, W] to slot activation maps [B, K, H', W'].
using MapFn = std::function<Tensor<float>(const Tensor<float>&)>;

Tensor<float> SlotMaps(const MapFn& maps, const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                       std::size_t batch_size = 250);

// Ground-truth object masks of each referenced frame, average-pooled to
// `map_size`, as [B, objects, map_size, map_size].
Tensor<float> ObjectMasks(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs, std::size_t map_size);

// Per-slot 8-bit maps plus one montage per observation, as binary PGM files
// named obs<iiii>_slot<k>.pgm and obs<iiii>_montage.pgm (i zero-padded). `comment` goes into each
// file header. Returns the written paths in order.
std::vector<std::string> ExportFeatureMaps(const Tensor<float>& maps, const std::string& out_dir,
                                           const std::string& comment = "");

// 8-bit value of a map activation in [0, 1].
unsigned char ToGray(float value);

// Slot-by-object score: cosine similarity of mean-centered maps, 0 when
// either side is constant, absolute value, averaged over the batch.
// Returns [K, objects] row-major.
std::vector<double> SlotObjectCorrelation(const Tensor<float>& maps, const Tensor<float>& masks);

struct Assignment {
  std::vector<std::size_t> slot_of_object;
  double score = 0.0;  // mean matched entry
};

// Best one-to-one map from objects (columns) to slots (rows) of a
// [rows, cols] matrix, exhaustive over all injections; requires rows >= cols.
Assignment BestAssignment(std::span<const double> matrix, std::size_t rows, std::size_t cols);

// Mean matched correlation under the best slot assignment, in [0, 1].
double FactorizationScore(const Tensor<float>& maps, const Tensor<float>& masks);

// M[j, k] = mean ||delta z_k|| over transitions whose action moves object
// j. [objects, K] row-major. Needs an environment with actions.
std::vector<double> TransitionUpdateMatrix(const models::CswmModel<float>& model,
                                           const envs::ExperienceBuffer& buffer, std::size_t batch_size = 250);

// Mean over rows j of M[j, slot(j)] / sum_k M[j, k] under the column
// assignment maximizing that mean. Rows with zero mass contribute 0.
double DiagonalMassRatio(std::span<const double> matrix, std::size_t objects, std::size_t slots);

std::string MatrixCsv(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                      const std::string& comment = "");

}  // namespace slotlab::diagnostics
