#include "slotlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "slotlab/binary_io.hpp"
#include "slotlab/envs/render.hpp"
#include "slotlab/error.hpp"

namespace slotlab::diagnostics {
namespace {

constexpr std::size_t kMontageScale = 8;
constexpr std::size_t kMontageGap = 2;

std::string Pgm(std::size_t width, std::size_t height, const std::vector<unsigned char>& pixels,
                const std::string& comment) {
  std::ostringstream out;
  out << "P5\n";
  if (!comment.empty()) {
    std::istringstream lines(comment);
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  }
  out << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  return out.str();
}

std::string Indexed(const char* pattern, std::size_t a, std::size_t b = 0) {
  char name[64];
  std::snprintf(name, sizeof(name), pattern, a, b);
  return name;
}

void Search(std::span<const double> m, std::size_t rows, std::size_t cols, std::size_t col,
            std::vector<bool>& used, std::vector<std::size_t>& current, double sum, Assignment& best) {
  if (col == cols) {
    if (sum > best.score) {
      best.score = sum;
      best.slot_of_object = current;
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (used[r]) continue;
    used[r] = true;
    current[col] = r;
    Search(m, rows, cols, col + 1, used, current, sum + m[r * cols + col], best);
    used[r] = false;
  }
}

}  // namespace

unsigned char ToGray(float value) {
  const float clamped = std::clamp(value, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(clamped * 255.0f));
}

Tensor<float> SlotMaps(const MapFn& maps, const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs,
                       std::size_t batch_size) {
  Require(!refs.empty(), ErrorCategory::kContract, "no observations to map");
  std::vector<float> values;
  Shape shape;
  for (std::size_t begin = 0; begin < refs.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, refs.size() - begin);
    NoGradScope<float> no_grad;
    const Tensor<float> part = maps(models::ObservationBatch<float>(buffer, refs.subspan(begin, n), 0));
    shape = part.shape();
    values.insert(values.end(), part.data().begin(), part.data().end());
  }
  shape[0] = refs.size();
  return Tensor<float>(shape, std::move(values));
}

Tensor<float> ObjectMasks(const envs::ExperienceBuffer& buffer, std::span<const StepRef> refs, std::size_t map_size) {
  const std::size_t image = buffer.env.image_size();
  if (map_size == 0 || image % map_size != 0) {
    Fail(ErrorCategory::kDimension, "map resolution " + std::to_string(map_size) + " does not divide image size " +
                                        std::to_string(image));
  }
  const std::size_t factor = image / map_size;
  const std::size_t objects = buffer.num_objects();
  const std::size_t cells = map_size * map_size;
  Tensor<float> out({refs.size(), objects, map_size, map_size});
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const envs::Episode& ep = buffer.episodes.at(refs[i].episode);
    const std::size_t t = refs[i].step;
    std::vector<std::vector<float>> masks;
    switch (buffer.env.kind) {
      case envs::EnvKind::kShapes: masks = envs::GridObjectMasks(ep.grid_states.at(t), buffer.env.catalog); break;
      case envs::EnvKind::kBlocks: masks = envs::BlocksObjectMasks(ep.grid_states.at(t)); break;
      case envs::EnvKind::kThreeBody: masks = envs::BodyObjectMasks(ep.body_states.at(t), buffer.env.view); break;
    }
    for (std::size_t k = 0; k < objects; ++k) {
      for (std::size_t y = 0; y < image; ++y) {
        for (std::size_t x = 0; x < image; ++x) {
          dst[(i * objects + k) * cells + (y / factor) * map_size + x / factor] += masks[k][y * image + x];
        }
      }
    }
  }
  const float area = static_cast<float>(factor * factor);
  for (float& v : dst) v /= area;
  return out;
}

std::vector<std::string> ExportFeatureMaps(const Tensor<float>& maps, const std::string& out_dir,
                                           const std::string& comment) {
  Require(maps.rank() == 4, ErrorCategory::kDimension, "feature maps must be [B,K,H,W]");
  const std::size_t B = maps.dim(0), K = maps.dim(1), H = maps.dim(2), W = maps.dim(3);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) Fail(ErrorCategory::kIo, "cannot create " + out_dir + ": " + ec.message());
  std::vector<std::string> written;
  const std::size_t tile_w = W * kMontageScale, tile_h = H * kMontageScale;
  const std::size_t montage_w = K * tile_w + (K - 1) * kMontageGap;
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<unsigned char> montage(montage_w * tile_h, 0);
    for (std::size_t k = 0; k < K; ++k) {
      const float* map = maps.data().data() + (b * K + k) * H * W;
      std::vector<unsigned char> pixels(H * W);
      for (std::size_t p = 0; p < H * W; ++p) pixels[p] = ToGray(map[p]);
      const std::string path = out_dir + "/" + Indexed("obs%04zu_slot%zu.pgm", b, k);
      io::AtomicWriteFile(path, Pgm(W, H, pixels, comment));
      written.push_back(path);
      for (std::size_t y = 0; y < tile_h; ++y) {
        for (std::size_t x = 0; x < tile_w; ++x) {
          montage[y * montage_w + k * (tile_w + kMontageGap) + x] =
              pixels[(y / kMontageScale) * W + x / kMontageScale];
        }
      }
    }
    const std::string path = out_dir + "/" + Indexed("obs%04zu_montage.pgm", b);
    io::AtomicWriteFile(path, Pgm(montage_w, tile_h, montage, comment));
    written.push_back(path);
  }
  return written;
}

std::vector<double> SlotObjectCorrelation(const Tensor<float>& maps, const Tensor<float>& masks) {
  if (maps.rank() != 4 || masks.rank() != 4 || maps.dim(0) != masks.dim(0) || maps.dim(2) != masks.dim(2) ||
      maps.dim(3) != masks.dim(3)) {
    Fail(ErrorCategory::kDimension, "resolution mismatch between maps " + ShapeString(maps.shape()) + " and masks " +
                                        ShapeString(masks.shape()));
  }
  const std::size_t B = maps.dim(0), K = maps.dim(1), J = masks.dim(1);
  const std::size_t P = maps.dim(2) * maps.dim(3);
  std::vector<double> corr(K * J, 0.0);
  std::vector<double> a(P), c(P);
  auto centered = [P](const float* src, std::vector<double>& out) {
    double mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) mean += src[p];
    mean /= static_cast<double>(P);
    double norm = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      out[p] = src[p] - mean;
      norm += out[p] * out[p];
    }
    return std::sqrt(norm);
  };
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      const double na = centered(maps.data().data() + (b * K + k) * P, a);
      for (std::size_t j = 0; j < J; ++j) {
        const double nc = centered(masks.data().data() + (b * J + j) * P, c);
        if (na < 1e-12 || nc < 1e-12) continue;
        double dot = 0.0;
        for (std::size_t p = 0; p < P; ++p) dot += a[p] * c[p];
        corr[k * J + j] += std::min(1.0, std::abs(dot) / (na * nc));
      }
    }
  }
  for (double& v : corr) v /= static_cast<double>(B);
  return corr;
}

Assignment BestAssignment(std::span<const double> matrix, std::size_t rows, std::size_t cols) {
  Require(rows >= cols, ErrorCategory::kDimension, "assignment needs at least as many rows as columns");
  Require(matrix.size() == rows * cols, ErrorCategory::kDimension, "matrix size does not match its extents");
  Assignment best;
  best.score = -1.0;
  std::vector<bool> used(rows, false);
  std::vector<std::size_t> current(cols, 0);
  Search(matrix, rows, cols, 0, used, current, 0.0, best);
  best.score = cols == 0 ? 0.0 : best.score / static_cast<double>(cols);
  return best;
}

double FactorizationScore(const Tensor<float>& maps, const Tensor<float>& masks) {
  const std::vector<double> corr = SlotObjectCorrelation(maps, masks);
  return BestAssignment(corr, maps.dim(1), masks.dim(1)).score;
}

std::vector<double> TransitionUpdateMatrix(const models::CswmModel<float>& model,
                                           const envs::ExperienceBuffer& buffer, std::size_t batch_size) {
  if (!buffer.env.has_actions()) {
    Fail(ErrorCategory::kUnsupported, "transition update matrix needs an environment with actions");
  }
  const std::size_t J = buffer.num_objects();
  const std::size_t K = model.config().num_slots;
  const std::size_t D = model.config().latent_dim;
  std::vector<double> sum(J * K, 0.0);
  std::vector<std::size_t> count(J, 0);
  const std::vector<StepRef> refs = models::AllSteps(buffer);
  NoGradScope<float> no_grad;
  for (std::size_t begin = 0; begin < refs.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, refs.size() - begin);
    const std::span<const StepRef> part(refs.data() + begin, n);
    const Tensor<float> delta = model.Transition(model.Encode(models::ObservationBatch<float>(buffer, part, 0)),
                                                 models::ActionBatch<float>(buffer, part, 0));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& action = buffer.episodes[part[i].episode].actions[part[i].step];
      if (!action) continue;
      const std::size_t j = static_cast<std::size_t>(action->object);
      ++count[j];
      for (std::size_t k = 0; k < K; ++k) {
        double norm = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          const double v = delta.data()[(i * K + k) * D + d];
          norm += v * v;
        }
        sum[j * K + k] += std::sqrt(norm);
      }
    }
  }
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t k = 0; k < K; ++k) {
      if (count[j] > 0) sum[j * K + k] /= static_cast<double>(count[j]);
    }
  }
  return sum;
}

double DiagonalMassRatio(std::span<const double> matrix, std::size_t objects, std::size_t slots) {
  Require(matrix.size() == objects * slots, ErrorCategory::kDimension, "matrix size does not match its extents");
  // Row-normalize, then assign objects to slots on the transposed layout.
  std::vector<double> share(slots * objects, 0.0);
  for (std::size_t j = 0; j < objects; ++j) {
    double total = 0.0;
    for (std::size_t k = 0; k < slots; ++k) total += matrix[j * slots + k];
    if (total <= 0.0) continue;
    for (std::size_t k = 0; k < slots; ++k) share[k * objects + j] = matrix[j * slots + k] / total;
  }
  return BestAssignment(share, slots, objects).score;
}

std::string MatrixCsv(std::span<const double> matrix, std::size_t rows, std::size_t cols, const std::string& comment) {
  Require(matrix.size() == rows * cols, ErrorCategory::kDimension, "matrix size does not match its extents");
  std::ostringstream out;
  out.precision(17);
  if (!comment.empty()) {
    std::istringstream lines(comment);
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << matrix[r * cols + c];
    out << '\n';
  }
  return out.str();
}

}  // namespace slotlab::diagnostics
