#include "slotlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "slotlab/error.hpp"

namespace slotlab {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
using NodePtr = std::shared_ptr<detail::TensorNode<T>>;

// Tape to record on, or nullptr when no input participates in gradients.
template <typename T>
Tape<T>* RecordingTape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::Active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
void Attach(Tensor<T>& out, Tape<T>* tape) {
  out.node().requires_grad = true;
  out.node().tape = tape;
}

template <typename T>
void CheckFinite(const Tensor<T>& t, const char* op) {
  const auto d = t.data();
  if (!Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(d.data(), d.size()).allFinite()) {
    Fail(ErrorCategory::kNumeric, std::string(op) + " produced a non-finite value");
  }
}

void DimensionError(const std::string& message) { Fail(ErrorCategory::kDimension, message); }

template <typename T>
void RequireSameShape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    DimensionError(std::string(op) + ": shape " + ShapeString(a.shape()) + " vs " +
                   ShapeString(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;      // image side
  std::size_t kernel_h, kernel_w, stride, padding;
  std::size_t out_h, out_w;                 // patch grid side
  std::size_t patch_rows() const { return channels * kernel_h * kernel_w; }
  std::size_t patch_cols() const { return out_h * out_w; }
};

// Patches of one image into columns [patch_rows, col_offset + patch_cols) of
// a row-major matrix with leading dimension `ld`.
template <typename T>
void Im2Col(const T* image, const ConvGeometry& g, T* cols, std::size_t ld, std::size_t col_offset) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        T* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * ld + col_offset;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                ix < static_cast<long>(g.width);
            row[oy * g.out_w + ox] = inside ? image[(c * g.height + iy) * g.width + ix] : T{0};
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col: accumulates columns back into an image.
template <typename T>
void Col2ImAdd(const T* cols, std::size_t ld, std::size_t col_offset, const ConvGeometry& g, T* image) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * ld + col_offset;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            image[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

// Batched view of a conv input: rank 3 is a batch of one.
struct BatchedImage {
  bool batched;
  std::size_t batch, channels, height, width;
};

template <typename T>
BatchedImage BatchedView(const Tensor<T>& input, const char* op) {
  if (input.rank() == 3) return {false, 1, input.dim(0), input.dim(1), input.dim(2)};
  if (input.rank() == 4) return {true, input.dim(0), input.dim(1), input.dim(2), input.dim(3)};
  DimensionError(std::string(op) + ": expected [C,H,W] or [B,C,H,W], got " + ShapeString(input.shape()));
  return {};
}

// Samples per GEMM chunk, bounding the patch matrix to ~4M entries.
std::size_t ChunkSamples(std::size_t per_sample_entries, std::size_t batch) {
  const std::size_t budget = std::size_t{1} << 22;
  return std::clamp<std::size_t>(budget / std::max<std::size_t>(per_sample_entries, 1), 1, batch);
}

}  // namespace

template <typename T>
Tensor<T> Conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  const BatchedImage in = BatchedView(input, "conv2d");
  if (kernel.rank() != 4) DimensionError("conv2d: kernel must be [C_out,C_in,kH,kW]");
  const std::size_t c_out = kernel.dim(0);
  if (kernel.dim(1) != in.channels) {
    DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                   " input channels, input has " + std::to_string(in.channels));
  }
  if (bias.rank() != 1 || bias.dim(0) != c_out) DimensionError("conv2d: bias must be [C_out]");
  if (stride == 0) Fail(ErrorCategory::kContract, "conv2d: stride must be positive");
  const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
  if (in.height + 2 * padding < kh || in.width + 2 * padding < kw) {
    DimensionError("conv2d: kernel larger than padded input");
  }
  ConvGeometry g{in.channels, in.height, in.width, kh, kw, stride, padding,
                 (in.height + 2 * padding - kh) / stride + 1, (in.width + 2 * padding - kw) / stride + 1};
  const std::size_t prows = g.patch_rows(), pcols = g.patch_cols();
  const std::size_t in_stride = in.channels * in.height * in.width;
  const std::size_t out_stride = c_out * pcols;

  Shape out_shape = in.batched ? Shape{in.batch, c_out, g.out_h, g.out_w} : Shape{c_out, g.out_h, g.out_w};
  Tensor<T> out(out_shape);
  const std::size_t chunk = ChunkSamples(prows * pcols, in.batch);
  AlignedVector<T> cols;
  RowMatrix<T> product;
  const ConstMatrixMap<T> kmat(kernel.data().data(), c_out, prows);
  for (std::size_t b0 = 0; b0 < in.batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, in.batch - b0);
    const std::size_t ld = nb * pcols;
    cols.resize(prows * ld);
    for (std::size_t b = 0; b < nb; ++b) {
      Im2Col(input.data().data() + (b0 + b) * in_stride, g, cols.data(), ld, b * pcols);
    }
    product.noalias() = kmat * ConstMatrixMap<T>(cols.data(), prows, ld);
    for (std::size_t b = 0; b < nb; ++b) {
      T* dst = out.mutable_data().data() + (b0 + b) * out_stride;
      for (std::size_t co = 0; co < c_out; ++co) {
        const T bco = bias.data()[co];
        for (std::size_t o = 0; o < pcols; ++o) dst[co * pcols + o] = product(co, b * pcols + o) + bco;
      }
    }
  }
  CheckFinite(out, "conv2d");

  if (Tape<T>* tape = RecordingTape({&input, &kernel, &bias})) {
    Attach(out, tape);
    tape->Record([x = input.node_ptr(), k = kernel.node_ptr(), bn = bias.node_ptr(),
                  o = out.node_ptr(), g, in, c_out, chunk]() {
      if (o->grad.empty()) return;
      const std::size_t prows = g.patch_rows(), pcols = g.patch_cols();
      const std::size_t in_stride = in.channels * in.height * in.width;
      const std::size_t out_stride = c_out * pcols;
      const ConstMatrixMap<T> kmat(k->data.data(), c_out, prows);
      AlignedVector<T> cols, dcols;
      RowMatrix<T> dout;
      for (std::size_t b0 = 0; b0 < in.batch; b0 += chunk) {
        const std::size_t nb = std::min(chunk, in.batch - b0);
        const std::size_t ld = nb * pcols;
        dout.resize(c_out, ld);
        for (std::size_t b = 0; b < nb; ++b) {
          const T* src = o->grad.data() + (b0 + b) * out_stride;
          for (std::size_t co = 0; co < c_out; ++co) {
            for (std::size_t p = 0; p < pcols; ++p) dout(co, b * pcols + p) = src[co * pcols + p];
          }
        }
        if (bn->requires_grad) {
          auto& db = bn->GradBuffer();
          for (std::size_t co = 0; co < c_out; ++co) db[co] += dout.row(co).sum();
        }
        if (k->requires_grad) {
          cols.resize(prows * ld);
          for (std::size_t b = 0; b < nb; ++b) {
            Im2Col(x->data.data() + (b0 + b) * in_stride, g, cols.data(), ld, b * pcols);
          }
          MatrixMap<T>(k->GradBuffer().data(), c_out, prows).noalias() +=
              dout * ConstMatrixMap<T>(cols.data(), prows, ld).transpose();
        }
        if (x->requires_grad) {
          dcols.resize(prows * ld);
          MatrixMap<T>(dcols.data(), prows, ld).noalias() = kmat.transpose() * dout;
          auto& dx = x->GradBuffer();
          for (std::size_t b = 0; b < nb; ++b) {
            Col2ImAdd(dcols.data(), ld, b * pcols, g, dx.data() + (b0 + b) * in_stride);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> ConvTranspose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                          std::size_t stride, std::size_t padding) {
  const BatchedImage in = BatchedView(input, "conv_transpose2d");
  if (kernel.rank() != 4) DimensionError("conv_transpose2d: kernel must be [C_in,C_out,kH,kW]");
  if (kernel.dim(0) != in.channels) {
    DimensionError("conv_transpose2d: kernel expects " + std::to_string(kernel.dim(0)) +
                   " input channels, input has " + std::to_string(in.channels));
  }
  const std::size_t c_out = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (bias.rank() != 1 || bias.dim(0) != c_out) DimensionError("conv_transpose2d: bias must be [C_out]");
  if (stride == 0) Fail(ErrorCategory::kContract, "conv_transpose2d: stride must be positive");
  const long oh = static_cast<long>((in.height - 1) * stride + kh) - 2 * static_cast<long>(padding);
  const long ow = static_cast<long>((in.width - 1) * stride + kw) - 2 * static_cast<long>(padding);
  if (oh <= 0 || ow <= 0) DimensionError("conv_transpose2d: empty output");
  // Geometry of the forward conv whose adjoint this is: output image is the
  // "image side", the input grid is the "patch grid side".
  ConvGeometry g{c_out, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), kh, kw, stride,
                 padding, in.height, in.width};
  const std::size_t prows = g.patch_rows(), pcols = g.patch_cols();
  const std::size_t in_stride = in.channels * pcols;
  const std::size_t out_stride = c_out * g.height * g.width;

  Shape out_shape = in.batched ? Shape{in.batch, c_out, g.height, g.width} : Shape{c_out, g.height, g.width};
  Tensor<T> out(out_shape);
  const ConstMatrixMap<T> kmat(kernel.data().data(), in.channels, prows);
  RowMatrix<T> cols;
  for (std::size_t b = 0; b < in.batch; ++b) {
    cols.noalias() = kmat.transpose() *
                     ConstMatrixMap<T>(input.data().data() + b * in_stride, in.channels, pcols);
    T* dst = out.mutable_data().data() + b * out_stride;
    Col2ImAdd(cols.data(), pcols, 0, g, dst);
    for (std::size_t co = 0; co < c_out; ++co) {
      const T bco = bias.data()[co];
      for (std::size_t p = 0; p < g.height * g.width; ++p) dst[co * g.height * g.width + p] += bco;
    }
  }
  CheckFinite(out, "conv_transpose2d");

  if (Tape<T>* tape = RecordingTape({&input, &kernel, &bias})) {
    Attach(out, tape);
    tape->Record([x = input.node_ptr(), k = kernel.node_ptr(), bn = bias.node_ptr(),
                  o = out.node_ptr(), g, in, c_out]() {
      if (o->grad.empty()) return;
      const std::size_t prows = g.patch_rows(), pcols = g.patch_cols();
      const std::size_t in_stride = in.channels * pcols;
      const std::size_t plane = g.height * g.width;
      const std::size_t out_stride = c_out * plane;
      const ConstMatrixMap<T> kmat(k->data.data(), in.channels, prows);
      AlignedVector<T> dcols(prows * pcols);
      for (std::size_t b = 0; b < in.batch; ++b) {
        const T* dout = o->grad.data() + b * out_stride;
        if (bn->requires_grad) {
          auto& db = bn->GradBuffer();
          for (std::size_t co = 0; co < c_out; ++co) {
            T s{0};
            for (std::size_t p = 0; p < plane; ++p) s += dout[co * plane + p];
            db[co] += s;
          }
        }
        Im2Col(dout, g, dcols.data(), pcols, 0);
        const ConstMatrixMap<T> dcol_map(dcols.data(), prows, pcols);
        if (k->requires_grad) {
          MatrixMap<T>(k->GradBuffer().data(), in.channels, prows).noalias() +=
              ConstMatrixMap<T>(x->data.data() + b * in_stride, in.channels, pcols) * dcol_map.transpose();
        }
        if (x->requires_grad) {
          MatrixMap<T>(x->GradBuffer().data() + b * in_stride, in.channels, pcols).noalias() +=
              kmat * dcol_map;
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> LinearImpl(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias) {
  if (weight.rank() != 2) DimensionError("linear: weight must be [F_out,F_in]");
  const std::size_t f_out = weight.dim(0), f_in = weight.dim(1);
  if (input.rank() == 0 || input.shape().back() != f_in) {
    DimensionError("linear: trailing extent of " + ShapeString(input.shape()) + " must equal " +
                   std::to_string(f_in));
  }
  if (bias != nullptr && (bias->rank() != 1 || bias->dim(0) != f_out)) {
    DimensionError("linear: bias must be [F_out]");
  }
  const std::size_t rows = input.size() / f_in;
  Shape out_shape = input.shape();
  out_shape.back() = f_out;
  Tensor<T> out(out_shape);
  MatrixMap<T> y(out.mutable_data().data(), rows, f_out);
  y.noalias() = ConstMatrixMap<T>(input.data().data(), rows, f_in) *
                ConstMatrixMap<T>(weight.data().data(), f_out, f_in).transpose();
  if (bias != nullptr) {
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->data().data(), f_out);
  }
  CheckFinite(out, "linear");

  Tensor<T> no_bias;
  if (Tape<T>* tape = RecordingTape({&input, &weight, bias != nullptr ? bias : &no_bias})) {
    Attach(out, tape);
    NodePtr<T> bn = bias != nullptr ? bias->node_ptr() : nullptr;
    tape->Record([x = input.node_ptr(), w = weight.node_ptr(), bn, o = out.node_ptr(), rows, f_in, f_out]() {
      if (o->grad.empty()) return;
      const ConstMatrixMap<T> dy(o->grad.data(), rows, f_out);
      if (x->requires_grad) {
        MatrixMap<T>(x->GradBuffer().data(), rows, f_in).noalias() +=
            dy * ConstMatrixMap<T>(w->data.data(), f_out, f_in);
      }
      if (w->requires_grad) {
        MatrixMap<T>(w->GradBuffer().data(), f_out, f_in).noalias() +=
            dy.transpose() * ConstMatrixMap<T>(x->data.data(), rows, f_in);
      }
      if (bn && bn->requires_grad) {
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bn->GradBuffer().data(), f_out).noalias() +=
            Eigen::Matrix<T, 1, Eigen::Dynamic>::Ones(rows) * dy;
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  return LinearImpl(input, weight, &bias);
}

template <typename T>
Tensor<T> Linear(const Tensor<T>& input, const Tensor<T>& weight) {
  return LinearImpl<T>(input, weight, nullptr);
}

template <typename T>
Tensor<T> AddBias(const Tensor<T>& input, const Tensor<T>& bias, T scale) {
  if (bias.rank() != 1 || input.rank() == 0 || input.shape().back() != bias.dim(0)) {
    DimensionError("add_bias: bias " + ShapeString(bias.shape()) + " does not match trailing axis of " +
                   ShapeString(input.shape()));
  }
  const std::size_t f = bias.dim(0), rows = input.size() / f;
  Tensor<T> out(input.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < f; ++j) {
      out.mutable_data()[r * f + j] = input.data()[r * f + j] + scale * bias.data()[j];
    }
  }
  CheckFinite(out, "add_bias");
  if (Tape<T>* tape = RecordingTape({&input, &bias})) {
    Attach(out, tape);
    tape->Record([x = input.node_ptr(), bn = bias.node_ptr(), o = out.node_ptr(), rows, f, scale]() {
      if (o->grad.empty()) return;
      if (x->requires_grad) {
        auto& dx = x->GradBuffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& db = bn->GradBuffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < f; ++j) db[j] += scale * o->grad[r * f + j];
        }
      }
    });
  }
  return out;
}

namespace {

// Elementwise unary op with derivative expressed through input and output.
template <typename T, typename Forward, typename Derivative>
Tensor<T> Unary(const Tensor<T>& x, const char* name, Forward forward, Derivative derivative) {
  Tensor<T> out(x.shape());
  const T* src = x.data().data();
  T* dst = out.mutable_data().data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] = forward(src[i]);
  CheckFinite(out, name);
  if (Tape<T>* tape = RecordingTape({&x})) {
    Attach(out, tape);
    tape->Record([xn = x.node_ptr(), o = out.node_ptr(), derivative]() {
      if (o->grad.empty()) return;
      T* dx = xn->GradBuffer().data();
      const T* dy = o->grad.data();
      const T* xv = xn->data.data();
      const T* yv = o->data.data();
      const std::size_t n = o->data.size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * derivative(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Relu(const Tensor<T>& x) {
  return Unary(
      x, "relu", [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> LeakyRelu(const Tensor<T>& x, T slope) {
  return Unary(
      x, "leaky_relu", [slope](T v) { return v > T{0} ? v : slope * v; },
      [slope](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& x) {
  return Unary(
      x, "sigmoid",
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset) {
  if (x.rank() == 0) DimensionError("layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (n < 2) Fail(ErrorCategory::kContract, "layer_norm: degenerate input, trailing extent must be >= 2");
  if (gain.shape() != Shape{n} || offset.shape() != Shape{n}) {
    DimensionError("layer_norm: gain/offset must be [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.size() / n;
  Tensor<T> out(x.shape());
  AlignedVector<T> normalized(x.size());
  std::vector<T> inv_std(rows);
  const T eps = static_cast<T>(kLayerNormEpsilon);
  using Row = Eigen::Array<T, 1, Eigen::Dynamic>;
  const Eigen::Map<const Row> g(gain.data().data(), n);
  const Eigen::Map<const Row> b(offset.data().data(), n);
  for (std::size_t r = 0; r < rows; ++r) {
    const Eigen::Map<const Row> src(x.data().data() + r * n, n);
    Eigen::Map<Row> xhat(normalized.data() + r * n, n);
    const T mean = src.sum() / static_cast<T>(n);
    xhat = src - mean;
    const T var = xhat.square().sum() / static_cast<T>(n);
    const T inv = T{1} / std::sqrt(var + eps);
    inv_std[r] = inv;
    xhat *= inv;
    Eigen::Map<Row>(out.mutable_data().data() + r * n, n) = g * xhat + b;
  }
  CheckFinite(out, "layer_norm");
  if (Tape<T>* tape = RecordingTape({&x, &gain, &offset})) {
    Attach(out, tape);
    tape->Record([xn = x.node_ptr(), gn = gain.node_ptr(), on = offset.node_ptr(), o = out.node_ptr(),
                  normalized = std::move(normalized), inv_std = std::move(inv_std), rows, n]() {
      if (o->grad.empty()) return;
      using Row = Eigen::Array<T, 1, Eigen::Dynamic>;
      Row dxhat(n);
      const Eigen::Map<const Row> g(gn->data.data(), n);
      for (std::size_t r = 0; r < rows; ++r) {
        const Eigen::Map<const Row> dy(o->grad.data() + r * n, n);
        const Eigen::Map<const Row> xhat(normalized.data() + r * n, n);
        if (gn->requires_grad) Eigen::Map<Row>(gn->GradBuffer().data(), n) += dy * xhat;
        if (on->requires_grad) Eigen::Map<Row>(on->GradBuffer().data(), n) += dy;
        if (xn->requires_grad) {
          dxhat = dy * g;
          const T mean_d = dxhat.sum() / static_cast<T>(n);
          const T mean_dx = (dxhat * xhat).sum() / static_cast<T>(n);
          Eigen::Map<Row>(xn->GradBuffer().data() + r * n, n) += inv_std[r] * (dxhat - mean_d - xhat * mean_dx);
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T, typename Forward, typename PullA, typename PullB>
Tensor<T> Binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, Forward forward, PullA pull_a,
                 PullB pull_b) {
  RequireSameShape(a, b, name);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.mutable_data()[i] = forward(a.data()[i], b.data()[i]);
  CheckFinite(out, name);
  if (Tape<T>* tape = RecordingTape({&a, &b})) {
    Attach(out, tape);
    tape->Record([an = a.node_ptr(), bn = b.node_ptr(), o = out.node_ptr(), pull_a, pull_b]() {
      if (o->grad.empty()) return;
      const std::size_t n = o->grad.size();
      if (an->requires_grad) {
        auto& da = an->GradBuffer();
        for (std::size_t i = 0; i < n; ++i) da[i] += pull_a(o->grad[i], an->data[i], bn->data[i]);
      }
      if (bn->requires_grad) {
        auto& db = bn->GradBuffer();
        for (std::size_t i = 0; i < n; ++i) db[i] += pull_b(o->grad[i], an->data[i], bn->data[i]);
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  return Binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b) {
  return Binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b) {
  return Binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& x, T factor) {
  return Unary(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> AddScalar(const Tensor<T>& x, T value) {
  return Unary(
      x, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> Square(const Tensor<T>& x) {
  return Unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

namespace {

// Reduces groups of `group` consecutive elements with weight `weight`.
template <typename T>
Tensor<T> GroupSum(const Tensor<T>& x, Shape out_shape, std::size_t group, T weight, const char* name) {
  Tensor<T> out(std::move(out_shape));
  const std::size_t groups = out.size();
  for (std::size_t r = 0; r < groups; ++r) {
    T s{0};
    for (std::size_t j = 0; j < group; ++j) s += x.data()[r * group + j];
    out.mutable_data()[r] = s * weight;
  }
  CheckFinite(out, name);
  if (Tape<T>* tape = RecordingTape({&x})) {
    Attach(out, tape);
    tape->Record([xn = x.node_ptr(), o = out.node_ptr(), groups, group, weight]() {
      if (o->grad.empty()) return;
      auto& dx = xn->GradBuffer();
      for (std::size_t r = 0; r < groups; ++r) {
        const T g = o->grad[r] * weight;
        for (std::size_t j = 0; j < group; ++j) dx[r * group + j] += g;
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Sum(const Tensor<T>& x) {
  return GroupSum(x, Shape{}, x.size(), T{1}, "sum");
}

template <typename T>
Tensor<T> Mean(const Tensor<T>& x) {
  if (x.size() == 0) Fail(ErrorCategory::kContract, "mean of empty tensor");
  return GroupSum(x, Shape{}, x.size(), T{1} / static_cast<T>(x.size()), "mean");
}

template <typename T>
Tensor<T> SumLastAxis(const Tensor<T>& x) {
  if (x.rank() == 0) DimensionError("sum_last_axis: scalar input");
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  return GroupSum(x, std::move(shape), x.shape().back(), T{1}, "sum_last_axis");
}

template <typename T>
Tensor<T> MeanLastAxis(const Tensor<T>& x) {
  if (x.rank() == 0 || x.shape().back() == 0) DimensionError("mean_last_axis: empty trailing axis");
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  return GroupSum(x, std::move(shape), x.shape().back(), T{1} / static_cast<T>(x.shape().back()),
                  "mean_last_axis");
}

template <typename T>
Tensor<T> Reshape(const Tensor<T>& x, Shape shape) {
  Tensor<T> out = x.View(std::move(shape));
  if (Tape<T>* tape = RecordingTape({&x})) {
    Attach(out, tape);
    tape->Record([xn = x.node_ptr(), o = out.node_ptr()]() {
      if (o->grad.empty()) return;
      auto& dx = xn->GradBuffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += o->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> ConcatLastAxis(std::span<const Tensor<T>> parts) {
  if (parts.empty()) Fail(ErrorCategory::kContract, "concat: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) DimensionError("concat: scalar input");
  const Shape leading(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size() || !std::equal(leading.begin(), leading.end(), p.shape().begin())) {
      DimensionError("concat: leading extents differ: " + ShapeString(first) + " vs " +
                     ShapeString(p.shape()));
    }
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = NumElements(leading);
  Shape out_shape = leading;
  out_shape.push_back(total);
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(parts[k].data().data() + r * w, w, out.mutable_data().data() + r * total + offset);
    }
    offset += w;
  }
  Tape<T>* tape = Tape<T>::Active();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    Attach(out, tape);
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node_ptr());
    tape->Record([nodes = std::move(nodes), widths, o = out.node_ptr(), rows, total]() {
      if (o->grad.empty()) return;
      std::size_t offset = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const std::size_t w = widths[k];
        if (nodes[k]->requires_grad) {
          auto& d = nodes[k]->GradBuffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) d[r * w + j] += o->grad[r * total + offset + j];
          }
        }
        offset += w;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> GatherRows(const Tensor<T>& x, std::span<const std::size_t> index) {
  if (x.rank() < 2) DimensionError("gather_rows: input must have rank >= 2");
  const std::size_t f = x.shape().back(), n = x.size() / f;
  for (std::size_t i : index) {
    if (i >= n) DimensionError("gather_rows: index " + std::to_string(i) + " out of range");
  }
  Tensor<T> out(Shape{index.size(), f});
  for (std::size_t e = 0; e < index.size(); ++e) {
    std::copy_n(x.data().data() + index[e] * f, f, out.mutable_data().data() + e * f);
  }
  if (Tape<T>* tape = RecordingTape({&x})) {
    Attach(out, tape);
    tape->Record([xn = x.node_ptr(), o = out.node_ptr(), idx = std::vector<std::size_t>(index.begin(), index.end()), f]() {
      if (o->grad.empty()) return;
      auto& dx = xn->GradBuffer();
      for (std::size_t e = 0; e < idx.size(); ++e) {
        for (std::size_t j = 0; j < f; ++j) dx[idx[e] * f + j] += o->grad[e * f + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> SegmentSum(const Tensor<T>& x, std::span<const std::size_t> segment, std::size_t num_segments) {
  if (x.rank() < 2) DimensionError("segment_sum: input must have rank >= 2");
  const std::size_t f = x.shape().back(), e_count = x.size() / f;
  if (segment.size() != e_count) DimensionError("segment_sum: one segment id per row required");
  Tensor<T> out(Shape{num_segments, f});
  for (std::size_t e = 0; e < e_count; ++e) {
    if (segment[e] >= num_segments) DimensionError("segment_sum: segment id out of range");
    T* dst = out.mutable_data().data() + segment[e] * f;
    const T* src = x.data().data() + e * f;
    for (std::size_t j = 0; j < f; ++j) dst[j] += src[j];
  }
  CheckFinite(out, "segment_sum");
  if (Tape<T>* tape = RecordingTape({&x})) {
    Attach(out, tape);
    tape->Record([xn = x.node_ptr(), o = out.node_ptr(), seg = std::vector<std::size_t>(segment.begin(), segment.end()), f]() {
      if (o->grad.empty()) return;
      auto& dx = xn->GradBuffer();
      for (std::size_t e = 0; e < seg.size(); ++e) {
        for (std::size_t j = 0; j < f; ++j) dx[e * f + j] += o->grad[seg[e] * f + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> PairwiseNormReluSum(const Tensor<T>& source, const Tensor<T>& target, const Tensor<T>& gain,
                              const Tensor<T>& offset, std::size_t group) {
  RequireSameShape(source, target, "pairwise_norm_relu_sum");
  if (source.rank() != 2) DimensionError("pairwise_norm_relu_sum: inputs must be [N,F]");
  const std::size_t rows = source.dim(0), f = source.dim(1);
  if (group == 0 || rows % group != 0) DimensionError("pairwise_norm_relu_sum: N must be a multiple of the group size");
  if (f < 2) Fail(ErrorCategory::kContract, "pairwise_norm_relu_sum: degenerate input, feature extent must be >= 2");
  if (gain.shape() != Shape{f} || offset.shape() != Shape{f}) {
    DimensionError("pairwise_norm_relu_sum: gain/offset must be [" + std::to_string(f) + "]");
  }
  using Row = Eigen::Array<T, 1, Eigen::Dynamic>;
  const T eps = static_cast<T>(kLayerNormEpsilon);
  const T inv_f = T{1} / static_cast<T>(f);
  // Per edge (i, j): xhat = normalize(source_i + target_j), y = gain * xhat + offset.
  auto edge = [f, eps, inv_f](const T* src, const T* tgt, Row& xhat) {
    xhat = Eigen::Map<const Row>(src, f) + Eigen::Map<const Row>(tgt, f);
    const T mean = xhat.sum() * inv_f;
    xhat -= mean;
    const T inv = T{1} / std::sqrt(xhat.square().sum() * inv_f + eps);
    xhat *= inv;
    return inv;
  };
  Tensor<T> out(Shape{rows, f});
  {
    Row xhat(f);
    const Eigen::Map<const Row> g(gain.data().data(), f);
    const Eigen::Map<const Row> b(offset.data().data(), f);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t base = i - i % group;
      Eigen::Map<Row> acc(out.mutable_data().data() + i * f, f);
      for (std::size_t j = base; j < base + group; ++j) {
        if (j == i) continue;
        edge(source.data().data() + i * f, target.data().data() + j * f, xhat);
        acc += (g * xhat + b).max(T{0});
      }
    }
  }
  CheckFinite(out, "pairwise_norm_relu_sum");
  if (Tape<T>* tape = RecordingTape({&source, &target, &gain, &offset})) {
    Attach(out, tape);
    tape->Record([sn = source.node_ptr(), tn = target.node_ptr(), gn = gain.node_ptr(), on = offset.node_ptr(),
                  o = out.node_ptr(), rows, f, group, edge]() {
      if (o->grad.empty()) return;
      Row xhat(f), dy(f), dxhat(f);
      const Eigen::Map<const Row> g(gn->data.data(), f);
      const Eigen::Map<const Row> b(on->data.data(), f);
      const bool need_x = sn->requires_grad || tn->requires_grad;
      const T inv_f = T{1} / static_cast<T>(f);
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t base = i - i % group;
        const Eigen::Map<const Row> ds(o->grad.data() + i * f, f);
        for (std::size_t j = base; j < base + group; ++j) {
          if (j == i) continue;
          const T inv = edge(sn->data.data() + i * f, tn->data.data() + j * f, xhat);
          dy = ((g * xhat + b) > T{0}).select(ds, T{0});
          if (gn->requires_grad) Eigen::Map<Row>(gn->GradBuffer().data(), f) += dy * xhat;
          if (on->requires_grad) Eigen::Map<Row>(on->GradBuffer().data(), f) += dy;
          if (!need_x) continue;
          dxhat = dy * g;
          const T mean_d = dxhat.sum() * inv_f;
          const T mean_dx = (dxhat * xhat).sum() * inv_f;
          dxhat = inv * (dxhat - mean_d - xhat * mean_dx);
          if (sn->requires_grad) Eigen::Map<Row>(sn->GradBuffer().data() + i * f, f) += dxhat;
          if (tn->requires_grad) Eigen::Map<Row>(tn->GradBuffer().data() + j * f, f) += dxhat;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> MseLoss(const Tensor<T>& prediction, const Tensor<T>& target) {
  RequireSameShape(prediction, target, "mse_loss");
  if (prediction.size() == 0) Fail(ErrorCategory::kContract, "mse_loss: empty input");
  return Mean(Square(Sub(prediction, target.Detach())));
}

#define SLOTLAB_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> Conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                            std::size_t);                                                            \
  template Tensor<T> ConvTranspose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                     std::size_t, std::size_t);                                      \
  template Tensor<T> Linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> Linear(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> AddBias(const Tensor<T>&, const Tensor<T>&, T);                                 \
  template Tensor<T> Relu(const Tensor<T>&);                                                         \
  template Tensor<T> LeakyRelu(const Tensor<T>&, T);                                                 \
  template Tensor<T> Sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> LayerNorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> Add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> Sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> Mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> Scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> AddScalar(const Tensor<T>&, T);                                                 \
  template Tensor<T> Square(const Tensor<T>&);                                                       \
  template Tensor<T> Sum(const Tensor<T>&);                                                          \
  template Tensor<T> Mean(const Tensor<T>&);                                                         \
  template Tensor<T> SumLastAxis(const Tensor<T>&);                                                  \
  template Tensor<T> MeanLastAxis(const Tensor<T>&);                                                 \
  template Tensor<T> Reshape(const Tensor<T>&, Shape);                                               \
  template Tensor<T> ConcatLastAxis(std::span<const Tensor<T>>);                                     \
  template Tensor<T> GatherRows(const Tensor<T>&, std::span<const std::size_t>);                     \
  template Tensor<T> SegmentSum(const Tensor<T>&, std::span<const std::size_t>, std::size_t);        \
  template Tensor<T> PairwiseNormReluSum(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                         const Tensor<T>&, std::size_t);                             \
  template Tensor<T> MseLoss(const Tensor<T>&, const Tensor<T>&);

SLOTLAB_INSTANTIATE_OPS(float)
SLOTLAB_INSTANTIATE_OPS(double)

#undef SLOTLAB_INSTANTIATE_OPS

}  // namespace slotlab
