#include "qsnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsnn/error.hpp"
#include "qsnn/parallel.hpp"

namespace qsnn {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw ShapeError("shape must have at least one dimension");
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("shape " + to_string() + " has a zero dimension");
  }
}

std::size_t Shape::numel() const {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

RealTensor::RealTensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

RealTensor::RealTensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.to_string());
  }
}

RealTensor RealTensor::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  return RealTensor(std::move(shape), data_);
}

bool RealTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

IntTensor::IntTensor(Shape shape, int bits, bool is_unsigned)
    : IntTensor(shape, std::vector<std::int64_t>(shape.numel(), 0), bits, is_unsigned) {}

IntTensor::IntTensor(Shape shape, std::vector<std::int64_t> data, int bits, bool is_unsigned)
    : shape_(std::move(shape)), data_(std::move(data)), bits_(bits), unsigned_(is_unsigned) {
  if (bits_ < 1 || bits_ > 64 || (is_unsigned && bits_ > 63)) {
    throw ConfigError("unsupported integer bit-width " + std::to_string(bits_));
  }
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.to_string());
  }
}

std::int64_t IntTensor::min_value() const {
  if (unsigned_) return 0;
  if (bits_ == 64) return INT64_MIN;
  return -(std::int64_t{1} << (bits_ - 1));
}

std::int64_t IntTensor::max_value() const {
  if (unsigned_) return (std::int64_t{1} << bits_) - 1;
  if (bits_ == 64) return INT64_MAX;
  return (std::int64_t{1} << (bits_ - 1)) - 1;
}

void IntTensor::check_range() const {
  const std::int64_t lo = min_value();
  const std::int64_t hi = max_value();
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] < lo || data_[i] > hi) {
      throw RangeError("value " + std::to_string(data_[i]) + " at index " + std::to_string(i) +
                       " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "] for " +
                       std::to_string(bits_) + "-bit " + (unsigned_ ? "unsigned" : "signed") +
                       " tensor");
    }
  }
}

RealTensor matmul(const RealTensor& a, const RealTensor& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul dimension mismatch: " + a.shape().to_string() + " x " +
                     b.shape().to_string());
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  RealTensor c(Shape{m, n});
  kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

namespace {

Real apply(ElementwiseOp op, Real x, Real y) {
  switch (op) {
    case ElementwiseOp::add: return x + y;
    case ElementwiseOp::sub: return x - y;
    case ElementwiseOp::mul: return x * y;
  }
  return 0.0;
}

}  // namespace

RealTensor elementwise(ElementwiseOp op, const RealTensor& a, const RealTensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
  RealTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], b[i]);
  return out;
}

RealTensor elementwise(ElementwiseOp op, const RealTensor& a, Real scalar) {
  RealTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], scalar);
  return out;
}

RealTensor scale(const RealTensor& a, Real factor) { return elementwise(ElementwiseOp::mul, a, factor); }

std::size_t conv_output_size(std::size_t in, std::size_t kernel, const Conv2dGeometry& g) {
  if (g.stride == 0) throw ConfigError("conv stride must be >= 1");
  if (kernel > in + 2 * g.padding) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(in + 2 * g.padding));
  }
  return (in + 2 * g.padding - kernel) / g.stride + 1;
}

RealTensor conv2d(const RealTensor& input, const RealTensor& kernels, const Conv2dGeometry& g) {
  if (input.shape().rank() != 3 || kernels.shape().rank() != 4 ||
      kernels.shape()[1] != input.shape()[0]) {
    throw ShapeError("conv2d shape mismatch: input " + input.shape().to_string() + ", kernels " +
                     kernels.shape().to_string());
  }
  const std::size_t cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t cout = kernels.shape()[0], kh = kernels.shape()[2], kw = kernels.shape()[3];
  const std::size_t ho = conv_output_size(h, kh, g);
  const std::size_t wo = conv_output_size(w, kw, g);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);

  RealTensor out(Shape{cout, ho, wo});
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        Real acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += input[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] *
                     kernels[((co * cin + ci) * kh + ky) * kw + kx];
            }
          }
        }
        out[(co * ho + oy) * wo + ox] = acc;
      }
    }
  }
  return out;
}

RealTensor im2col(const RealTensor& input, std::size_t kh, std::size_t kw, const Conv2dGeometry& g) {
  if (input.shape().rank() != 3) throw ShapeError("im2col expects [c, h, w], got " + input.shape().to_string());
  const std::size_t c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t ho = conv_output_size(h, kh, g), wo = conv_output_size(w, kw, g);
  RealTensor cols(Shape{c * kh * kw, ho * wo});
  kernels::im2col(input.data(), c, h, w, kh, kw, g, cols.data());
  return cols;
}

namespace kernels {

namespace {

constexpr std::size_t kParallelWork = 1u << 16;

std::size_t rows_per_chunk(std::size_t k, std::size_t n) {
  const std::size_t per_row = std::max<std::size_t>(1, k * n);
  return std::max<std::size_t>(1, kParallelWork / per_row);
}

}  // namespace

void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, rows_per_chunk(k, n), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      Real* ci = c.data() + i * n;
      std::fill(ci, ci + n, 0.0);
      const Real* ai = a.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const Real aip = ai[p];
        // Skipping exact zeros leaves every sum bit-identical (x + 0 == x).
        if (aip == 0.0) continue;
        const Real* bp = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  });
}

void gemm_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, rows_per_chunk(k, n), [&](std::size_t r0, std::size_t r1) {
    std::fill(c.data() + r0 * n, c.data() + r1 * n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const Real* ap = a.data() + p * m;
      const Real* bp = b.data() + p * n;
      for (std::size_t i = r0; i < r1; ++i) {
        const Real api = ap[i];
        if (api == 0.0) continue;
        Real* ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
      }
    }
  });
}

void gemm_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  std::vector<Real> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(a, bt, c, m, k, n);
}

void im2col(std::span<const Real> image, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const Conv2dGeometry& g, std::span<Real> cols) {
  const std::size_t ho = conv_output_size(h, kh, g), wo = conv_output_size(w, kw, g);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        Real* row = cols.data() + ((ch * kh + ky) * kw + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            const bool inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                                ix < static_cast<std::ptrdiff_t>(w);
            row[oy * wo + ox] =
                inside ? image[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(std::span<const Real> cols, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const Conv2dGeometry& g, std::span<Real> image) {
  const std::size_t ho = conv_output_size(h, kh, g), wo = conv_output_size(w, kw, g);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const Real* row = cols.data() + ((ch * kh + ky) * kw + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            image[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace kernels

}  // namespace qsnn
