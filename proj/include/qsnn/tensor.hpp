#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace qsnn {

using Real = double;

// Dimension list of a dense row-major tensor. Every dim is >= 1.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const;
  std::string to_string() const;

  bool operator==(const Shape&) const = default;

 private:
  std::vector<std::size_t> dims_;
};

class RealTensor {
 public:
  RealTensor() = default;
  explicit RealTensor(Shape shape, Real fill = 0.0);
  RealTensor(Shape shape, std::vector<Real> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  const std::vector<Real>& values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  // 2-D access, row-major.
  Real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  RealTensor reshaped(Shape shape) const;
  bool all_finite() const;

  bool operator==(const RealTensor&) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// Integer tensor with a declared logical bit-width. Storage is always 64-bit;
// the width only bounds the admissible values.
class IntTensor {
 public:
  IntTensor() = default;
  IntTensor(Shape shape, int bits, bool is_unsigned);
  IntTensor(Shape shape, std::vector<std::int64_t> data, int bits, bool is_unsigned);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  int bits() const { return bits_; }
  bool is_unsigned() const { return unsigned_; }
  std::int64_t min_value() const;
  std::int64_t max_value() const;

  std::span<std::int64_t> data() { return data_; }
  std::span<const std::int64_t> data() const { return data_; }
  const std::vector<std::int64_t>& values() const { return data_; }

  std::int64_t& operator[](std::size_t i) { return data_[i]; }
  std::int64_t operator[](std::size_t i) const { return data_[i]; }
  std::int64_t at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  // Throws RangeError naming the first index outside the declared range.
  void check_range() const;

  bool operator==(const IntTensor&) const = default;

 private:
  Shape shape_;
  std::vector<std::int64_t> data_;
  int bits_ = 64;
  bool unsigned_ = false;
};

// c[i][j] = sum_k a[i][k] * b[k][j], k accumulated left to right.
RealTensor matmul(const RealTensor& a, const RealTensor& b);

enum class ElementwiseOp { add, sub, mul };

RealTensor elementwise(ElementwiseOp op, const RealTensor& a, const RealTensor& b);
RealTensor elementwise(ElementwiseOp op, const RealTensor& a, Real scalar);
RealTensor scale(const RealTensor& a, Real factor);

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

std::size_t conv_output_size(std::size_t in, std::size_t kernel, const Conv2dGeometry& g);

// Direct sliding-window cross-correlation.
// input [c_in, h, w], kernels [c_out, c_in, kh, kw] -> [c_out, h_out, w_out].
RealTensor conv2d(const RealTensor& input, const RealTensor& kernels, const Conv2dGeometry& g);

// Unfolds one [c_in, h, w] image into columns [c_in*kh*kw, h_out*w_out].
RealTensor im2col(const RealTensor& input, std::size_t kh, std::size_t kw, const Conv2dGeometry& g);

namespace kernels {

// Raw row-major kernels shared by the network and trainer hot paths. All
// overwrite c. Accumulation over the inner index is left to right, and rows
// of c are independent, so results do not depend on the thread count.

// c[m x n] = a[m x k] * b[k x n]
void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a^T * b with a stored [k x m], b [k x n]
void gemm_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a * b^T with a [m x k], b stored [n x k]
void gemm_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);

void im2col(std::span<const Real> image, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const Conv2dGeometry& g, std::span<Real> cols);
// Adds columns back onto an (already zeroed) image; adjoint of im2col.
void col2im(std::span<const Real> cols, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const Conv2dGeometry& g, std::span<Real> image);

}  // namespace kernels

}  // namespace qsnn
