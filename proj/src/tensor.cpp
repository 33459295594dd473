#include "layerfusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numbers>
#include <numeric>

#include "layerfusion/errors.hpp"

namespace layerfusion {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimension of size 0 in " + shape_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return 1;
  return size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected rank-2 tensor, got " + shape_string(t.shape()));
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() == 0 || x.cols() == 0) throw ShapeError("softmax_rows: empty row dimension");
  Tensor out(x.shape());
  const std::size_t c = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= sum;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = sigmoid(v);
  return out;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

namespace kernels {

namespace {

using v4 = double __attribute__((vector_size(32)));

inline v4 load4(const double* p) {
  v4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_add4(double* p, v4 v) {
  v4 o;
  std::memcpy(&o, p, sizeof o);
  o += v;
  std::memcpy(p, &o, sizeof o);
}

}  // namespace

// 4x8 register-blocked kernel; edges fall back to plain axpy loops.
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t r, std::size_t k, std::size_t c) {
  const double* A = a.data();
  const double* B = b.data();
  double* O = out.data();
  const std::size_t r_main = r - r % 4, c_main = c - c % 8;
  for (std::size_t i = 0; i < r_main; i += 4) {
    const double* a0 = A + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    for (std::size_t j = 0; j < c_main; j += 8) {
      v4 c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
      for (std::size_t p = 0; p < k; ++p) {
        const v4 b0 = load4(B + p * c + j);
        const v4 b1 = load4(B + p * c + j + 4);
        c00 += a0[p] * b0;
        c01 += a0[p] * b1;
        c10 += a1[p] * b0;
        c11 += a1[p] * b1;
        c20 += a2[p] * b0;
        c21 += a2[p] * b1;
        c30 += a3[p] * b0;
        c31 += a3[p] * b1;
      }
      store_add4(O + i * c + j, c00);
      store_add4(O + i * c + j + 4, c01);
      store_add4(O + (i + 1) * c + j, c10);
      store_add4(O + (i + 1) * c + j + 4, c11);
      store_add4(O + (i + 2) * c + j, c20);
      store_add4(O + (i + 2) * c + j + 4, c21);
      store_add4(O + (i + 3) * c + j, c30);
      store_add4(O + (i + 3) * c + j + 4, c31);
    }
    for (std::size_t u = 0; u < 4; ++u)
      for (std::size_t p = 0; p < k; ++p) {
        const double s = A[(i + u) * k + p];
        for (std::size_t j = c_main; j < c; ++j) O[(i + u) * c + j] += s * B[p * c + j];
      }
  }
  for (std::size_t i = r_main; i < r; ++i) {
    const double* ai = A + i * k;
    for (std::size_t j = 0; j < c_main; j += 8) {
      v4 c0{}, c1{};
      for (std::size_t p = 0; p < k; ++p) {
        c0 += ai[p] * load4(B + p * c + j);
        c1 += ai[p] * load4(B + p * c + j + 4);
      }
      store_add4(O + i * c + j, c0);
      store_add4(O + i * c + j + 4, c1);
    }
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = c_main; j < c; ++j) O[i * c + j] += ai[p] * B[p * c + j];
  }
}

// out[i, p] += dot(a_i, b_p); four rows of b share each pass over a_i.
void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t c, std::size_t k) {
  const double* A = a.data();
  const double* B = b.data();
  double* O = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* __restrict ai = A + i * c;
    double* oi = O + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double* __restrict b0 = B + p * c;
      const double* __restrict b1 = b0 + c;
      const double* __restrict b2 = b1 + c;
      const double* __restrict b3 = b2 + c;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (std::size_t j = 0; j < c; ++j) {
        const double x = ai[j];
        s0 += x * b0[j];
        s1 += x * b1[j];
        s2 += x * b2[j];
        s3 += x * b3[j];
      }
      oi[p] += s0;
      oi[p + 1] += s1;
      oi[p + 2] += s2;
      oi[p + 3] += s3;
    }
    for (; p < k; ++p) {
      const double* __restrict bp = B + p * c;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t j = 0; j < c; ++j) s += ai[j] * bp[j];
      oi[p] += s;
    }
  }
}

// Four rows of a and b are folded into each pass over an output row.
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c) {
  const double* A = a.data();
  const double* B = b.data();
  double* O = out.data();
  std::size_t i = 0;
  for (; i + 4 <= r; i += 4) {
    const double* __restrict b0 = B + i * c;
    const double* __restrict b1 = b0 + c;
    const double* __restrict b2 = b1 + c;
    const double* __restrict b3 = b2 + c;
    for (std::size_t p = 0; p < k; ++p) {
      const double s0 = A[i * k + p], s1 = A[(i + 1) * k + p], s2 = A[(i + 2) * k + p], s3 = A[(i + 3) * k + p];
      double* __restrict o = O + p * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += s0 * b0[j] + s1 * b1[j] + s2 * b2[j] + s3 * b3[j];
    }
  }
  for (; i < r; ++i) {
    const double* __restrict bi = B + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = A[i * k + p];
      double* __restrict o = O + p * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += s * bi[j];
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out({a.rows(), b.cols()});
  kernels::matmul_acc(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

}  // namespace layerfusion
