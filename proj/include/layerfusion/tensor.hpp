#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace layerfusion {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // Leading dimension for rank-2 tensors; 1 for rank-1.
  std::size_t rows() const;
  // Trailing dimension.
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const { return data().subspan(r * cols(), cols()); }

  // Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_rank2(const Tensor& t, const char* what);

// Row-wise softmax, stabilized by subtracting each row's max.
Tensor softmax_rows(const Tensor& x);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);

// Numerically stable log(1 + exp(x)).
double softplus(double x);

double gelu(double x);
double gelu_grad(double x);

namespace kernels {

// out[r, c] += a[r, k] * b[k, c]
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t r, std::size_t k, std::size_t c);
// out[r, k] += a[r, c] * b[k, c]^T
void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t c, std::size_t k);
// out[k, c] += a[r, k]^T * b[r, c]
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

}  // namespace layerfusion
