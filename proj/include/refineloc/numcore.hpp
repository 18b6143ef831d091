#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace refineloc {

/// Thrown when operand shapes do not conform. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v);
  std::string shape_str() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A trainable tensor with its gradient and Adam moment estimates.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  Param() = default;
  Param(std::string name, Matrix value);
};

void zero_grads(std::span<Param> params);

// out[t] = x[t] * w + b
Matrix affine_forward(const Matrix& x, const Param& w, const Param& b);
// Accumulates into w.grad and b.grad; returns dL/dx.
Matrix affine_backward(const Matrix& x, Param& w, Param& b, const Matrix& grad_out);

Matrix relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& grad_out);

/// Softmax over each row with max-subtraction.
Matrix softmax_rows(const Matrix& x);
/// Vector-Jacobian product given the softmax output.
Matrix softmax_rows_backward(const Matrix& out, const Matrix& grad_out);

std::vector<double> softmax_column(std::span<const double> x);
std::vector<double> softmax_column_backward(std::span<const double> out,
                                            std::span<const double> grad_out);

double sigmoid(double x);

inline constexpr double kLogClamp = 1e-12;

/// -sum_n y_n log(max(p_n, 1e-12)). Throws std::invalid_argument if y does not sum to 1.
double cross_entropy(std::span<const double> p, std::span<const double> y);
/// dCE/dp. Entries where p was clamped get zero gradient.
std::vector<double> cross_entropy_grad(std::span<const double> p, std::span<const double> y);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update in place. `step` is 1-based.
void adam_step(std::span<Param> params, double lr, std::int64_t step,
               const AdamOptions& opts = {});

}  // namespace refineloc
