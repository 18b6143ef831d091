#include "refineloc/numcore.hpp"

#include <algorithm>
#include <cmath>

namespace refineloc {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ShapeError("Matrix::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Param::Param(std::string n, Matrix v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.rows(), value.cols()),
      adam_m(value.rows(), value.cols()),
      adam_v(value.rows(), value.cols()) {}

void zero_grads(std::span<Param> params) {
  for (auto& p : params) p.grad.fill(0.0);
}

Matrix affine_forward(const Matrix& x, const Param& w, const Param& b) {
  const auto& W = w.value;
  const auto& B = b.value;
  if (x.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols()) {
    throw ShapeError("affine_forward: input " + x.shape_str() + " vs weight " + W.shape_str() +
                     " and bias " + B.shape_str());
  }
  Matrix out(x.rows(), W.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto o = out.row(t);
    std::copy(B.row(0).begin(), B.row(0).end(), o.begin());
    for (std::size_t i = 0; i < x.cols(); ++i) {
      const double xi = x(t, i);
      if (xi == 0.0) continue;
      auto wr = W.row(i);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += xi * wr[j];
    }
  }
  return out;
}

Matrix affine_backward(const Matrix& x, Param& w, Param& b, const Matrix& grad_out) {
  const auto& W = w.value;
  if (grad_out.rows() != x.rows() || grad_out.cols() != W.cols()) {
    throw ShapeError("affine_backward: grad " + grad_out.shape_str() + " vs output " +
                     std::to_string(x.rows()) + "x" + std::to_string(W.cols()));
  }
  Matrix grad_x(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto g = grad_out.row(t);
    auto bg = b.grad.row(0);
    for (std::size_t j = 0; j < g.size(); ++j) bg[j] += g[j];
    for (std::size_t i = 0; i < x.cols(); ++i) {
      const double xi = x(t, i);
      auto wg = w.grad.row(i);
      auto wr = W.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        wg[j] += xi * g[j];
        acc += wr[j] * g[j];
      }
      grad_x(t, i) = acc;
    }
  }
  return grad_x;
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (auto& v : out.data()) v = std::max(0.0, v);
  return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& grad_out) {
  if (x.rows() != grad_out.rows() || x.cols() != grad_out.cols()) {
    throw ShapeError("relu_backward: input " + x.shape_str() + " vs grad " + grad_out.shape_str());
  }
  Matrix g = grad_out;
  auto xs = x.data();
  auto gs = g.data();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (!(xs[i] > 0.0)) gs[i] = 0.0;
  }
  return g;
}

namespace {

void softmax_inplace(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (auto& e : v) {
    e = std::exp(e - mx);
    sum += e;
  }
  for (auto& e : v) e /= sum;
}

// (diag(s) - s s^T) g
void softmax_vjp(std::span<const double> s, std::span<const double> g, std::span<double> out) {
  double dot = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) dot += s[i] * g[i];
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] * (g[i] - dot);
}

}  // namespace

Matrix softmax_rows(const Matrix& x) {
  Matrix out = x;
  if (x.cols() == 0) return out;
  for (std::size_t t = 0; t < out.rows(); ++t) softmax_inplace(out.row(t));
  return out;
}

Matrix softmax_rows_backward(const Matrix& out, const Matrix& grad_out) {
  if (out.rows() != grad_out.rows() || out.cols() != grad_out.cols()) {
    throw ShapeError("softmax_rows_backward: output " + out.shape_str() + " vs grad " +
                     grad_out.shape_str());
  }
  Matrix g(out.rows(), out.cols());
  for (std::size_t t = 0; t < out.rows(); ++t) softmax_vjp(out.row(t), grad_out.row(t), g.row(t));
  return g;
}

std::vector<double> softmax_column(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  if (!out.empty()) softmax_inplace(out);
  return out;
}

std::vector<double> softmax_column_backward(std::span<const double> out,
                                            std::span<const double> grad_out) {
  if (out.size() != grad_out.size()) {
    throw ShapeError("softmax_column_backward: output length " + std::to_string(out.size()) +
                     " vs grad length " + std::to_string(grad_out.size()));
  }
  std::vector<double> g(out.size());
  softmax_vjp(out, grad_out, g);
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void check_distribution(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) {
    throw ShapeError("cross_entropy: prediction length " + std::to_string(p.size()) +
                     " vs target length " + std::to_string(y.size()));
  }
  double sum = 0.0;
  for (double v : y) {
    if (v < 0.0) throw std::invalid_argument("cross_entropy: negative target entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("cross_entropy: target sums to " + std::to_string(sum) +
                                ", expected 1");
  }
}

}  // namespace

double cross_entropy(std::span<const double> p, std::span<const double> y) {
  check_distribution(p, y);
  double loss = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    if (y[n] == 0.0) continue;
    loss -= y[n] * std::log(std::max(p[n], kLogClamp));
  }
  return loss;
}

std::vector<double> cross_entropy_grad(std::span<const double> p, std::span<const double> y) {
  check_distribution(p, y);
  std::vector<double> g(p.size(), 0.0);
  for (std::size_t n = 0; n < p.size(); ++n) {
    if (y[n] == 0.0 || p[n] < kLogClamp) continue;
    g[n] = -y[n] / p[n];
  }
  return g;
}

void adam_step(std::span<Param> params, double lr, std::int64_t step, const AdamOptions& opts) {
  if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
  for (auto& p : params) {
    auto v = p.value.data();
    auto g = p.grad.data();
    auto m1 = p.adam_m.data();
    auto m2 = p.adam_v.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m1[i] = opts.beta1 * m1[i] + (1.0 - opts.beta1) * g[i];
      m2[i] = opts.beta2 * m2[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double mhat = m1[i] / c1;
      const double vhat = m2[i] / c2;
      v[i] -= lr * mhat / (std::sqrt(vhat) + opts.eps);
    }
  }
}

}  // namespace refineloc
