#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "refineloc/numcore.hpp"
#include "test_util.hpp"

using namespace refineloc;
using testutil::central_diff;
using testutil::random_matrix;
using testutil::rel_err;

namespace {

Param make_param(const char* name, Matrix v) { return Param(name, std::move(v)); }

// Weighted sum with fixed random weights so every output entry matters.
double weighted(const Matrix& m, const Matrix& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * w.data()[i];
  return s;
}

}  // namespace

TEST_CASE("matrix construction and shape errors") {
  Matrix m(2, 3, 1.5);
  CHECK(m.size() == 6);
  CHECK(m(1, 2) == 1.5);
  CHECK(m.shape_str() == "2x3");
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), ShapeError);
  CHECK(Matrix::identity(2) == Matrix::from_rows({{1, 0}, {0, 1}}));
}

TEST_CASE("affine forward examples") {
  auto w = make_param("w", Matrix::identity(2));
  auto b = make_param("b", Matrix(1, 2));
  CHECK(affine_forward(Matrix::identity(2), w, b) == Matrix::identity(2));

  auto w2 = make_param("w", Matrix::from_rows({{1}, {1}}));
  auto b2 = make_param("b", Matrix::from_rows({{3}}));
  CHECK(affine_forward(Matrix::from_rows({{1, 2}}), w2, b2) == Matrix::from_rows({{6}}));
}

TEST_CASE("affine shape mismatch names both shapes") {
  auto w = make_param("w", Matrix(3, 2));
  auto b = make_param("b", Matrix(1, 2));
  try {
    affine_forward(Matrix(4, 2), w, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("4x2") != std::string::npos);
    CHECK(msg.find("3x2") != std::string::npos);
  }
}

TEST_CASE("affine backward matches finite differences") {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Matrix x = random_matrix(3, 4, rng);
    auto w = make_param("w", random_matrix(4, 5, rng));
    auto b = make_param("b", random_matrix(1, 5, rng));
    const Matrix up = random_matrix(3, 5, rng);
    auto f = [&] { return weighted(affine_forward(x, w, b), up); };

    zero_grads(std::span<Param>(&w, 1));
    zero_grads(std::span<Param>(&b, 1));
    const Matrix dx = affine_backward(x, w, b, up);
    for (std::size_t i = 0; i < w.value.size(); ++i) {
      CHECK(rel_err(w.grad.data()[i], central_diff(w.value.data()[i], f)) <= 1e-6);
    }
    for (std::size_t i = 0; i < b.value.size(); ++i) {
      CHECK(rel_err(b.grad.data()[i], central_diff(b.value.data()[i], f)) <= 1e-6);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(rel_err(dx.data()[i], central_diff(x.data()[i], f)) <= 1e-6);
    }
  }
}

TEST_CASE("relu forward and backward") {
  CHECK(relu_forward(Matrix::from_rows({{-1, 0, 2}})) == Matrix::from_rows({{0, 0, 2}}));
  const Matrix pos = Matrix::from_rows({{0, 1, 2.5}});
  CHECK(relu_forward(pos) == pos);

  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    Matrix x = random_matrix(4, 6, rng);
    const Matrix up = random_matrix(4, 6, rng);
    const Matrix dx = relu_backward(x, up);
    auto f = [&] { return weighted(relu_forward(x), up); };
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (std::abs(x.data()[i]) < 1e-6) continue;
      CHECK(rel_err(dx.data()[i], central_diff(x.data()[i], f)) <= 1e-6);
    }
  }
}

TEST_CASE("softmax rows examples and stability") {
  const Matrix s = softmax_rows(Matrix::from_rows({{0, 0}, {1000, 0}}));
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == doctest::Approx(0.5));
  CHECK(s(1, 0) == doctest::Approx(1.0));
  CHECK(s(1, 1) == doctest::Approx(0.0));
  CHECK(std::isfinite(s(1, 1)));
}

TEST_CASE("softmax rows invariants and gradient") {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(200 + seed);
    Matrix x = random_matrix(4, 3, rng);
    const Matrix out = softmax_rows(x);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double sum = 0.0;
      for (double v : out.row(r)) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
    const Matrix wide = softmax_rows(random_matrix(4, 3, rng, 10.0));
    for (double v : wide.data()) CHECK(std::isfinite(v));
    const Matrix up = random_matrix(4, 3, rng);
    const Matrix dx = softmax_rows_backward(out, up);
    auto f = [&] { return weighted(softmax_rows(x), up); };
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(rel_err(dx.data()[i], central_diff(x.data()[i], f)) <= 1e-6);
    }
  }
}

TEST_CASE("softmax column examples and gradient") {
  const auto u = softmax_column(std::vector<double>{3, 3, 3, 3});
  for (double v : u) CHECK(v == doctest::Approx(0.25));
  CHECK(softmax_column(std::vector<double>{-7.0}) == std::vector<double>{1.0});

  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(300 + seed);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<double> x(7), up(7);
    for (auto& v : x) v = g(rng);
    for (auto& v : up) v = g(rng);
    const auto out = softmax_column(x);
    CHECK(std::abs(std::accumulate(out.begin(), out.end(), 0.0) - 1.0) <= 1e-9);
    const auto dx = softmax_column_backward(out, up);
    auto f = [&] {
      const auto o = softmax_column(x);
      return std::inner_product(o.begin(), o.end(), up.begin(), 0.0);
    };
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(rel_err(dx[i], central_diff(x[i], f)) <= 1e-6);
  }
}

TEST_CASE("cross entropy examples") {
  const std::vector<double> onehot{0, 1, 0};
  CHECK(cross_entropy(onehot, onehot) == 0.0);
  const std::vector<double> uniform(4, 0.25);
  CHECK(cross_entropy(uniform, std::vector<double>{0, 0, 1, 0}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(uniform, std::vector<double>{0.5, 0.4, 0, 0}), std::invalid_argument);
  // Clamped entries contribute log(1e-12) and zero gradient.
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> y{0.0, 1.0};
  CHECK(cross_entropy(p, y) == doctest::Approx(-std::log(kLogClamp)));
  CHECK(cross_entropy_grad(p, y)[1] == 0.0);
}

TEST_CASE("cross entropy matches long-double summation oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 2 + trial % 9;
    std::vector<double> p(K), y(K);
    double sp = 0, sy = 0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = u(rng);
      y[k] = u(rng);
      sp += p[k];
      sy += y[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
      p[k] /= sp;
      y[k] /= sy;
    }
    long double oracle = 0;
    for (std::size_t k = 0; k < K; ++k) oracle -= static_cast<long double>(y[k]) * std::log(static_cast<long double>(p[k]));
    CHECK(std::abs(cross_entropy(p, y) - static_cast<double>(oracle)) <= 1e-12);

    const auto g = cross_entropy_grad(p, y);
    for (std::size_t k = 0; k < K; ++k) CHECK(g[k] == doctest::Approx(-y[k] / p[k]).epsilon(1e-12));
  }
}

TEST_CASE("zero_grads clears every entry") {
  std::mt19937_64 rng(1);
  std::vector<Param> ps{make_param("a", random_matrix(2, 3, rng)), make_param("b", random_matrix(1, 3, rng))};
  for (auto& p : ps) {
    CHECK(p.grad.rows() == p.value.rows());
    CHECK(p.grad.cols() == p.value.cols());
    p.grad.fill(3.0);
  }
  zero_grads(ps);
  for (const auto& p : ps) {
    for (double g : p.grad.data()) CHECK(g == 0.0);
  }
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::mt19937_64 rng(3);
    std::vector<Param> ps{make_param("w", random_matrix(3, 3, rng))};
    const Matrix before = ps[0].value;
    for (int t = 1; t <= 5; ++t) adam_step(ps, 0.1, t);
    CHECK(ps[0].value == before);
  }
  SUBCASE("first step moves by about lr") {
    std::vector<Param> ps{make_param("w", Matrix(1, 1, 2.0))};
    ps[0].grad(0, 0) = 1.0;
    adam_step(ps, 0.01, 1);
    CHECK(ps[0].value(0, 0) == doctest::Approx(2.0 - 0.01).epsilon(1e-7));
  }
  SUBCASE("descends on w^2") {
    std::vector<Param> ps{make_param("w", Matrix(1, 1, 1.0))};
    double prev = 1.0;
    for (int t = 1; t <= 10; ++t) {
      ps[0].grad(0, 0) = 2.0 * ps[0].value(0, 0);
      adam_step(ps, 0.1, t);
      const double now = std::abs(ps[0].value(0, 0));
      CHECK(now < prev);
      prev = now;
    }
  }
}
