#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "refineloc/numcore.hpp"

namespace testutil {

inline refineloc::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  refineloc::Matrix m(r, c);
  for (auto& v : m.data()) v = g(rng);
  return m;
}

// |a-b| / max(|a|,|b|), with a floor so near-zero pairs are judged absolutely.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f at x[i].
inline double central_diff(double& xi, const std::function<double()>& f, double h = 1e-5) {
  const double saved = xi;
  xi = saved + h;
  const double fp = f();
  xi = saved - h;
  const double fm = f();
  xi = saved;
  return (fp - fm) / (2 * h);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("refineloc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
