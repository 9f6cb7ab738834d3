#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "inhibitor/tensor.hpp"

namespace testing_util {

inline inhibitor::Tensor2D normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                  double sigma = 1.0) {
  std::normal_distribution<double> dist(0.0, sigma);
  inhibitor::Tensor2D t(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

inline inhibitor::Tensor2D uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                   double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  inhibitor::Tensor2D t(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

}  // namespace testing_util
