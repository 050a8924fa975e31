#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

#include "oshealth/util/hash.hpp"

namespace oshealth::util {

using Rng = std::mt19937_64;

/// Seed for the k-th independent stream derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  return splitmix64(splitmix64(seed) ^ splitmix64(k + 0x632be59bd9b4e019ULL));
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = nd(rng);
  return z;
}

}  // namespace oshealth::util
