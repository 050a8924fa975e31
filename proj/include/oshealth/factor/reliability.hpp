#pragma once

#include <Eigen/Dense>

#include "oshealth/error.hpp"

namespace oshealth::factor {

/// Cronbach's alpha over the columns of `items` (n x k), n-1 variances.
inline double cronbach_alpha(const Eigen::MatrixXd& items) {
  const Eigen::Index n = items.rows(), k = items.cols();
  if (k < 2) throw ArgumentError("alpha needs at least two items");
  if (n < 2) throw ArgumentError("alpha needs at least two observations");
  auto var = [n](const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().sum() / static_cast<double>(n - 1);
  };
  double item_var = 0;
  for (Eigen::Index j = 0; j < k; ++j) item_var += var(items.col(j));
  double total_var = var(items.rowwise().sum());
  if (total_var == 0) throw NumericError("alpha undefined: total score has zero variance");
  double dk = static_cast<double>(k);
  return dk / (dk - 1.0) * (1.0 - item_var / total_var);
}

/// Alpha from a covariance matrix of the items.
inline double cronbach_alpha_from_covariance(const Eigen::MatrixXd& cov) {
  const Eigen::Index k = cov.rows();
  if (k < 2) throw ArgumentError("alpha needs at least two items");
  double total = cov.sum();
  if (total == 0) throw NumericError("alpha undefined: total score has zero variance");
  double dk = static_cast<double>(k);
  return dk / (dk - 1.0) * (1.0 - cov.trace() / total);
}

/// omega = (sum lambda)^2 / ((sum lambda)^2 + sum psi); 0 when all loadings are 0.
inline double mcdonald_omega(const Eigen::VectorXd& loadings, const Eigen::VectorXd& uniquenesses) {
  if (loadings.size() != uniquenesses.size())
    throw ArgumentError("omega needs one uniqueness per loading");
  if ((uniquenesses.array() < 0).any()) throw ArgumentError("uniquenesses must be non-negative");
  double s = loadings.sum();
  double num = s * s;
  if (num == 0) return 0.0;
  return num / (num + uniquenesses.sum());
}

}  // namespace oshealth::factor
