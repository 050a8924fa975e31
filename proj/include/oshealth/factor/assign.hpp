#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "oshealth/error.hpp"

namespace oshealth::factor {

struct Assignment {
  std::vector<std::vector<std::string>> factors;  // indicator names per factor, row order
  std::vector<std::string> dropped;
  std::vector<int> factor_of;  // per variable, -1 when dropped

  bool operator==(const Assignment&) const = default;
};

/// Each variable goes to the factor of its largest |loading| when that
/// strictly exceeds `cutoff`; ties go to the lower factor index.
inline Assignment assign_indicators(const Eigen::MatrixXd& loadings,
                                    const std::vector<std::string>& names, double cutoff) {
  if (!(cutoff > 0)) throw ArgumentError("cutoff must be positive");
  if (static_cast<Eigen::Index>(names.size()) != loadings.rows())
    throw ArgumentError("one name per loading row required");
  Assignment out;
  out.factors.resize(static_cast<size_t>(loadings.cols()));
  for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
    Eigen::Index best = -1;
    double best_abs = -1;
    for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
      double a = std::abs(loadings(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = j;
      }
    }
    if (best >= 0 && best_abs > cutoff) {
      out.factors[static_cast<size_t>(best)].push_back(names[static_cast<size_t>(i)]);
      out.factor_of.push_back(static_cast<int>(best));
    } else {
      out.dropped.push_back(names[static_cast<size_t>(i)]);
      out.factor_of.push_back(-1);
    }
  }
  return out;
}

/// Same partition of variables up to relabeling of factors.
inline bool same_structure(const Assignment& a, const Assignment& b) {
  if (a.dropped != b.dropped || a.factors.size() != b.factors.size()) return false;
  auto sorted = [](std::vector<std::vector<std::string>> f) {
    std::sort(f.begin(), f.end());
    return f;
  };
  return sorted(a.factors) == sorted(b.factors);
}

struct Alignment {
  Eigen::MatrixXd aligned;          // estimate columns permuted and sign-flipped
  std::vector<Eigen::Index> perm;   // aligned.col(j) = sign[j] * estimate.col(perm[j])
  std::vector<double> sign;
  double max_abs_error = 0;
};

/// Best match of `estimate` columns to `target` columns over permutations
/// and signs, minimizing the largest absolute loading difference.
inline Alignment align_to_target(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& target) {
  const Eigen::Index m = target.cols();
  if (estimate.rows() != target.rows() || estimate.cols() != m)
    throw ArgumentError("alignment needs matrices of equal shape");
  if (m > 8) throw ArgumentError("alignment limited to 8 factors");
  std::vector<Eigen::Index> perm(static_cast<size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  Alignment best;
  best.max_abs_error = std::numeric_limits<double>::infinity();
  do {
    Alignment cand;
    cand.perm = perm;
    cand.aligned.resize(target.rows(), m);
    cand.max_abs_error = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      Eigen::VectorXd col = estimate.col(perm[static_cast<size_t>(j)]);
      double ep = (col - target.col(j)).cwiseAbs().maxCoeff();
      double en = (-col - target.col(j)).cwiseAbs().maxCoeff();
      double sgn = en < ep ? -1.0 : 1.0;
      cand.sign.push_back(sgn);
      cand.aligned.col(j) = sgn * col;
      cand.max_abs_error = std::max(cand.max_abs_error, std::min(ep, en));
    }
    if (cand.max_abs_error < best.max_abs_error) best = std::move(cand);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Orthogonal Procrustes: the rotation T minimizing ||estimate T - target||_F.
inline Eigen::MatrixXd procrustes_rotation(const Eigen::MatrixXd& estimate,
                                           const Eigen::MatrixXd& target) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(estimate.transpose() * target,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace oshealth::factor
