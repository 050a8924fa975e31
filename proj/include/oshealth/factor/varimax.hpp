#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <vector>

#include "oshealth/factor/efa.hpp"

namespace oshealth::factor {

/// Sum over columns of the variance of squared loadings.
inline double varimax_criterion(const Eigen::MatrixXd& loadings) {
  const double p = static_cast<double>(loadings.rows());
  double total = 0;
  for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
    Eigen::ArrayXd sq = loadings.col(j).array().square();
    double mean = sq.sum() / p;
    total += (sq.square().sum() / p) - mean * mean;
  }
  return total;
}

struct VarimaxOptions {
  bool kaiser_normalize = true;  // rotate row-normalized loadings
  double tol = 1e-8;
  int max_sweeps = 500;
};

struct VarimaxResult {
  Eigen::MatrixXd loadings;
  Eigen::MatrixXd rotation;  // loadings = input * rotation
  int sweeps = 0;
  bool converged = false;
};

/// Pairwise (Kaiser) sweep: each column pair is rotated by the closed-form
/// angle that maximizes the criterion for that pair.
inline VarimaxResult varimax(const Eigen::MatrixXd& input, const VarimaxOptions& opt = {}) {
  const Eigen::Index p = input.rows(), m = input.cols();
  VarimaxResult out;
  out.rotation = Eigen::MatrixXd::Identity(m, m);
  if (m < 2) {
    out.loadings = input;
    out.converged = true;
    return out;
  }
  Eigen::VectorXd norms = input.rowwise().norm();
  Eigen::MatrixXd work = input;
  if (opt.kaiser_normalize)
    for (Eigen::Index i = 0; i < p; ++i)
      if (norms(i) > 0) work.row(i) /= norms(i);

  const double dp = static_cast<double>(p);
  double crit = varimax_criterion(work);
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    for (Eigen::Index a = 0; a < m - 1; ++a)
      for (Eigen::Index b = a + 1; b < m; ++b) {
        Eigen::ArrayXd x = work.col(a).array(), y = work.col(b).array();
        Eigen::ArrayXd u = x.square() - y.square();
        Eigen::ArrayXd v = 2.0 * x * y;
        double A = u.sum(), B = v.sum();
        double C = (u.square() - v.square()).sum();
        double D = 2.0 * (u * v).sum();
        double phi = 0.25 * std::atan2(D - 2.0 * A * B / dp, C - (A * A - B * B) / dp);
        if (std::abs(phi) < 1e-15) continue;
        double c = std::cos(phi), s = std::sin(phi);
        Eigen::VectorXd na = c * work.col(a) + s * work.col(b);
        Eigen::VectorXd nb = -s * work.col(a) + c * work.col(b);
        work.col(a) = na;
        work.col(b) = nb;
        Eigen::VectorXd ra = c * out.rotation.col(a) + s * out.rotation.col(b);
        Eigen::VectorXd rb = -s * out.rotation.col(a) + c * out.rotation.col(b);
        out.rotation.col(a) = ra;
        out.rotation.col(b) = rb;
      }
    double next = varimax_criterion(work);
    out.sweeps = sweep;
    if (std::abs(next - crit) < opt.tol) {
      out.converged = true;
      break;
    }
    crit = next;
  }
  out.loadings = input * out.rotation;
  return out;
}

/// Flip each column so its largest-|loading| entry is positive, then order
/// columns by sum of squared loadings, largest first. Adjusts `rotation`
/// to match.
inline void canonicalize(Eigen::MatrixXd& loadings, Eigen::MatrixXd& rotation) {
  const Eigen::Index m = loadings.cols();
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index arg = 0;
    loadings.col(j).cwiseAbs().maxCoeff(&arg);
    if (loadings(arg, j) < 0) {
      loadings.col(j) *= -1;
      rotation.col(j) *= -1;
    }
  }
  Eigen::VectorXd ss = loadings.array().square().colwise().sum().transpose();
  std::vector<Eigen::Index> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ss(a) > ss(b); });
  Eigen::MatrixXd l2(loadings.rows(), m), r2(rotation.rows(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    l2.col(j) = loadings.col(order[static_cast<size_t>(j)]);
    r2.col(j) = rotation.col(order[static_cast<size_t>(j)]);
  }
  loadings = std::move(l2);
  rotation = std::move(r2);
}

/// Rotate a solution in place; communalities are unchanged.
inline FactorSolution rotate_varimax(FactorSolution s, const VarimaxOptions& opt = {}) {
  auto r = varimax(s.loadings, opt);
  s.loadings = r.loadings;
  s.rotation = s.rotation * r.rotation;
  canonicalize(s.loadings, s.rotation);
  refresh_derived(s);
  return s;
}

}  // namespace oshealth::factor
