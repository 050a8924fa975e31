#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oshealth/error.hpp"

namespace oshealth::factor {

inline std::string column_label(const std::vector<std::string>& names, Eigen::Index j) {
  if (static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
  return "column " + std::to_string(j);
}

/// Sample covariance (n - 1 denominator) of the columns of `data`.
inline Eigen::MatrixXd covariance_matrix(const Eigen::MatrixXd& data) {
  if (data.rows() < 2) throw ArgumentError("covariance needs at least two rows");
  Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);
}

/// Pearson correlation matrix. Constant columns are an error naming the column.
inline Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& data,
                                          const std::vector<std::string>& names = {}) {
  if (data.rows() < 2) throw ArgumentError("correlation needs at least two rows");
  if (!data.allFinite()) throw ArgumentError("correlation input contains absent or non-finite cells");
  Eigen::MatrixXd cov = covariance_matrix(data);
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    double scale = std::max(1.0, data.col(j).cwiseAbs().maxCoeff());
    if (!(sd(j) > 1e-12 * scale))
      throw ArgumentError("constant column '" + column_label(names, j) + "' has no variance");
  }
  Eigen::MatrixXd r = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  r = 0.5 * (r + r.transpose());
  r.diagonal().setOnes();
  return r;
}

inline Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& cov) {
  Eigen::VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd r = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  r.diagonal().setOnes();
  return r;
}

inline void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw ArgumentError(std::string(what) + " must be square");
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ArgumentError(std::string(what) + " must be symmetric");
}

/// Eigenvalues of a symmetric matrix, largest first.
inline Eigen::VectorXd eigenvalues(const Eigen::MatrixXd& r) {
  require_symmetric(r, "eigenvalue input");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

/// Squared multiple correlations, 1 - 1/diag(R^-1). Falls back to the largest
/// absolute off-diagonal correlation per row when R is singular.
inline Eigen::VectorXd squared_multiple_correlations(const Eigen::MatrixXd& r) {
  const Eigen::Index p = r.rows();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(r);
  bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
            ldlt.vectorD().minCoeff() > 1e-12 * ldlt.vectorD().maxCoeff();
  Eigen::VectorXd smc(p);
  if (ok) {
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    for (Eigen::Index i = 0; i < p; ++i) smc(i) = 1.0 - 1.0 / inv(i, i);
  } else {
    for (Eigen::Index i = 0; i < p; ++i) {
      double best = 0;
      for (Eigen::Index j = 0; j < p; ++j)
        if (j != i) best = std::max(best, std::abs(r(i, j)));
      smc(i) = best;
    }
  }
  return smc.cwiseMax(0.0).cwiseMin(1.0);
}

/// Largest-first eigenvalues of R with its diagonal replaced by SMCs.
inline Eigen::VectorXd reduced_eigenvalues(const Eigen::MatrixXd& r) {
  Eigen::MatrixXd reduced = r;
  reduced.diagonal() = squared_multiple_correlations(r);
  return eigenvalues(reduced);
}

/// log det of a symmetric positive definite matrix; nullopt-like NaN if not PD.
inline double log_det_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace oshealth::factor
