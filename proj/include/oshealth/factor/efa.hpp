#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/factor/correlation.hpp"
#include "oshealth/factor/fit.hpp"
#include "oshealth/optim.hpp"

namespace oshealth::factor {

enum class ExtractionMethod { ML, PrincipalAxis };

inline const char* to_string(ExtractionMethod m) {
  return m == ExtractionMethod::ML ? "ml" : "principal_axis";
}

struct VarianceTable {
  Eigen::VectorXd ss_loadings;
  Eigen::VectorXd cumulative_variance;
  Eigen::VectorXd proportion_explained;
};

/// Loadings and everything derived from them. `rotation` maps the unrotated
/// solution onto this one: loadings = unrotated * rotation.
struct FactorSolution {
  Eigen::MatrixXd loadings;       // p x m
  Eigen::VectorXd uniquenesses;   // p
  Eigen::MatrixXd rotation;       // m x m
  Eigen::VectorXd communalities;  // p
  VarianceTable variance;
  ExtractionMethod method = ExtractionMethod::ML;
  bool converged = false;
  int iterations = 0;
  std::vector<Eigen::Index> at_uniqueness_floor;  // ML only
};

/// ss_j = sum_i L_ij^2; cumulative_j = sum_{k<=j} ss_k / p; proportion_j = ss_j / sum ss.
inline VarianceTable variance_table(const Eigen::MatrixXd& loadings) {
  VarianceTable t;
  const double p = static_cast<double>(loadings.rows());
  t.ss_loadings = loadings.array().square().colwise().sum().transpose();
  t.cumulative_variance.resize(t.ss_loadings.size());
  double run = 0;
  for (Eigen::Index j = 0; j < t.ss_loadings.size(); ++j) {
    run += t.ss_loadings(j);
    t.cumulative_variance(j) = p > 0 ? run / p : 0.0;
  }
  double total = t.ss_loadings.sum();
  t.proportion_explained = total > 0 ? Eigen::VectorXd(t.ss_loadings / total)
                                     : Eigen::VectorXd::Zero(t.ss_loadings.size());
  return t;
}

inline void refresh_derived(FactorSolution& s) {
  s.communalities = s.loadings.array().square().rowwise().sum();
  s.variance = variance_table(s.loadings);
}

/// Degrees of freedom of an m-factor model on p variables.
inline long efa_degrees_of_freedom(long p, long m) {
  return ((p - m) * (p - m) - p - m) / 2;
}

/// Discrepancy log det S - log det R + tr(R S^-1) - p.
inline double ml_discrepancy(const Eigen::MatrixXd& r, const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  double ld_sigma = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double ld_r = log_det_spd(r);
  double tr = llt.solve(r).trace();
  return ld_sigma - ld_r + tr - static_cast<double>(r.rows());
}

/// Chi-square of the independence model with the same small-sample
/// correction as the fitted model (m = 0).
inline double efa_null_chi_square(const Eigen::MatrixXd& r, long n) {
  const double p = static_cast<double>(r.rows());
  double ld = log_det_spd(r);
  if (!std::isfinite(ld)) throw NumericError("correlation matrix is not positive definite");
  return (static_cast<double>(n) - 1.0 - (2.0 * p + 5.0) / 6.0) * (-ld);
}

struct EfaOptions {
  double uniqueness_floor = 0.005;
  optim::MinimizeOptions optimizer{.max_iterations = 5000, .f_tol = 1e-9, .g_tol = 1e-10,
                                   .g_loose = 1e-8};
};

struct EfaResult {
  FactorSolution solution;
  FitStatistics fit;
};

namespace detail {

struct ProfiledLoadings {
  double f = 0;
  Eigen::MatrixXd loadings;
};

// For fixed uniquenesses the ML loadings come from the top eigenpairs of
// Psi^-1/2 R Psi^-1/2, and F reduces to a function of the remaining eigenvalues.
inline ProfiledLoadings profile(const Eigen::MatrixXd& r, const Eigen::VectorXd& psi, Eigen::Index m) {
  const Eigen::Index p = r.rows();
  Eigen::VectorXd inv_sqrt = psi.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd scaled = inv_sqrt.asDiagonal() * r * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
  ProfiledLoadings out;
  out.f = 0;
  for (Eigen::Index k = 0; k < p - m; ++k) out.f += ev(k) - std::log(ev(k));
  out.f -= static_cast<double>(p - m);
  out.loadings.resize(p, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index k = p - 1 - j;
    double scale = std::sqrt(std::max(ev(k) - 1.0, 0.0));
    out.loadings.col(j) = psi.cwiseSqrt().asDiagonal() * es.eigenvectors().col(k) * scale;
  }
  return out;
}

}  // namespace detail

/// Maximum-likelihood factor extraction on a correlation matrix.
///
/// Uniquenesses are optimized as psi = floor + exp(x) with BFGS on x; the
/// loadings are profiled out at every step. Returns the unrotated solution
/// with chi-square (Bartlett-corrected), TLI, RMSEA, CFI, SRMR and BIC.
inline EfaResult efa_ml(const Eigen::MatrixXd& r, long n, long m, const EfaOptions& opt = {}) {
  require_symmetric(r, "correlation matrix");
  const long p = static_cast<long>(r.rows());
  if (m < 1) throw IdentificationError("need at least one factor");
  const long df = efa_degrees_of_freedom(p, m);
  if (df < 0)
    throw IdentificationError(std::to_string(m) + " factors are not identified with " +
                              std::to_string(p) + " variables (df = " + std::to_string(df) + ")");
  if (!std::isfinite(log_det_spd(r))) throw NumericError("correlation matrix is not positive definite");

  const double floor = opt.uniqueness_floor;
  Eigen::VectorXd start = squared_multiple_correlations(r);
  Eigen::VectorXd x0(p);
  for (long i = 0; i < p; ++i) {
    double psi0 = std::max((1.0 - 0.5 * static_cast<double>(m) / static_cast<double>(p)) *
                               (1.0 - start(i)),
                           floor + 1e-3);
    if (start(i) >= 1.0) psi0 = floor + 1e-3;
    x0(i) = std::log(psi0 - floor);
  }

  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Eigen::VectorXd e = x.array().exp();
    Eigen::VectorXd psi = e.array() + floor;
    auto prof = detail::profile(r, psi, m);
    Eigen::VectorXd resid_diag =
        prof.loadings.array().square().rowwise().sum().matrix() + psi - r.diagonal();
    g = (resid_diag.array() / psi.array().square() * e.array()).matrix();
    return prof.f;
  };
  auto res = optim::minimize_bfgs(objective, x0, opt.optimizer);

  EfaResult out;
  Eigen::VectorXd psi = res.x.array().exp() + floor;
  auto prof = detail::profile(r, psi, m);
  FactorSolution& s = out.solution;
  s.loadings = prof.loadings;
  s.uniquenesses = psi;
  s.rotation = Eigen::MatrixXd::Identity(m, m);
  s.method = ExtractionMethod::ML;
  s.converged = res.converged;
  s.iterations = res.iterations;
  for (long i = 0; i < p; ++i)
    if (psi(i) < floor * 1.001) s.at_uniqueness_floor.push_back(i);
  refresh_derived(s);

  Eigen::MatrixXd sigma = s.loadings * s.loadings.transpose();
  sigma += psi.asDiagonal();
  FitStatistics& f = out.fit;
  f.f_min = std::max(prof.f, 0.0);
  f.n = n;
  f.df = df;
  const double dp = static_cast<double>(p), dm = static_cast<double>(m);
  f.chi_square = (static_cast<double>(n) - 1.0 - (2.0 * dp + 5.0) / 6.0 - 2.0 * dm / 3.0) * f.f_min;
  f.null_chi_square = efa_null_chi_square(r, n);
  f.null_df = p * (p - 1) / 2;
  f.cfi = cfi(f.chi_square, df, f.null_chi_square, f.null_df);
  f.srmr = srmr(r, sigma);
  f.bic = f.chi_square - static_cast<double>(df) * std::log(static_cast<double>(n));
  if (df > 0) {
    f.rmsea = rmsea(f.chi_square, df, n);
    f.tli = tli(f.chi_square, df, f.null_chi_square, f.null_df);
  } else {
    f.rmsea = 0.0;
  }
  return out;
}

/// Iterated principal-axis factoring, SMC starting communalities.
inline FactorSolution efa_principal_axis(const Eigen::MatrixXd& r, long m, int max_iter = 1000,
                                         double tol = 1e-9) {
  require_symmetric(r, "correlation matrix");
  const long p = static_cast<long>(r.rows());
  if (m < 1 || m > p) throw IdentificationError("factor count must lie in [1, p]");
  Eigen::VectorXd h2 = squared_multiple_correlations(r);
  FactorSolution s;
  s.method = ExtractionMethod::PrincipalAxis;
  s.rotation = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd loadings(p, m);
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::MatrixXd reduced = r;
    reduced.diagonal() = h2;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
    for (long j = 0; j < m; ++j) {
      long k = p - 1 - j;
      loadings.col(j) = es.eigenvectors().col(k) * std::sqrt(std::max(es.eigenvalues()(k), 0.0));
    }
    Eigen::VectorXd next = loadings.array().square().rowwise().sum();
    double change = (next - h2).cwiseAbs().maxCoeff();
    h2 = next;
    s.iterations = it;
    if (change < tol) {
      s.converged = true;
      break;
    }
  }
  s.loadings = loadings;
  s.uniquenesses = Eigen::VectorXd::Ones(p) - h2;
  refresh_derived(s);
  return s;
}

}  // namespace oshealth::factor
