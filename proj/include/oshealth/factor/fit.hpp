#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "oshealth/error.hpp"

namespace oshealth::factor {

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Discrepancy test plus incremental and absolute fit indices. Indices that
/// are undefined for a model (e.g. TLI with df = 0) hold NaN.
struct FitStatistics {
  double chi_square = 0;
  long df = 0;
  long n = 0;
  double f_min = 0;
  double null_chi_square = kUndefined;
  long null_df = 0;
  double tli = kUndefined;
  double rmsea = kUndefined;
  double cfi = kUndefined;
  double srmr = kUndefined;
  double bic = kUndefined;
};

struct TliRmsea {
  double tli = 0;
  double rmsea = 0;
};

/// RMSEA = sqrt(max(chi2 - df, 0) / (df (n - 1))).
inline double rmsea(double chi_square, long df, long n) {
  if (df <= 0) throw ArgumentError("RMSEA needs df > 0");
  if (n <= 1) throw ArgumentError("RMSEA needs n > 1");
  return std::sqrt(std::max(chi_square - static_cast<double>(df), 0.0) /
                   (static_cast<double>(df) * static_cast<double>(n - 1)));
}

/// TLI = (chi0/df0 - chi/df) / (chi0/df0 - 1).
inline double tli(double chi_square, long df, double null_chi_square, long null_df) {
  if (df <= 0 || null_df <= 0) throw ArgumentError("TLI needs df > 0 and null df > 0");
  double null_ratio = null_chi_square / static_cast<double>(null_df);
  if (null_ratio == 1.0) throw NumericError("TLI undefined: null model chi-square equals its df");
  return (null_ratio - chi_square / static_cast<double>(df)) / (null_ratio - 1.0);
}

/// CFI = 1 - max(chi2 - df, 0) / max(chi0 - df0, chi2 - df, 0); 1 when both are 0.
inline double cfi(double chi_square, long df, double null_chi_square, long null_df) {
  double d = std::max(chi_square - static_cast<double>(df), 0.0);
  double d0 = std::max({null_chi_square - static_cast<double>(null_df), d, 0.0});
  if (d0 == 0.0) return 1.0;
  return 1.0 - d / d0;
}

inline TliRmsea efa_fit_indices(double chi_square, long df, double null_chi_square, long null_df,
                                long n) {
  return {tli(chi_square, df, null_chi_square, null_df), rmsea(chi_square, df, n)};
}

/// Standardized root mean square residual over the lower triangle including
/// the diagonal, on the correlation metric of each matrix.
inline double srmr(const Eigen::MatrixXd& sample, const Eigen::MatrixXd& implied) {
  const Eigen::Index p = sample.rows();
  if (p == 0 || implied.rows() != p) throw ArgumentError("SRMR needs matching square matrices");
  double ss = 0;
  long count = 0;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      double s = sample(i, j) / std::sqrt(sample(i, i) * sample(j, j));
      double m = implied(i, j) / std::sqrt(implied(i, i) * implied(j, j));
      ss += (s - m) * (s - m);
      ++count;
    }
  return std::sqrt(ss / static_cast<double>(count));
}

/// Chi-square, TLI, RMSEA, CFI and SRMR in one record. BIC is left to the
/// caller because EFA and SEM use different penalties.
inline FitStatistics fit_indices(double chi_square, long df, double null_chi_square, long null_df,
                                 long n, const Eigen::MatrixXd& sample,
                                 const Eigen::MatrixXd& implied) {
  FitStatistics f;
  f.chi_square = chi_square;
  f.df = df;
  f.n = n;
  f.null_chi_square = null_chi_square;
  f.null_df = null_df;
  f.cfi = cfi(chi_square, df, null_chi_square, null_df);
  f.srmr = srmr(sample, implied);
  if (df > 0) {
    f.rmsea = rmsea(chi_square, df, n);
    f.tli = tli(chi_square, df, null_chi_square, null_df);
  } else {
    f.rmsea = 0.0;
  }
  return f;
}

inline nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline nlohmann::json to_json(const FitStatistics& f) {
  return {{"chi_square", number_or_null(f.chi_square)},
          {"df", f.df},
          {"n", f.n},
          {"f_min", number_or_null(f.f_min)},
          {"null_chi_square", number_or_null(f.null_chi_square)},
          {"null_df", f.null_df},
          {"tli", number_or_null(f.tli)},
          {"rmsea", number_or_null(f.rmsea)},
          {"cfi", number_or_null(f.cfi)},
          {"srmr", number_or_null(f.srmr)},
          {"bic", number_or_null(f.bic)}};
}

}  // namespace oshealth::factor
