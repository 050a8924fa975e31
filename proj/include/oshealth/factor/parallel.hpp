#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/factor/correlation.hpp"
#include "oshealth/util/random.hpp"

namespace oshealth::factor {

enum class EigenBasis { Full, Reduced };

inline const char* to_string(EigenBasis b) { return b == EigenBasis::Full ? "full" : "reduced"; }

inline EigenBasis eigen_basis_from_string(const std::string& s) {
  if (s == "full") return EigenBasis::Full;
  if (s == "reduced") return EigenBasis::Reduced;
  throw ArgumentError("unknown eigenvalue basis '" + s + "' (expected full or reduced)");
}

/// How observed eigenvalues are compared with the simulated reference.
///   Mean:     every rank whose observed value exceeds the simulated mean.
///   Quantile: leading run of ranks exceeding the simulated quantile.
enum class RetentionRule { Mean, Quantile };

struct ParallelOptions {
  int n_sims = 100;
  std::uint64_t seed = 1;
  EigenBasis basis = EigenBasis::Reduced;
  RetentionRule rule = RetentionRule::Quantile;
  double quantile = 0.95;
  unsigned threads = 1;
};

struct ParallelAnalysisResult {
  Eigen::VectorXd observed_eigenvalues;
  Eigen::VectorXd simulated_mean_eigenvalues;
  Eigen::VectorXd simulated_quantile_eigenvalues;
  double quantile = 0.95;
  EigenBasis basis = EigenBasis::Reduced;
  RetentionRule rule = RetentionRule::Quantile;
  int n_sims = 0;
  int suggested_factors = 0;
  int count_above_mean = 0;  // plain count against the mean, for reference
};

inline Eigen::VectorXd basis_eigenvalues(const Eigen::MatrixXd& r, EigenBasis basis) {
  return basis == EigenBasis::Full ? eigenvalues(r) : reduced_eigenvalues(r);
}

inline int count_above(const Eigen::VectorXd& observed, const Eigen::VectorXd& reference) {
  int k = 0;
  for (Eigen::Index i = 0; i < observed.size(); ++i) k += observed(i) > reference(i);
  return k;
}

inline int leading_run_above(const Eigen::VectorXd& observed, const Eigen::VectorXd& reference) {
  int k = 0;
  while (k < observed.size() && observed(k) > reference(k)) ++k;
  return k;
}

/// Type-7 quantile of an unsorted sample.
inline double sample_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  double h = (static_cast<double>(v.size()) - 1.0) * q;
  auto lo = static_cast<size_t>(std::floor(h));
  size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Eigenvalues of `n_sims` standard-normal datasets shaped n x p, one row per
/// simulation. Simulation k draws from its own derived seed, so the result
/// does not depend on the thread count.
inline Eigen::MatrixXd simulate_null_eigenvalues(Eigen::Index n, Eigen::Index p,
                                                 const ParallelOptions& opt) {
  Eigen::MatrixXd out(opt.n_sims, p);
  auto run = [&](int begin, int end) {
    for (int k = begin; k < end; ++k) {
      util::Rng rng(util::derive_seed(opt.seed, static_cast<std::uint64_t>(k)));
      Eigen::MatrixXd z = util::standard_normal(n, p, rng);
      Eigen::MatrixXd r = covariance_to_correlation(covariance_matrix(z));
      out.row(k) = basis_eigenvalues(r, opt.basis).transpose();
    }
  };
  unsigned threads = std::max(1u, std::min(opt.threads, static_cast<unsigned>(opt.n_sims)));
  if (threads == 1) {
    run(0, opt.n_sims);
  } else {
    std::vector<std::thread> pool;
    int chunk = (opt.n_sims + static_cast<int>(threads) - 1) / static_cast<int>(threads);
    for (unsigned t = 0; t < threads; ++t) {
      int b = static_cast<int>(t) * chunk, e = std::min(opt.n_sims, b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

inline ParallelAnalysisResult parallel_analysis_from_correlation(const Eigen::MatrixXd& r,
                                                                 Eigen::Index n,
                                                                 const ParallelOptions& opt = {}) {
  if (opt.n_sims < 1) throw ArgumentError("parallel analysis needs n_sims >= 1");
  if (!(opt.quantile > 0 && opt.quantile < 1)) throw ArgumentError("quantile must lie in (0,1)");
  if (n < 2) throw ArgumentError("parallel analysis needs n >= 2");
  const Eigen::Index p = r.rows();
  ParallelAnalysisResult res;
  res.basis = opt.basis;
  res.rule = opt.rule;
  res.quantile = opt.quantile;
  res.n_sims = opt.n_sims;
  res.observed_eigenvalues = basis_eigenvalues(r, opt.basis);
  Eigen::MatrixXd sims = simulate_null_eigenvalues(n, p, opt);
  res.simulated_mean_eigenvalues = sims.colwise().mean().transpose();
  res.simulated_quantile_eigenvalues.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col(sims.col(j).data(), sims.col(j).data() + sims.rows());
    res.simulated_quantile_eigenvalues(j) = sample_quantile(std::move(col), opt.quantile);
  }
  res.count_above_mean = count_above(res.observed_eigenvalues, res.simulated_mean_eigenvalues);
  res.suggested_factors =
      opt.rule == RetentionRule::Mean
          ? res.count_above_mean
          : leading_run_above(res.observed_eigenvalues, res.simulated_quantile_eigenvalues);
  return res;
}

/// Horn's parallel analysis on an n x p data matrix.
inline ParallelAnalysisResult parallel_analysis(const Eigen::MatrixXd& data,
                                                const ParallelOptions& opt = {}) {
  return parallel_analysis_from_correlation(correlation_matrix(data, {}), data.rows(), opt);
}

}  // namespace oshealth::factor
