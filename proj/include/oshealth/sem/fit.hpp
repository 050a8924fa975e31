#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/factor/correlation.hpp"
#include "oshealth/factor/fit.hpp"
#include "oshealth/optim.hpp"
#include "oshealth/sem/ram.hpp"

namespace oshealth::sem {

using factor::FitStatistics;

/// Sample covariance with variable names and sample size.
struct SampleMoments {
  Eigen::MatrixXd cov;
  std::vector<std::string> names;
  long n = 0;
};

/// Reorders `sample` to the model's observed variables. Errors name the
/// first indicator missing from the data.
inline Eigen::MatrixXd select_observed(const RamModel& ram, const SampleMoments& sample) {
  if (sample.cov.rows() != sample.cov.cols() ||
      sample.cov.rows() != static_cast<Eigen::Index>(sample.names.size()))
    throw ArgumentError("sample covariance and names disagree in size");
  std::vector<Eigen::Index> idx;
  for (const auto& v : ram.observed()) {
    auto it = std::find(sample.names.begin(), sample.names.end(), v);
    if (it == sample.names.end()) throw ArgumentError("indicator '" + v + "' is absent from the data");
    idx.push_back(it - sample.names.begin());
  }
  const Eigen::Index p = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd s(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) s(i, j) = sample.cov(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  return s;
}

/// F_ML = log det Sigma + tr(S Sigma^-1) - log det S - p, with the analytic
/// gradient over the free parameters when `grad` is non-null. Returns +inf
/// where Sigma is not positive definite or I - A is singular.
inline double ml_objective(const RamModel& ram, const Eigen::MatrixXd& s, double log_det_s,
                           const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
  const Eigen::Index p = ram.n_observed();
  Eigen::MatrixXd a, sm;
  ram.matrices(x, a, sm);
  const Eigen::Index v = a.rows();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(v, v) - a);
  if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
  Eigen::MatrixXd b = lu.inverse();
  Eigen::MatrixXd fb = b.topRows(p);
  Eigen::MatrixXd sigma = fb * sm * fb.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  Eigen::MatrixXd l = llt.matrixL();
  double ld = 2.0 * l.diagonal().array().log().sum();
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  double f = ld + (s * inv).trace() - log_det_s - static_cast<double>(p);
  if (grad) {
    Eigen::MatrixXd w = inv - inv * s * inv;
    Eigen::MatrixXd c = fb.transpose() * w * fb;        // v x v
    Eigen::MatrixXd bsc = b * sm * c;                   // B S B' F' W F B
    grad->resize(ram.n_free());
    const auto& params = ram.parameters();
    for (Eigen::Index k = 0; k < ram.n_free(); ++k) {
      const auto& q = params[ram.free_indices()[static_cast<size_t>(k)]];
      if (q.in_a()) {
        (*grad)(k) = 2.0 * bsc(q.col, q.row);
      } else if (q.row == q.col) {
        (*grad)(k) = c(q.row, q.row);
      } else {
        (*grad)(k) = 2.0 * c(q.row, q.col);
      }
    }
  }
  return f;
}

/// Central-difference gradient of ml_objective, for checking.
inline Eigen::VectorXd ml_numeric_gradient(const RamModel& ram, const Eigen::MatrixXd& s,
                                           double log_det_s, const Eigen::VectorXd& x,
                                           double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd up = x, dn = x;
    up(k) += h;
    dn(k) -= h;
    g(k) = (ml_objective(ram, s, log_det_s, up, nullptr) -
            ml_objective(ram, s, log_det_s, dn, nullptr)) / (2.0 * h);
  }
  return g;
}

/// Sigma and its derivative with respect to every free parameter.
struct ImpliedDerivatives {
  Eigen::MatrixXd sigma;
  std::vector<Eigen::MatrixXd> d;
};

inline bool implied_with_derivatives(const RamModel& ram, const Eigen::VectorXd& x,
                                     ImpliedDerivatives& out) {
  const Eigen::Index p = ram.n_observed();
  Eigen::MatrixXd a, sm;
  ram.matrices(x, a, sm);
  const Eigen::Index v = a.rows();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(v, v) - a);
  if (!lu.isInvertible()) return false;
  Eigen::MatrixXd b = lu.inverse();
  Eigen::MatrixXd u = b.topRows(p);               // column i: effect of variable i on observed
  Eigen::MatrixXd m = b * sm * u.transpose();     // v x p, row j: cov of variable j with observed
  out.sigma = u * sm * u.transpose();
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
  out.d.resize(static_cast<size_t>(ram.n_free()));
  const auto& params = ram.parameters();
  for (Eigen::Index k = 0; k < ram.n_free(); ++k) {
    const auto& q = params[ram.free_indices()[static_cast<size_t>(k)]];
    Eigen::MatrixXd& dk = out.d[static_cast<size_t>(k)];
    if (q.in_a()) {
      dk = u.col(q.row) * m.row(q.col);
      dk += dk.transpose().eval();
    } else if (q.row == q.col) {
      dk = u.col(q.row) * u.col(q.row).transpose();
    } else {
      dk = u.col(q.row) * u.col(q.col).transpose();
      dk += dk.transpose().eval();
    }
  }
  return true;
}

/// Fisher scoring on F_ML: step -J^-1 g with J_ij = tr(Sigma^-1 D_i Sigma^-1 D_j) / 2,
/// backtracking until F decreases. Levenberg damping when J is near singular.
inline optim::MinimizeResult fisher_scoring(const RamModel& ram, const Eigen::MatrixXd& s,
                                            double log_det_s, Eigen::VectorXd x,
                                            const optim::MinimizeOptions& opt) {
  optim::MinimizeResult r;
  const Eigen::Index p = ram.n_observed(), q = ram.n_free();
  ImpliedDerivatives imp;
  r.x = x;
  r.f = ml_objective(ram, s, log_det_s, x, nullptr);
  if (!std::isfinite(r.f)) {
    r.message = "objective not finite at the start point";
    return r;
  }
  double lambda = 0;
  for (r.iterations = 0; r.iterations < opt.max_iterations; ++r.iterations) {
    if (!implied_with_derivatives(ram, r.x, imp)) {
      r.message = "structural singularity";
      return r;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(imp.sigma);
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd w = inv - inv * s * inv;
    std::vector<Eigen::MatrixXd> id(static_cast<size_t>(q));
    Eigen::VectorXd g(q);
    for (Eigen::Index k = 0; k < q; ++k) {
      g(k) = (w * imp.d[static_cast<size_t>(k)]).trace();
      id[static_cast<size_t>(k)] = inv * imp.d[static_cast<size_t>(k)];
    }
    r.gradient = g;
    if (q == 0 || g.cwiseAbs().maxCoeff() <= opt.g_tol) {
      r.converged = true;
      r.message = "gradient below tolerance";
      return r;
    }
    Eigen::MatrixXd j(q, q);
    for (Eigen::Index a = 0; a < q; ++a)
      for (Eigen::Index b = 0; b <= a; ++b)
        j(a, b) = j(b, a) = 0.5 * (id[static_cast<size_t>(a)].cwiseProduct(id[static_cast<size_t>(b)].transpose())).sum();
    bool accepted = false;
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      Eigen::MatrixXd jd = j;
      jd.diagonal().array() += lambda * j.diagonal().array().max(1e-12);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(jd);
      Eigen::VectorXd dir = -ldlt.solve(g);
      if (ldlt.info() != Eigen::Success || !dir.allFinite() || !(g.dot(dir) < 0)) {
        lambda = lambda == 0 ? 1e-4 : lambda * 10;
        continue;
      }
      double step = 1.0;
      for (int k = 0; k < 40; ++k) {
        Eigen::VectorXd xn = r.x + step * dir;
        double fn = ml_objective(ram, s, log_det_s, xn, nullptr);
        if (std::isfinite(fn) && fn <= r.f + 1e-4 * step * g.dot(dir)) {
          double df = r.f - fn;
          r.x = xn;
          r.f = fn;
          accepted = true;
          lambda = step == 1.0 ? lambda * 0.1 : lambda;
          if (lambda < 1e-8) lambda = 0;
          if (df <= opt.f_tol && g.cwiseAbs().maxCoeff() <= opt.g_loose) {
            ml_objective(ram, s, log_det_s, r.x, &r.gradient);
            r.converged = true;
            r.message = "objective change below tolerance";
            ++r.iterations;
            return r;
          }
          break;
        }
        step *= std::isfinite(fn) ? 0.5 : 0.1;
      }
      if (!accepted) lambda = lambda == 0 ? 1e-4 : lambda * 10;
    }
    if (!accepted) {
      r.converged = g.cwiseAbs().maxCoeff() <= opt.g_loose;
      r.message = r.converged ? "line search stalled near a stationary point" : "line search failed";
      return r;
    }
  }
  r.message = "iteration limit reached";
  return r;
}

struct Estimate {
  Parameter param;
  double value = 0;
  double se = factor::kUndefined;
  double z = factor::kUndefined;
  double p = factor::kUndefined;
  double standardized = factor::kUndefined;
};

struct SemFit {
  std::vector<Estimate> estimates;  // every parameter, fixed ones included
  std::vector<std::string> observed;
  Eigen::MatrixXd sample_covariance;
  Eigen::MatrixXd implied_covariance;
  FitStatistics fit;
  std::vector<std::string> heywood;
  bool converged = false;
  int iterations = 0;
  double max_gradient = 0;
  std::string message;

  const Estimate& estimate(const std::string& name) const {
    for (const auto& e : estimates)
      if (e.param.name() == name) return e;
    throw ArgumentError("no parameter named '" + name + "'");
  }
};

struct SemFitOptions {
  std::map<std::string, double> start;  // overrides by parameter name
  double start_loading = 0.7;
  optim::MinimizeOptions optimizer{.max_iterations = 500, .f_tol = 1e-14, .g_tol = 1e-10,
                                   .g_loose = 1e-6};
  bool standard_errors = true;
  double se_step = 1e-5;
};

/// Loadings 0.7, paths and covariances 0, error variances half the sample
/// variance, latent variances half the variance of the scaling indicator.
inline Eigen::VectorXd start_values(RamModel& ram, const Eigen::MatrixXd& s,
                                    const SemFitOptions& opt) {
  auto& params = ram.parameters();
  const Eigen::Index p = ram.n_observed();
  for (auto i : ram.free_indices()) {
    auto& q = params[i];
    switch (q.kind) {
      case ParamKind::Loading: q.value = opt.start_loading; break;
      case ParamKind::Regression: q.value = 0.0; break;
      case ParamKind::Covariance: q.value = 0.0; break;
      case ParamKind::Variance:
        if (q.row < p) {
          q.value = 0.5 * s(q.row, q.row);
        } else {
          double scale = 1.0;
          for (const auto& l : params)
            if (l.kind == ParamKind::Loading && l.lhs == q.lhs && !l.free && l.value != 0) {
              scale = s(l.row, l.row) / (l.value * l.value);
              break;
            }
          q.value = 0.5 * scale;
        }
        break;
    }
    auto it = opt.start.find(q.name());
    if (it != opt.start.end()) q.value = it->second;
  }
  return ram.free_values();
}

/// Chi-square of the independence model, (n - 1)(sum log s_ii - log det S).
inline double null_chi_square(const Eigen::MatrixXd& s, long n) {
  double ld = factor::log_det_spd(s);
  if (!std::isfinite(ld)) throw ArgumentError("sample covariance is not positive definite");
  return static_cast<double>(n - 1) * (s.diagonal().array().log().sum() - ld);
}

/// Standardized value of every parameter using model-implied standard
/// deviations of all variables (observed and latent).
inline std::vector<double> standardize(const RamModel& ram) {
  Eigen::MatrixXd a, sm;
  ram.matrices(ram.free_values(), a, sm);
  Eigen::MatrixXd v = variable_covariance(a, sm);
  const auto& vars = ram.variables();
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    if (!(v(i, i) > 0))
      throw NumericError("implied variance of '" + vars[static_cast<size_t>(i)] + "' is not positive");
  std::vector<double> out;
  for (const auto& q : ram.parameters()) {
    if (q.in_a())
      out.push_back(q.value * std::sqrt(v(q.col, q.col)) / std::sqrt(v(q.row, q.row)));
    else if (q.row == q.col)
      out.push_back(q.value / v(q.row, q.row));
    else
      out.push_back(q.value / std::sqrt(v(q.row, q.row) * v(q.col, q.col)));
  }
  return out;
}

inline std::vector<double> standardize(const SemFit& fit, const SemModel& model) {
  RamModel ram(model);
  auto& params = ram.parameters();
  for (size_t k = 0; k < params.size(); ++k) params[k].value = fit.estimates.at(k).value;
  return standardize(ram);
}

/// Every variance estimate below zero. No tolerance window.
inline std::vector<std::string> detect_heywood(const SemFit& fit) {
  std::vector<std::string> out;
  for (const auto& e : fit.estimates)
    if (e.param.is_variance() && e.value < 0) out.push_back(e.param.name());
  return out;
}

/// Maximum-likelihood fit of `model` to a sample covariance.
inline SemFit fit_ml(const SemModel& model, const SampleMoments& sample,
                     const SemFitOptions& opt = {}) {
  RamModel ram(model);
  const long df = ram.degrees_of_freedom();
  if (df < 0)
    throw IdentificationError("model is not identified: " + std::to_string(ram.n_free()) +
                              " free parameters for " +
                              std::to_string(ram.n_observed() * (ram.n_observed() + 1) / 2) +
                              " moments (df = " + std::to_string(df) + ")");
  if (sample.n < 2) throw ArgumentError("sample size must be at least 2");
  Eigen::MatrixXd s = select_observed(ram, sample);
  double log_det_s = factor::log_det_spd(s);
  if (!std::isfinite(log_det_s)) throw ArgumentError("sample covariance is not positive definite");

  Eigen::VectorXd x0 = start_values(ram, s, opt);
  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return ml_objective(ram, s, log_det_s, x, &g);
  };
  auto res = fisher_scoring(ram, s, log_det_s, x0, opt.optimizer);
  if (!res.converged) {
    auto polish = optim::minimize_bfgs(objective, res.x, opt.optimizer);
    if (polish.f <= res.f) {
      polish.iterations += res.iterations;
      res = std::move(polish);
    }
  }
  ram.set_free_values(res.x);

  SemFit fit;
  fit.observed = ram.observed();
  fit.sample_covariance = s;
  fit.implied_covariance = implied_covariance(ram, res.x);
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  fit.max_gradient = res.gradient.size() ? res.gradient.cwiseAbs().maxCoeff() : 0.0;
  fit.message = res.message;

  const long n = sample.n;
  const long p = static_cast<long>(ram.n_observed());
  double f_min = std::max(res.f, 0.0);
  double chi = static_cast<double>(n - 1) * f_min;
  fit.fit = factor::fit_indices(chi, df, null_chi_square(s, n), p * (p - 1) / 2, n, s,
                                fit.implied_covariance);
  fit.fit.f_min = f_min;
  fit.fit.bic = chi - static_cast<double>(df) * std::log(static_cast<double>(n));

  // Expected information (n-1)/2 tr(Sigma^-1 D_i Sigma^-1 D_j), D by central differences.
  const Eigen::Index q = ram.n_free();
  Eigen::VectorXd se = Eigen::VectorXd::Constant(q, factor::kUndefined);
  if (opt.standard_errors && q > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(fit.implied_covariance);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
      std::vector<Eigen::MatrixXd> d(static_cast<size_t>(q));
      bool ok = true;
      for (Eigen::Index k = 0; k < q && ok; ++k) {
        Eigen::VectorXd up = res.x, dn = res.x;
        up(k) += opt.se_step;
        dn(k) -= opt.se_step;
        try {
          d[static_cast<size_t>(k)] = inv * (implied_covariance(ram, up) - implied_covariance(ram, dn)) /
                                      (2.0 * opt.se_step);
        } catch (const NumericError&) {
          ok = false;
        }
      }
      if (ok) {
        Eigen::MatrixXd info(q, q);
        for (Eigen::Index i = 0; i < q; ++i)
          for (Eigen::Index j = 0; j <= i; ++j) {
            double t = (d[static_cast<size_t>(i)] * d[static_cast<size_t>(j)]).trace();
            info(i, j) = info(j, i) = 0.5 * static_cast<double>(n - 1) * t;
          }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
            ldlt.vectorD().minCoeff() > 1e-12 * ldlt.vectorD().maxCoeff()) {
          Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
          for (Eigen::Index k = 0; k < q; ++k) se(k) = cov(k, k) > 0 ? std::sqrt(cov(k, k)) : factor::kUndefined;
        }
      }
    }
  }

  std::vector<double> std_values;
  try {
    std_values = standardize(ram);
  } catch (const NumericError&) {
    std_values.assign(ram.parameters().size(), factor::kUndefined);
  }
  const auto& params = ram.parameters();
  for (size_t k = 0; k < params.size(); ++k) {
    Estimate e;
    e.param = params[k];
    e.value = params[k].value;
    e.standardized = std_values[k];
    fit.estimates.push_back(e);
  }
  for (Eigen::Index k = 0; k < q; ++k) {
    Estimate& e = fit.estimates[ram.free_indices()[static_cast<size_t>(k)]];
    e.se = se(k);
    if (std::isfinite(e.se) && e.se > 0) {
      e.z = e.value / e.se;
      e.p = std::erfc(std::abs(e.z) / std::sqrt(2.0));
    }
  }
  fit.heywood = detect_heywood(fit);
  return fit;
}

inline SemFit fit_ml(const std::string& model_text, const SampleMoments& sample,
                     const SemFitOptions& opt = {}) {
  return fit_ml(parse_model(model_text), sample, opt);
}

struct ModelComparison {
  double delta_chi_square = 0;
  long delta_df = 0;
  double delta_bic = 0;
};

/// Differences a - b. No verdict is drawn.
inline ModelComparison compare_models(const SemFit& a, const SemFit& b) {
  if (a.fit.n != b.fit.n) throw ArgumentError("models were fit to different sample sizes");
  return {a.fit.chi_square - b.fit.chi_square, a.fit.df - b.fit.df, a.fit.bic - b.fit.bic};
}

}  // namespace oshealth::sem
