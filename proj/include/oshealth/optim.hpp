#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

namespace oshealth::optim {

struct MinimizeOptions {
  int max_iterations = 2000;
  double f_tol = 1e-12;      // |f_k - f_{k-1}| below this (with small gradient) stops
  double g_tol = 1e-9;       // max |g| below this stops
  double g_loose = 1e-4;     // gradient bound that must hold for an f_tol stop
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Quasi-Newton (BFGS, inverse-Hessian form) with Armijo backtracking.
///
/// `fg(x, g)` returns f(x) and writes the gradient into g; it may return a
/// non-finite value to mark x as infeasible, in which case the line search
/// shrinks the step.
template <typename Objective>
MinimizeResult minimize_bfgs(Objective&& fg, Eigen::VectorXd x0, const MinimizeOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  MinimizeResult r;
  r.x = std::move(x0);
  r.gradient = Eigen::VectorXd::Zero(n);
  r.f = fg(r.x, r.gradient);
  if (!std::isfinite(r.f)) {
    r.message = "objective not finite at the start point";
    return r;
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  Eigen::VectorXd g_new(n), x_new(n), s(n), y(n);
  for (r.iterations = 0; r.iterations < opt.max_iterations; ++r.iterations) {
    double gmax = n ? r.gradient.cwiseAbs().maxCoeff() : 0.0;
    if (gmax <= opt.g_tol) {
      r.converged = true;
      r.message = "gradient below tolerance";
      return r;
    }
    Eigen::VectorXd dir = -H * r.gradient;
    double slope = r.gradient.dot(dir);
    if (!(slope < 0)) {
      H.setIdentity();
      dir = -r.gradient;
      slope = -r.gradient.squaredNorm();
    }
    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = r.x + step * dir;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= r.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= (std::isfinite(f_new) ? 0.5 : 0.1);
    }
    if (!accepted) {
      // Steepest descent restart once before giving up.
      if (!H.isIdentity()) {
        H.setIdentity();
        continue;
      }
      r.converged = gmax <= opt.g_loose;
      r.message = r.converged ? "line search stalled near a stationary point"
                              : "line search failed";
      return r;
    }
    s = x_new - r.x;
    y = g_new - r.gradient;
    double df = r.f - f_new;
    r.x = x_new;
    r.f = f_new;
    r.gradient = g_new;
    double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      double rho = 1.0 / sy;
      Eigen::VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * s * s.transpose() - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
    if (std::abs(df) <= opt.f_tol && r.gradient.cwiseAbs().maxCoeff() <= opt.g_loose) {
      r.converged = true;
      r.message = "objective change below tolerance";
      ++r.iterations;
      return r;
    }
  }
  r.message = "iteration limit reached";
  return r;
}

}  // namespace oshealth::optim
