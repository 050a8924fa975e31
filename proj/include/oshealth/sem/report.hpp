#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>

#include <json.hpp>

#include "oshealth/factor/fit.hpp"
#include "oshealth/factor/report.hpp"
#include "oshealth/sem/fit.hpp"

namespace oshealth::sem {

inline nlohmann::json to_json(const SemFit& fit) {
  using factor::number_or_null;
  nlohmann::json est = nlohmann::json::array();
  for (const auto& e : fit.estimates)
    est.push_back({{"lhs", e.param.lhs},
                   {"op", op_of(e.param.kind)},
                   {"rhs", e.param.rhs},
                   {"free", e.param.free},
                   {"estimate", number_or_null(e.value)},
                   {"se", number_or_null(e.se)},
                   {"z", number_or_null(e.z)},
                   {"p", number_or_null(e.p)},
                   {"std", number_or_null(e.standardized)}});
  return {{"converged", fit.converged},
          {"iterations", fit.iterations},
          {"optimizer_message", fit.message},
          {"observed", fit.observed},
          {"estimates", est},
          {"fit", factor::to_json(fit.fit)},
          {"heywood", fit.heywood},
          {"implied_covariance", factor::matrix_json(fit.implied_covariance)}};
}

inline nlohmann::json to_json(const ModelComparison& c) {
  return {{"delta_chi_square", factor::number_or_null(c.delta_chi_square)},
          {"delta_df", c.delta_df},
          {"delta_bic", factor::number_or_null(c.delta_bic)}};
}

namespace detail {
inline std::string num3(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}
}  // namespace detail

/// Aligned text table: estimate, SE, z, p, std per parameter, then fit indices.
inline std::string to_text(const SemFit& fit) {
  std::ostringstream out;
  char line[512];
  int width = 32;
  for (const auto& e : fit.estimates)
    width = std::max(width, static_cast<int>(e.param.lhs.size() + e.param.rhs.size() + 4));
  auto section = [&](ParamKind kind, const char* title) {
    bool any = false;
    for (const auto& e : fit.estimates) {
      if (e.param.kind != kind) continue;
      if (!any) {
        out << title << ":\n";
        std::snprintf(line, sizeof line, "  %-*s %9s %9s %9s %9s %9s\n", width, "", "Estimate", "Std.Err",
                      "z-value", "P(>|z|)", "Std.all");
        out << line;
        any = true;
      }
      std::string name = e.param.lhs + " " + op_of(kind) + " " + e.param.rhs;
      std::snprintf(line, sizeof line, "  %-*s %9s %9s %9s %9s %9s\n", width, name.c_str(),
                    detail::num3(e.value).c_str(), detail::num3(e.se).c_str(),
                    detail::num3(e.z).c_str(), detail::num3(e.p).c_str(),
                    detail::num3(e.standardized).c_str());
      out << line;
    }
    if (any) out << "\n";
  };
  section(ParamKind::Loading, "Latent variables");
  section(ParamKind::Regression, "Regressions");
  section(ParamKind::Covariance, "Covariances");
  section(ParamKind::Variance, "Variances");
  const auto& f = fit.fit;
  std::snprintf(line, sizeof line, "  %-20s %12s\n", "chi-square", detail::num3(f.chi_square).c_str());
  out << "Fit:\n" << line;
  std::snprintf(line, sizeof line, "  %-20s %12ld\n", "df", f.df);
  out << line;
  for (auto [k, v] : {std::pair{"CFI", f.cfi}, {"TLI", f.tli}, {"RMSEA", f.rmsea}, {"SRMR", f.srmr},
                      {"BIC", f.bic}}) {
    std::snprintf(line, sizeof line, "  %-20s %12s\n", k, detail::num3(v).c_str());
    out << line;
  }
  if (!fit.heywood.empty()) {
    out << "Negative variances:";
    for (const auto& h : fit.heywood) out << " " << h;
    out << "\n";
  }
  if (!fit.converged) out << "Warning: optimizer did not converge (" << fit.message << ")\n";
  return out.str();
}

}  // namespace oshealth::sem
