#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include <json.hpp>

#include "oshealth/factor/assign.hpp"
#include "oshealth/factor/efa.hpp"
#include "oshealth/factor/fit.hpp"
#include "oshealth/factor/parallel.hpp"

namespace oshealth::factor {

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v(i)));
  return a;
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

/// {"variables": [...], "loadings": [{"variable": name, "values": [...]}, ...],
///  "uniquenesses": {...}, "communalities": {...}, "ss_loadings": [...], ...}
inline nlohmann::json to_json(const FactorSolution& s, const std::vector<std::string>& names) {
  nlohmann::json j;
  j["method"] = to_string(s.method);
  j["factors"] = s.loadings.cols();
  j["converged"] = s.converged;
  j["iterations"] = s.iterations;
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json psi = nlohmann::json::object(), h2 = nlohmann::json::object();
  for (Eigen::Index i = 0; i < s.loadings.rows(); ++i) {
    std::string name = column_label(names, i);
    rows.push_back({{"variable", name}, {"values", vector_json(s.loadings.row(i).transpose())}});
    psi[name] = number_or_null(s.uniquenesses(i));
    h2[name] = number_or_null(s.communalities(i));
  }
  j["loadings"] = rows;
  j["uniquenesses"] = psi;
  j["communalities"] = h2;
  j["rotation"] = matrix_json(s.rotation);
  j["ss_loadings"] = vector_json(s.variance.ss_loadings);
  j["cumulative_variance"] = vector_json(s.variance.cumulative_variance);
  j["proportion_explained"] = vector_json(s.variance.proportion_explained);
  nlohmann::json floor = nlohmann::json::array();
  for (auto i : s.at_uniqueness_floor) floor.push_back(column_label(names, i));
  j["uniqueness_at_floor"] = floor;
  return j;
}

inline nlohmann::json to_json(const ParallelAnalysisResult& r) {
  return {{"basis", to_string(r.basis)},
          {"rule", r.rule == RetentionRule::Mean ? "mean" : "quantile"},
          {"quantile", r.quantile},
          {"n_sims", r.n_sims},
          {"observed_eigenvalues", vector_json(r.observed_eigenvalues)},
          {"simulated_mean_eigenvalues", vector_json(r.simulated_mean_eigenvalues)},
          {"simulated_quantile_eigenvalues", vector_json(r.simulated_quantile_eigenvalues)},
          {"suggested_factors", r.suggested_factors},
          {"count_above_mean", r.count_above_mean}};
}

inline nlohmann::json to_json(const Assignment& a) {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& names : a.factors) f.push_back(names);
  return {{"factors", f}, {"dropped", a.dropped}};
}

}  // namespace oshealth::factor
