#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/sem/ram.hpp"
#include "oshealth/util/random.hpp"

namespace oshealth::simulate {

/// n draws from N(0, sigma), one row per draw.
inline Eigen::MatrixXd sample_normal(const Eigen::MatrixXd& sigma, Eigen::Index n, util::Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericError("generator covariance is not positive definite");
  Eigen::MatrixXd z = util::standard_normal(n, sigma.rows(), rng);
  return z * llt.matrixL().transpose();
}

struct FactorGenerator {
  std::vector<std::string> names;
  Eigen::MatrixXd loadings;  // p x m, unit-variance orthogonal factors

  Eigen::MatrixXd correlation() const {
    Eigen::MatrixXd r = loadings * loadings.transpose();
    r.diagonal().setOnes();
    return r;
  }
};

/// Rotated two-factor loadings of the nine retained health metrics.
inline FactorGenerator reference_efa_generator() {
  FactorGenerator g;
  g.names = {"forks",           "stars",    "mentions", "criticality",    "months_since_update",
             "cmc_rank",        "geo_rmse", "longevity_days", "alexa_rank"};
  g.loadings.resize(9, 2);
  g.loadings << 0.988, 0.137,  //
      0.970, 0.166,            //
      0.885, 0.076,            //
      0.135, 0.988,            //
      -0.015, 0.705,           //
      0.169, 0.373,            //
      0.082, 0.369,            //
      0.075, 0.237,            //
      0.163, 0.104;
  return g;
}

/// Structural health model: Interest drives Engagement, Engagement drives
/// Robustness, with a small direct Interest -> Robustness effect.
inline const char* reference_sem_model() {
  return "Interest =~ forks + stars + mentions\n"
         "Engagement =~ commits_3mo + comments_3mo + pull_requests_3mo + authors_3mo\n"
         "Robustness =~ criticality + months_since_update + cmc_rank + geo_rmse\n"
         "forks ~~ stars\n"
         "Engagement ~ Interest\n"
         "Robustness ~ Engagement + Interest\n";
}

struct SemGenerator {
  std::vector<std::string> names;
  Eigen::MatrixXd sigma;                 // correlation metric
  std::map<std::string, double> truth;   // standardized parameter values
};

struct SemGeneratorValues {
  std::map<std::string, std::map<std::string, double>> loadings;  // latent -> indicator -> value
  double interest_engagement = 0.59;
  double engagement_robustness = 0.54;
  double interest_robustness = -0.06;
};

inline SemGeneratorValues reference_sem_values() {
  SemGeneratorValues v;
  v.loadings["Interest"] = {{"forks", 0.988}, {"stars", 0.970}, {"mentions", 0.885}};
  v.loadings["Engagement"] = {{"commits_3mo", 0.75}, {"comments_3mo", 0.85},
                              {"pull_requests_3mo", 0.96}, {"authors_3mo", 0.90}};
  v.loadings["Robustness"] = {{"criticality", 0.988}, {"months_since_update", 0.705},
                              {"cmc_rank", 0.373}, {"geo_rmse", 0.369}};
  return v;
}

/// Population covariance of the reference structural model with unit
/// variances for every latent and indicator.
inline SemGenerator reference_sem_generator(const SemGeneratorValues& v = reference_sem_values()) {
  sem::SemModel m = sem::parse_model(reference_sem_model());
  const double a = v.interest_engagement, b = v.engagement_robustness, c = v.interest_robustness;
  const double var_r = b * b + c * c + 2.0 * a * b * c;
  if (!(a * a < 1.0 && var_r < 1.0)) throw ArgumentError("structural paths explain more than all variance");
  // Free the first loadings and fix latent (disturbance) variances instead.
  for (auto& eq : m.measurement) eq.indicators.front().force_free = true;
  m.covariances.push_back({"Interest", "Interest", 1.0, 0, 0});
  m.covariances.push_back({"Engagement", "Engagement", 1.0 - a * a, 0, 0});
  m.covariances.push_back({"Robustness", "Robustness", 1.0 - var_r, 0, 0});
  sem::RamModel ram(m);

  SemGenerator g;
  g.names = ram.observed();
  std::map<std::string, double> values;
  for (const auto& [latent, inds] : v.loadings)
    for (const auto& [ind, l] : inds) {
      values[latent + "=~" + ind] = l;
      values[ind + "~~" + ind] = 1.0 - l * l;
      g.truth[latent + "=~" + ind] = l;
    }
  values["Engagement~Interest"] = a;
  values["Robustness~Engagement"] = b;
  values["Robustness~Interest"] = c;
  values["forks~~stars"] = 0.0;
  for (const auto& k : {"Engagement~Interest", "Robustness~Engagement", "Robustness~Interest"})
    g.truth[k] = values[k];
  g.sigma = sem::implied_covariance(ram, values);
  return g;
}

}  // namespace oshealth::simulate
