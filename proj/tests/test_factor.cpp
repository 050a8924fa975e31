#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oshealth/factor/assign.hpp"
#include "oshealth/factor/correlation.hpp"
#include "oshealth/factor/efa.hpp"
#include "oshealth/factor/parallel.hpp"
#include "oshealth/factor/reliability.hpp"
#include "oshealth/factor/varimax.hpp"
#include "oshealth/simulate.hpp"

using namespace oshealth;
using namespace oshealth::factor;
using Catch::Approx;

namespace {

Eigen::MatrixXd one_factor_r(double lambda, int p) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(p, p, lambda * lambda);
  r.diagonal().setOnes();
  return r;
}

// Two strong factors on nine variables plus an isolated doublet (x10, x11)
// that shares nothing with them.
Eigen::MatrixXd with_doublet(long n, std::uint64_t seed) {
  auto g = simulate::reference_efa_generator();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(11, 11);
  sigma.topLeftCorner(9, 9) = g.correlation();
  sigma(9, 10) = sigma(10, 9) = 0.8;
  util::Rng rng(seed);
  return simulate::sample_normal(sigma, n, rng);
}

}  // namespace

TEST_CASE("correlation matrix", "[factor]") {
  Eigen::MatrixXd d(3, 2);
  d << 1, 2, 2, 4, 3, 6;
  CHECK(correlation_matrix(d, {"a", "b"})(0, 1) == Approx(1.0));
  Eigen::MatrixXd rev(3, 2);
  rev << 1, 3, 2, 2, 3, 1;
  CHECK(correlation_matrix(rev, {"a", "b"})(0, 1) == Approx(-1.0));
  Eigen::MatrixXd constant(3, 2);
  constant << 1, 5, 2, 5, 3, 5;
  try {
    correlation_matrix(constant, {"forks", "stars"});
    FAIL("expected an error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("stars") != std::string::npos);
  }
}

TEST_CASE("eigenvalues", "[factor]") {
  auto ev = eigenvalues(Eigen::MatrixXd::Identity(9, 9));
  for (Eigen::Index i = 0; i < 9; ++i) CHECK(ev(i) == Approx(1.0));
  Eigen::Matrix2d r;
  r << 1, 0.3, 0.3, 1;
  auto e2 = eigenvalues(r);
  CHECK(e2(0) == Approx(1.3));
  CHECK(e2(1) == Approx(0.7));
  Eigen::Matrix2d asym;
  asym << 1, 0.3, 0.1, 1;
  CHECK_THROWS_AS(eigenvalues(asym), ArgumentError);

  auto pop = simulate::reference_efa_generator().correlation();
  auto ep = eigenvalues(pop);
  CHECK(ep.sum() == Approx(9.0).margin(1e-8));
  for (Eigen::Index i = 1; i < ep.size(); ++i) CHECK(ep(i) <= ep(i - 1));
}

TEST_CASE("ML extraction recovers a one-factor model exactly", "[factor][efa]") {
  auto r = one_factor_r(0.8, 4);
  auto res = efa_ml(r, 200, 1);
  CHECK(res.solution.converged);
  CHECK(res.fit.f_min < 1e-8);
  CHECK(res.fit.chi_square < 1e-6);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(std::abs(res.solution.loadings(i, 0)) == Approx(0.8).margin(1e-4));
    CHECK(res.solution.uniquenesses(i) == Approx(0.36).margin(1e-4));
  }
  CHECK(res.fit.df == 2);
  CHECK(res.fit.rmsea == 0.0);
  CHECK(res.fit.cfi == Approx(1.0));
}

TEST_CASE("identification and positivity errors", "[factor][efa]") {
  auto r = one_factor_r(0.8, 4);
  CHECK(efa_degrees_of_freedom(4, 3) < 0);
  CHECK_THROWS_AS(efa_ml(r, 200, 3), IdentificationError);
  CHECK_THROWS_AS(efa_ml(r, 200, 0), IdentificationError);
  Eigen::MatrixXd singular = Eigen::MatrixXd::Ones(4, 4);
  CHECK_THROWS_AS(efa_ml(singular, 200, 1), NumericError);
}

TEST_CASE("solution invariants", "[factor][efa][property]") {
  auto g = simulate::reference_efa_generator();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    util::Rng rng(seed);
    Eigen::MatrixXd x = simulate::sample_normal(g.correlation(), 384, rng);
    Eigen::MatrixXd r = correlation_matrix(x, g.names);
    auto res = efa_ml(r, 384, 2);
    auto rot = rotate_varimax(res.solution);
    for (const auto* s : {&res.solution, &rot}) {
      Eigen::VectorXd h2 = s->loadings.rowwise().squaredNorm();
      CHECK((h2 - s->communalities).cwiseAbs().maxCoeff() < 1e-12);
      // items pinned at the uniqueness floor are boundary solutions
      for (Eigen::Index i = 0; i < h2.size(); ++i)
        if (s->uniquenesses(i) > 0.0051) CHECK(std::abs(h2(i) + s->uniquenesses(i) - 1.0) < 1e-6);
      CHECK((s->rotation.transpose() * s->rotation - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-10);
      CHECK(s->variance.ss_loadings.sum() == Approx(h2.sum()).margin(1e-8));
      CHECK(s->variance.proportion_explained.sum() == Approx(1.0));
    }
    CHECK(res.fit.chi_square >= 0.0);
    CHECK(res.fit.cfi >= 0.0);
    CHECK(res.fit.cfi <= 1.0);
    if (res.fit.chi_square <= res.fit.df) CHECK(res.fit.rmsea == 0.0);
  }
}

TEST_CASE("principal axis factoring", "[factor][efa]") {
  auto s = efa_principal_axis(one_factor_r(0.8, 4), 1);
  CHECK(s.converged);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(s.loadings(i, 0)) == Approx(0.8).margin(1e-3));
  auto id = efa_principal_axis(Eigen::MatrixXd::Identity(5, 5), 1);
  CHECK(id.loadings.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ML and principal axis agree on simulated data", "[factor][efa]") {
  auto g = simulate::reference_efa_generator();
  util::Rng rng(21);
  Eigen::MatrixXd x = simulate::sample_normal(g.correlation(), 384, rng);
  Eigen::MatrixXd r = correlation_matrix(x, g.names);
  auto ml = rotate_varimax(efa_ml(r, 384, 2).solution);
  auto pa = rotate_varimax(efa_principal_axis(r, 2));
  CHECK(align_to_target(pa.loadings, ml.loadings).max_abs_error < 0.05);
}

TEST_CASE("variance table", "[factor]") {
  Eigen::MatrixXd l = Eigen::MatrixXd::Constant(4, 1, 0.5);
  auto t = variance_table(l);
  CHECK(t.ss_loadings(0) == Approx(1.0));
  CHECK(t.cumulative_variance(0) == Approx(0.25));
  CHECK(t.proportion_explained(0) == Approx(1.0));
}

TEST_CASE("fit index closed forms", "[factor][fit]") {
  CHECK(rmsea(100, 50, 101) == Approx(0.1).margin(1e-15));
  CHECK(rmsea(50, 50, 101) == 0.0);
  CHECK(rmsea(10, 50, 101) == 0.0);
  double tli_hand = (500.0 / 45.0 - 50.0 / 40.0) / (500.0 / 45.0 - 1.0);
  CHECK(tli(50, 40, 500, 45) == Approx(tli_hand).margin(1e-12));
  CHECK(tli(50, 40, 500, 45) == Approx(0.9753).margin(5e-5));
  CHECK(cfi(150, 50, 1000, 55) == Approx(1.0 - 100.0 / 945.0).margin(1e-12));
  CHECK(cfi(10, 50, 1000, 55) == 1.0);
  CHECK_THROWS_AS(tli(50, 40, 45, 45), NumericError);
  CHECK_THROWS_AS(rmsea(10, 0, 100), ArgumentError);
  Eigen::MatrixXd s = one_factor_r(0.5, 3);
  CHECK(srmr(s, s) == 0.0);
  // srmr on the correlation metric ignores scale
  Eigen::MatrixXd scaled = 4.0 * s;
  CHECK(srmr(s, scaled) == Approx(0.0).margin(1e-15));
}

TEST_CASE("reliability coefficients", "[factor][reliability]") {
  Eigen::MatrixXd same(5, 3);
  for (int i = 0; i < 5; ++i) same.row(i).setConstant(i * 1.5);
  CHECK(cronbach_alpha(same) == Approx(1.0));
  Eigen::Matrix2d unc;
  unc << 1, 0, 0, 1;
  CHECK(cronbach_alpha_from_covariance(unc) == Approx(0.0).margin(1e-15));
  Eigen::Matrix2d half;
  half << 1, 0.5, 0.5, 1;
  CHECK(cronbach_alpha_from_covariance(half) == Approx(2.0 / 3.0).margin(1e-15));

  Eigen::Vector2d ones(1, 1), zeros(0, 0);
  CHECK(mcdonald_omega(ones, zeros) == 1.0);
  Eigen::Vector4d l = Eigen::Vector4d::Constant(0.8), psi = Eigen::Vector4d::Constant(0.36);
  CHECK(mcdonald_omega(l, psi) == Approx(10.24 / 11.68).margin(1e-12));
  CHECK(mcdonald_omega(Eigen::Vector4d::Zero(), psi) == 0.0);
  CHECK_THROWS_AS(cronbach_alpha(Eigen::MatrixXd::Ones(4, 1)), ArgumentError);
  CHECK_THROWS_AS(cronbach_alpha(Eigen::MatrixXd::Ones(4, 2)), NumericError);
}

TEST_CASE("reliability stays in [0, 1] for positive structures", "[factor][reliability][property]") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.2, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd l(4);
    for (int i = 0; i < 4; ++i) l(i) = u(rng);
    Eigen::MatrixXd cov = l * l.transpose();
    cov.diagonal().setOnes();
    double a = cronbach_alpha_from_covariance(cov);
    double w = mcdonald_omega(l, (1.0 - l.array().square()).matrix());
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
  }
}

TEST_CASE("indicator assignment", "[factor][assign]") {
  auto g = simulate::reference_efa_generator();
  auto a = assign_indicators(g.loadings, g.names, 0.3);
  CHECK(a.factors[0] == std::vector<std::string>{"forks", "stars", "mentions"});
  CHECK(a.factors[1] ==
        std::vector<std::string>{"criticality", "months_since_update", "cmc_rank", "geo_rmse"});
  CHECK(a.dropped == std::vector<std::string>{"longevity_days", "alexa_rank"});

  auto none = assign_indicators(Eigen::MatrixXd::Constant(3, 2, 0.1), {"a", "b", "c"}, 0.3);
  CHECK(none.dropped.size() == 3);
  Eigen::MatrixXd tie(1, 2);
  tie << 0.5, -0.5;
  CHECK(assign_indicators(tie, {"a"}, 0.3).factor_of[0] == 0);
  // strictly greater than the cutoff
  Eigen::MatrixXd edge(1, 1);
  edge << 0.3;
  CHECK(assign_indicators(edge, {"a"}, 0.3).dropped.size() == 1);
  CHECK_THROWS_AS(assign_indicators(edge, {"a"}, 0.0), ArgumentError);

  Assignment x{{{"a", "b"}, {"c"}}, {"d"}, {0, 0, 1, -1}};
  Assignment y{{{"c"}, {"a", "b"}}, {"d"}, {1, 1, 0, -1}};
  CHECK(same_structure(x, y));
  y.dropped = {};
  CHECK_FALSE(same_structure(x, y));
}

TEST_CASE("alignment over permutations and signs", "[factor][assign]") {
  Eigen::MatrixXd t(3, 2);
  t << 0.9, 0.1, 0.8, 0.0, 0.1, 0.7;
  Eigen::MatrixXd est(3, 2);
  est.col(0) = -t.col(1);
  est.col(1) = t.col(0);
  auto al = align_to_target(est, t);
  CHECK(al.max_abs_error == Approx(0.0).margin(1e-15));
  CHECK(al.perm == std::vector<Eigen::Index>{1, 0});
  CHECK(al.sign == std::vector<double>{1.0, -1.0});
}

TEST_CASE("parallel analysis", "[factor][parallel]") {
  auto g = simulate::reference_efa_generator();
  util::Rng rng(8);
  Eigen::MatrixXd x = simulate::sample_normal(g.correlation(), 384, rng);
  ParallelOptions opt;
  opt.n_sims = 50;
  auto res = parallel_analysis(x, opt);
  CHECK(res.suggested_factors == 2);
  auto again = parallel_analysis(x, opt);
  CHECK(again.simulated_mean_eigenvalues == res.simulated_mean_eigenvalues);
  opt.threads = 4;
  CHECK(parallel_analysis(x, opt).simulated_quantile_eigenvalues == res.simulated_quantile_eigenvalues);

  opt.rule = RetentionRule::Mean;
  auto mean_rule = parallel_analysis(x, opt);
  CHECK(mean_rule.suggested_factors ==
        count_above(mean_rule.observed_eigenvalues, mean_rule.simulated_mean_eigenvalues));
  CHECK(mean_rule.suggested_factors == mean_rule.count_above_mean);

  CHECK_THROWS_AS(parallel_analysis_from_correlation(Eigen::MatrixXd::Identity(3, 3), 10, {.n_sims = 0}),
                  ArgumentError);
  CHECK(eigen_basis_from_string("full") == EigenBasis::Full);
  CHECK_THROWS_AS(eigen_basis_from_string("half"), ArgumentError);
}

TEST_CASE("parallel analysis on noise, full basis", "[factor][parallel]") {
  double total = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    util::Rng rng(seed * 7919);
    Eigen::MatrixXd z = util::standard_normal(384, 9, rng);
    auto res = parallel_analysis(z, {.n_sims = 30, .seed = seed, .basis = EigenBasis::Full,
                                     .rule = RetentionRule::Quantile});
    total += res.suggested_factors;
  }
  CHECK(total / 40.0 <= 0.25);
}

TEST_CASE("suggested count does not grow when simulated eigenvalues inflate", "[factor][parallel][property]") {
  Eigen::VectorXd obs(5), sim(5);
  obs << 3.0, 1.8, 1.1, 0.6, 0.5;
  sim << 1.3, 1.2, 1.05, 0.95, 0.8;
  int prev = leading_run_above(obs, sim);
  int prev_count = count_above(obs, sim);
  for (double f = 1.0; f < 4.0; f += 0.05) {
    Eigen::VectorXd inflated = sim * f;
    CHECK(leading_run_above(obs, inflated) <= prev);
    CHECK(count_above(obs, inflated) <= prev_count);
    prev = leading_run_above(obs, inflated);
    prev_count = count_above(obs, inflated);
  }
  CHECK(prev == 0);
}

TEST_CASE("dropping an isolated doublet lowers BIC", "[factor][efa][property]") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Eigen::MatrixXd x = with_doublet(384, seed);
    Eigen::MatrixXd r_full = correlation_matrix(x, {});
    Eigen::MatrixXd r_red = r_full.topLeftCorner(9, 9);
    auto full = efa_ml(r_full, 384, 2);
    auto reduced = efa_ml(r_red, 384, 2);
    CHECK(reduced.fit.bic < full.fit.bic);
  }
}
