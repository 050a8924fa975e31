#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oshealth/sem/fit.hpp"
#include "oshealth/sem/report.hpp"
#include "oshealth/simulate.hpp"

using namespace oshealth;
using namespace oshealth::sem;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

ParseError parse_error(const std::string& text) {
  try {
    parse_model(text);
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("expected a parse error for:\n" << text);
  return ParseError("", 0, 0);
}

// Two-factor CFA with a near-duplicate pair inside the first factor. The
// doublet's excess correlation cannot be absorbed without a negative error
// variance unless its residual covariance is freed.
SampleMoments doublet_sample() {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(6, 2);
  l.col(0).head(3) << 0.75, 0.65, 0.30;
  l.col(1).tail(3).setConstant(0.7);
  Eigen::Matrix2d phi;
  phi << 1, 0.5, 0.5, 1;
  Eigen::MatrixXd s = l * phi * l.transpose();
  s.diagonal().setOnes();
  s(0, 1) = s(1, 0) = 0.99;
  return {s, {"a", "b", "c", "d", "e", "f"}, 384};
}

const char* kDoubletModel = "F1 =~ a + b + c\nF2 =~ d + e + f\n";

}  // namespace

TEST_CASE("measurement equation syntax", "[sem][parse]") {
  auto m = parse_model("Interest =~ forks + stars + mentions");
  REQUIRE(m.latents == std::vector<std::string>{"Interest"});
  CHECK(m.indicators() == std::vector<std::string>{"forks", "stars", "mentions"});
  RamModel ram(m);
  const auto& first = ram.parameters()[0];
  CHECK(first.name() == "Interest=~forks");
  CHECK_FALSE(first.free);
  CHECK(first.value == 1.0);
  CHECK(ram.parameters()[1].free);
}

TEST_CASE("reference model structure", "[sem][parse]") {
  auto m = parse_model(simulate::reference_sem_model());
  CHECK(m.latents == std::vector<std::string>{"Interest", "Engagement", "Robustness"});
  CHECK(m.indicators().size() == 11);
  REQUIRE(m.structural.size() == 3);
  CHECK(m.structural[0].from == "Interest");
  CHECK(m.structural[0].to == "Engagement");
  CHECK(m.structural[1].from == "Engagement");
  CHECK(m.structural[2].from == "Interest");
  CHECK(m.residual_covariances() == std::vector<std::pair<std::string, std::string>>{{"forks", "stars"}});
  CHECK(RamModel(m).degrees_of_freedom() == 40);
}

TEST_CASE("coefficients and comments", "[sem][parse]") {
  auto m = parse_model("# header\nF =~ NA*x1 + 0.5*x2 + x3  # trailing\n\nF ~~ 1*F\n");
  REQUIRE(m.measurement[0].indicators.size() == 3);
  CHECK(m.measurement[0].indicators[0].force_free);
  CHECK(*m.measurement[0].indicators[1].fixed == 0.5);
  RamModel ram(m);
  CHECK(ram.parameters()[0].free);
  CHECK_FALSE(ram.parameters()[1].free);
  // x1, x3 loadings; three error variances; the latent variance is fixed
  CHECK(ram.n_free() == 5);

  auto again = parse_model(to_text(m));
  CHECK(to_text(again) == to_text(m));
}

TEST_CASE("parse diagnostics carry positions", "[sem][parse]") {
  auto cyc = parse_error("A =~ a1 + a2\nB =~ b1 + b2\nA ~ B\nB ~ A\n");
  CHECK_THAT(std::string(cyc.what()), ContainsSubstring("cyclic"));
  CHECK(cyc.line() >= 3);

  auto unknown = parse_error("A =~ a1 + a2\nA ~ Zed\n");
  CHECK_THAT(std::string(unknown.what()), ContainsSubstring("unknown variable 'Zed'"));
  CHECK(unknown.line() == 2);

  auto dup = parse_error("A =~ a1 + a2\nB =~ b1 + a2\n");
  CHECK_THAT(std::string(dup.what()), ContainsSubstring("duplicate indicator 'a2'"));
  CHECK(dup.line() == 2);
  CHECK(dup.column() == 11);

  auto lat = parse_error("A =~ a1 + a2\nB =~ A + b1\n");
  CHECK_THAT(std::string(lat.what()), ContainsSubstring("latent"));

  // a cycle wins over an unknown name
  auto both = parse_error("A =~ a1\nA ~ B\nB ~ A\nA ~~ nope\n");
  CHECK_THAT(std::string(both.what()), ContainsSubstring("cyclic"));

  auto self = parse_error("A =~ a1 + a2\nA ~ A\n");
  CHECK_THAT(std::string(self.what()), ContainsSubstring("cyclic"));

  auto syntax = parse_error("A == a1\n");
  CHECK(syntax.line() == 1);
  auto coef = parse_error("A =~ x*a1\n");
  CHECK(coef.column() == 6);
}

TEST_CASE("free_covariance", "[sem]") {
  auto m = parse_model(simulate::reference_sem_model());
  auto base = RamModel(m).n_free();
  auto a = free_covariance(m, "mentions", "commits_3mo");
  CHECK(RamModel(a).n_free() == base + 1);
  auto b = free_covariance(a, "commits_3mo", "mentions");
  CHECK(to_text(b) == to_text(a));
  CHECK(to_text(free_covariance(m, "forks", "stars")) == to_text(m));
  CHECK_THROWS_AS(free_covariance(m, "forks", "forks"), ArgumentError);
  CHECK_THROWS_AS(free_covariance(m, "forks", "nope"), ArgumentError);
}

TEST_CASE("remove_path", "[sem]") {
  auto m = parse_model(simulate::reference_sem_model());
  auto r = remove_path(m, "Interest", "Robustness");
  CHECK(r.structural.size() == 2);
  CHECK(RamModel(r).degrees_of_freedom() == 41);
  CHECK_THROWS_AS(remove_path(r, "Interest", "Robustness"), ArgumentError);
}

TEST_CASE("implied covariance closed forms", "[sem]") {
  RamModel one(parse_model("F =~ x\nx ~~ 0*x\nF ~~ 1*F\n"));
  auto s1 = implied_covariance(one, one.free_values());
  CHECK(s1.rows() == 1);
  CHECK(s1(0, 0) == Approx(1.0));

  RamModel four(parse_model("F =~ NA*a + b + c + d\nF ~~ 1*F\n"));
  std::map<std::string, double> v;
  for (const char* x : {"a", "b", "c", "d"}) {
    v[std::string("F=~") + x] = 0.8;
    v[std::string(x) + "~~" + x] = 0.36;
  }
  auto s4 = implied_covariance(four, v);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(s4(i, j) == Approx(i == j ? 1.0 : 0.64));
  CHECK_THROWS_AS(implied_covariance(four, {{"F=~zz", 1.0}}), ArgumentError);

  auto g = simulate::reference_sem_generator();
  CHECK((g.sigma - g.sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g.sigma).eigenvalues().minCoeff() > 0);
  CHECK((g.sigma.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("zero-residual recovery of the reference model", "[sem]") {
  auto g = simulate::reference_sem_generator();
  auto fit = fit_ml(simulate::reference_sem_model(), {g.sigma, g.names, 384});
  CHECK(fit.converged);
  CHECK(fit.fit.df == 40);
  CHECK(fit.fit.chi_square < 1e-6);
  CHECK(fit.fit.cfi == 1.0);
  CHECK(fit.fit.rmsea == 0.0);
  CHECK(fit.fit.srmr < 1e-4);
  CHECK(fit.heywood.empty());
  for (const auto& [name, value] : g.truth) {
    INFO(name);
    CHECK(fit.estimate(name).standardized == Approx(value).margin(1e-3));
  }
  // the generator is standardized, so scaling-indicator raw loadings are 1
  // and standardized values sit in (0, 1]
  for (const char* n : {"Interest=~forks", "Engagement=~commits_3mo", "Robustness=~criticality"}) {
    CHECK(fit.estimate(n).standardized > 0);
    CHECK(fit.estimate(n).standardized <= 1.0);
  }
  // standard errors and tests are well formed
  for (const auto& e : fit.estimates) {
    if (!e.param.free) continue;
    REQUIRE(e.se > 0);
    CHECK(e.z == Approx(e.value / e.se));
    CHECK(e.p >= 0);
    CHECK(e.p <= 1);
  }
  CHECK((fit.implied_covariance - fit.implied_covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("one-factor model recovers its own covariance", "[sem]") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(4, 4, 0.64);
  s.diagonal().setOnes();
  auto fit = fit_ml("F =~ a + b + c + d\n", {s, {"a", "b", "c", "d"}, 200});
  CHECK(fit.fit.chi_square < 1e-8);
  CHECK(fit.estimate("F=~b").value == Approx(1.0).margin(1e-6));
  CHECK(fit.estimate("F~~F").value == Approx(0.64).margin(1e-6));
  CHECK(fit.estimate("a~~a").value == Approx(0.36).margin(1e-6));
  CHECK(fit.estimate("F=~c").standardized == Approx(0.8).margin(1e-6));
}

TEST_CASE("misspecified model shows misfit", "[sem]") {
  auto g = simulate::reference_sem_generator();
  // dropping Engagement -> Robustness leaves their covariance unexplained. Dropping both
  // Interest paths would not: Engagement turns exogenous and gets a free covariance.
  auto m = remove_path(parse_model(simulate::reference_sem_model()), "Engagement", "Robustness");
  auto fit = fit_ml(m, {g.sigma, g.names, 384});
  CHECK(fit.fit.chi_square > static_cast<double>(fit.fit.df));
  CHECK(fit.fit.rmsea > 0);
}

TEST_CASE("standardized solution is scale invariant", "[sem][property]") {
  auto g = simulate::reference_sem_generator();
  util::Rng rng(11);
  Eigen::MatrixXd data = simulate::sample_normal(g.sigma, 384, rng);
  Eigen::MatrixXd s = factor::covariance_matrix(data);
  auto base = fit_ml(simulate::reference_sem_model(), {s, g.names, 384});
  for (Eigen::Index k : {0, 4, 9}) {
    Eigen::VectorXd d = Eigen::VectorXd::Ones(s.rows());
    d(k) = 2.0;
    Eigen::MatrixXd scaled = d.asDiagonal() * s * d.asDiagonal();
    auto fit = fit_ml(simulate::reference_sem_model(), {scaled, g.names, 384});
    CHECK(fit.fit.chi_square == Approx(base.fit.chi_square).margin(1e-6));
    for (std::size_t i = 0; i < fit.estimates.size(); ++i) {
      INFO(fit.estimates[i].param.name());
      CHECK(fit.estimates[i].standardized == Approx(base.estimates[i].standardized).margin(1e-6));
    }
  }
}

TEST_CASE("analytic gradient matches central differences", "[sem][property]") {
  auto g = simulate::reference_sem_generator();
  RamModel ram(parse_model(simulate::reference_sem_model()));
  util::Rng rng(3);
  Eigen::MatrixXd data = simulate::sample_normal(g.sigma, 500, rng);
  Eigen::MatrixXd s = factor::covariance_matrix(data);
  s = select_observed(ram, {s, g.names, 500});
  double lds = factor::log_det_spd(s);
  std::uniform_real_distribution<double> load(0.5, 1.2), var(0.3, 0.9), path(-0.3, 0.5);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::VectorXd x(ram.n_free());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const auto& p = ram.parameters()[ram.free_indices()[static_cast<std::size_t>(k)]];
      switch (p.kind) {
        case ParamKind::Loading: x(k) = load(rng); break;
        case ParamKind::Variance: x(k) = var(rng); break;
        case ParamKind::Regression: x(k) = path(rng); break;
        case ParamKind::Covariance: x(k) = 0.1 * path(rng); break;
      }
    }
    Eigen::VectorXd grad;
    double f = ml_objective(ram, s, lds, x, &grad);
    if (!std::isfinite(f)) continue;
    ++checked;
    Eigen::VectorXd num = ml_numeric_gradient(ram, s, lds, x);
    double rel = (grad - num).norm() / std::max(1.0, num.norm());
    CHECK(rel < 1e-4);
  }
  CHECK(checked > 20);
}

TEST_CASE("Heywood case appears and is resolved by freeing the doublet", "[sem]") {
  auto sample = doublet_sample();
  auto bad = fit_ml(kDoubletModel, sample);
  REQUIRE_FALSE(bad.heywood.empty());
  for (const auto& h : bad.heywood) CHECK((h == "a~~a" || h == "b~~b"));
  CHECK(detect_heywood(bad) == bad.heywood);

  auto freed = free_covariance(parse_model(kDoubletModel), "a", "b");
  auto good = fit_ml(freed, sample);
  CHECK(good.heywood.empty());
  CHECK(good.fit.chi_square < bad.fit.chi_square);
}

TEST_CASE("identification is checked before fitting", "[sem]") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(2, 2);
  s(0, 1) = s(1, 0) = 0.3;
  CHECK_THROWS_AS(fit_ml("F =~ NA*a + b\n", {s, {"a", "b"}, 100}), IdentificationError);
  // two indicators, one factor: 4 free parameters for 3 moments
  CHECK_THROWS_AS(fit_ml("F =~ a + b\n", {s, {"a", "b"}, 100}), IdentificationError);
  CHECK_THROWS_WITH(fit_ml("F =~ a + b + c\n", {s, {"a", "b"}, 100}), ContainsSubstring("'c'"));
}

TEST_CASE("model comparison", "[sem]") {
  auto g = simulate::reference_sem_generator();
  util::Rng rng(8);
  Eigen::MatrixXd s = factor::covariance_matrix(simulate::sample_normal(g.sigma, 384, rng));
  auto full = fit_ml(simulate::reference_sem_model(), {s, g.names, 384});
  auto same = compare_models(full, full);
  CHECK(same.delta_chi_square == 0);
  CHECK(same.delta_df == 0);
  CHECK(same.delta_bic == 0);

  auto reduced = fit_ml(remove_path(parse_model(simulate::reference_sem_model()), "Interest", "Robustness"),
                        {s, g.names, 384});
  auto d = compare_models(reduced, full);
  CHECK(d.delta_df == 1);
  CHECK(d.delta_chi_square >= -1e-6);

  auto other = fit_ml(simulate::reference_sem_model(), {s, g.names, 200});
  CHECK_THROWS_AS(compare_models(full, other), ArgumentError);
}

TEST_CASE("reports", "[sem]") {
  auto g = simulate::reference_sem_generator();
  auto fit = fit_ml(simulate::reference_sem_model(), {g.sigma, g.names, 384});
  auto j = to_json(fit);
  CHECK(j["estimates"].size() == fit.estimates.size());
  CHECK(j["fit"]["df"] == 40);
  CHECK(j["heywood"].empty());
  auto text = to_text(fit);
  CHECK_THAT(text, ContainsSubstring("Engagement ~ Interest"));
  CHECK_THAT(text, ContainsSubstring("0.590"));
}
