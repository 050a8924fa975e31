#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "oshealth/dataset/dataset.hpp"

using namespace oshealth;
using namespace oshealth::dataset;
using Catch::Approx;

namespace {

MetricMatrix matrix(const std::vector<std::string>& names, const Eigen::MatrixXd& v) {
  MetricMatrix m;
  m.values = v;
  for (const auto& n : names) m.columns.push_back({n, default_reverse_scored().count(n) > 0, {}});
  for (Eigen::Index i = 0; i < v.rows(); ++i) m.rows.push_back("r" + std::to_string(i));
  return m;
}

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

ingest::RepoResolution res(ingest::ResolutionStatus s, std::string repo = "") {
  ingest::RepoResolution r;
  r.status = s;
  r.repo_id = std::move(repo);
  return r;
}

}  // namespace

TEST_CASE("reverse scoring", "[dataset]") {
  Eigen::VectorXd a(3), b(2), c(3);
  a << 1, 2, 3;
  b << 0, 10;
  c << 4, 4, 4;
  CHECK(reverse_score(a) == Eigen::Vector3d(3, 2, 1));
  CHECK(reverse_score(b) == Eigen::Vector2d(10, 0));
  CHECK(reverse_score(c) == c);
}

TEST_CASE("reverse scoring properties", "[dataset][property]") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> ints(-1000, 1000);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x(20), y(20);
    for (int i = 0; i < 20; ++i) {
      x(i) = ints(rng);
      y(i) = z(rng);
    }
    if (x.minCoeff() == x.maxCoeff()) continue;
    Eigen::VectorXd r = reverse_score(x);
    CHECK(reverse_score(r) == x);
    CHECK(r.minCoeff() == x.minCoeff());
    CHECK(r.maxCoeff() == x.maxCoeff());
    CHECK(corr(x, r) == Approx(-1.0).margin(1e-12));
    CHECK(corr(r, y) == Approx(-corr(x, y)).margin(1e-12));
  }
}

TEST_CASE("mean imputation", "[dataset]") {
  Eigen::MatrixXd v(3, 2);
  v << 1, 5, kAbsent, 6, 3, 7;
  auto m = matrix({"forks", "stars"}, v);
  impute_mean(m, 0);
  CHECK(m.values(1, 0) == 2.0);
  CHECK(m.columns[0].imputed_cells == std::set<std::size_t>{1});
  impute_mean(m, 1);
  CHECK(m.columns[1].imputed_cells.empty());
  CHECK(m.values.col(1) == Eigen::Vector3d(5, 6, 7));

  Eigen::MatrixXd all(2, 1);
  all << kAbsent, kAbsent;
  auto bad = matrix({"forks"}, all);
  CHECK_THROWS_AS(impute_mean(bad, 0), ArgumentError);
}

TEST_CASE("imputation preserves the mean of present values", "[dataset][property]") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::bernoulli_distribution drop(0.2);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd v(30, 1);
    double sum = 0;
    int present = 0;
    for (int i = 0; i < 30; ++i) {
      if (i > 0 && drop(rng)) {
        v(i, 0) = kAbsent;
      } else {
        v(i, 0) = z(rng);
        sum += v(i, 0);
        ++present;
      }
    }
    auto m = matrix({"x"}, v);
    impute_mean(m, 0);
    CHECK_FALSE(m.has_absent());
    CHECK(m.values.col(0).mean() == Approx(sum / present).margin(1e-12));
  }
}

TEST_CASE("prepare imputes then reverse-scores flagged columns", "[dataset]") {
  Eigen::MatrixXd v(3, 2);
  v << 1, 10, 2, kAbsent, 3, 30;
  auto m = matrix({"forks", "cmc_rank"}, v);
  CHECK(m.columns[1].reverse_scored);
  prepare(m);
  CHECK(m.values.col(0) == Eigen::Vector3d(1, 2, 3));
  CHECK(m.values.col(1) == Eigen::Vector3d(30, 20, 10));
  CHECK(m.columns[1].imputed_cells == std::set<std::size_t>{1});
}

TEST_CASE("reverse-scored set", "[dataset]") {
  const auto& r = default_reverse_scored();
  CHECK(r.size() == 6);
  for (const char* name : {"months_since_update", "cmc_rank", "geo_rmse", "alexa_rank", "median_response_days",
                           "average_response_days"})
    CHECK(r.count(name) == 1);
  CHECK(efa_candidate_columns().size() == 11);
}

TEST_CASE("describe", "[dataset]") {
  Eigen::MatrixXd v(4, 2);
  v << 1, 7, 2, 7, 3, 7, 4, 7;
  auto s = describe(matrix({"a", "b"}, v));
  CHECK(s[0].mean == 2.5);
  CHECK(s[0].median == 2.5);
  CHECK(s[0].min == 1);
  CHECK(s[0].max == 4);
  CHECK(s[0].q1 == 1.75);
  CHECK(s[0].q3 == 3.25);
  CHECK(s[0].sd == Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s[1].sd == 0);
  CHECK(s[1].q1 == 7);
  CHECK(s[1].median == 7);
  Eigen::MatrixXd one(1, 1);
  one << 3;
  CHECK_THROWS_AS(describe(matrix({"a"}, one)), ArgumentError);
}

TEST_CASE("split sizes and determinism", "[dataset]") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Random(384, 2);
  auto m = matrix({"a", "b"}, v);
  auto s = split(m, 0.51, 42);
  CHECK(s.train.n() == 196);
  CHECK(s.test.n() == 188);
  auto again = split(m, 0.51, 42);
  CHECK(again.train_rows == s.train_rows);
  CHECK(split(m, 0.51, 43).train_rows != s.train_rows);

  auto two = matrix({"a"}, Eigen::MatrixXd::Ones(2, 1));
  auto t = split(two, 0.5, 1);
  CHECK(t.train.n() == 1);
  CHECK(t.test.n() == 1);
  CHECK_THROWS_AS(split(two, 0.1, 1), ArgumentError);
  CHECK_THROWS_AS(split(two, 1.0, 1), ArgumentError);
}

TEST_CASE("split partitions the rows", "[dataset][property]") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng() % 200;
    auto m = matrix({"a"}, Eigen::MatrixXd::Random(static_cast<Eigen::Index>(n), 1));
    double f = 0.05 + 0.9 * std::uniform_real_distribution<double>()(rng);
    Split s;
    try {
      s = split(m, f, rng());
    } catch (const ArgumentError&) {
      continue;  // one side would be empty
    }
    std::vector<std::size_t> all = s.train_rows;
    all.insert(all.end(), s.test_rows.begin(), s.test_rows.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
    CHECK(all.size() == n);
    for (std::size_t k = 0; k < s.train_rows.size(); ++k)
      CHECK(s.train.values(static_cast<Eigen::Index>(k), 0) ==
            m.values(static_cast<Eigen::Index>(s.train_rows[k]), 0));
  }
}

TEST_CASE("exclusion accounting", "[dataset]") {
  using S = ingest::ResolutionStatus;
  std::vector<ingest::RepoResolution> rs = {res(S::Resolved, "a/a"), res(S::Resolved, "b/b"),
                                            res(S::Missing404),      res(S::PrivateListed),
                                            res(S::NotListed),       res(S::ForeignHost),
                                            res(S::Duplicate, "a/a"), res(S::Resolved, "c/c")};
  std::map<std::string, bool> hist = {{"a/a", true}, {"b/b", false}, {"c/c", true}};
  auto out = apply_exclusions(rs, hist);
  CHECK(out.retained == std::vector<std::string>{"a/a", "c/c"});
  ExclusionReport expect{1, 1, 1, 1, 1, 1, 2};
  CHECK(out.report == expect);
  CHECK(out.report.total() == rs.size());

  std::vector<ingest::RepoResolution> ok = {res(S::Resolved, "a/a"), res(S::Resolved, "c/c")};
  auto all = apply_exclusions(ok, hist);
  CHECK(all.report.retained == 2);
  CHECK(all.report.total() == 2);

  std::vector<ingest::RepoResolution> unknown = {res(S::Resolved, "z/z")};
  CHECK_THROWS_AS(apply_exclusions(unknown, hist), ArgumentError);
}

TEST_CASE("exclusion buckets partition random inputs", "[dataset][property]") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ingest::RepoResolution> rs;
    std::map<std::string, bool> hist;
    std::size_t n = rng() % 50;
    for (std::size_t i = 0; i < n; ++i) {
      auto s = static_cast<ingest::ResolutionStatus>(rng() % 6);
      std::string repo = "r/" + std::to_string(i);
      rs.push_back(res(s, repo));
      hist[repo] = rng() % 3 != 0;
    }
    auto out = apply_exclusions(rs, hist);
    CHECK(out.report.total() == n);
    CHECK(out.retained.size() == out.report.retained);
  }
}

TEST_CASE("matrix csv round trip", "[dataset]") {
  std::istringstream in("repo_id,forks,cmc_rank,as_of\na/b,1,,2019-01-01T00:00:00Z\nc/d,2.5,7,2019-01-01T00:00:00Z\n");
  auto m = read_matrix_csv(in);
  REQUIRE(m.p() == 2);
  CHECK(m.column_names() == std::vector<std::string>{"forks", "cmc_rank"});
  CHECK(m.columns[1].reverse_scored);
  CHECK(is_absent(m.values(0, 1)));
  std::ostringstream out;
  write_matrix_csv(out, m);
  CHECK(out.str() == "repo_id,forks,cmc_rank\na/b,1,\nc/d,2.5,7\n");

  std::istringstream bad("repo_id,forks\na/b,abc\n");
  CHECK_THROWS_AS(read_matrix_csv(bad), ParseError);
  std::istringstream missing("repo_id,forks\na/b,1\n");
  CHECK_THROWS_AS(read_matrix_csv(missing, {"stars"}), ArgumentError);
}

TEST_CASE("audit sidecar lists imputed cells", "[dataset]") {
  Eigen::MatrixXd v(3, 1);
  v << 1, kAbsent, 3;
  auto m = matrix({"forks"}, v);
  prepare(m);
  ExclusionReport rep{0, 0, 0, 0, 0, 1, 3};
  std::ostringstream out;
  write_audit_jsonl(out, m, &rep);
  std::istringstream lines(out.str());
  std::string first, second;
  std::getline(lines, first);
  std::getline(lines, second);
  auto a = nlohmann::json::parse(first);
  auto b = nlohmann::json::parse(second);
  CHECK(a["kind"] == "exclusion_report");
  CHECK(a["dead_no_history"] == 1);
  CHECK(b["kind"] == "imputed");
  CHECK(b["row"] == "r1");
  CHECK(b["value"] == 2.0);
}
