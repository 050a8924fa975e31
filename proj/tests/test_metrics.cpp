#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "oshealth/ingest/archive.hpp"
#include "oshealth/metrics/criticality.hpp"
#include "oshealth/metrics/metrics.hpp"
#include "support.hpp"

using namespace oshealth;
using namespace oshealth::metrics;
using ingest::EventRecord;
using ingest::EventType;
using Catch::Approx;

namespace {

constexpr Timestamp kDay = 86400;
const Timestamp kAsOf = util::parse_timestamp_or_throw("2019-06-01T00:00:00Z");

EventRecord make(EventType t, Timestamp at, std::string actor = "a") {
  EventRecord e;
  e.repo_id = "o/r";
  e.type = t;
  e.created_at = at;
  e.actor = std::move(actor);
  return e;
}

EventRecord issue(const char* action, std::int64_t number, Timestamp at) {
  auto e = make(EventType::Issues, at);
  e.action = action;
  e.number = number;
  return e;
}

EventRecord with_tz(int minutes, Timestamp at) {
  auto e = make(EventType::Push, at);
  e.tz_offset = static_cast<std::int16_t>(minutes);
  return e;
}

std::vector<EventRecord> fixture_events() {
  std::istringstream in(testsupport::gzip(testsupport::slurp(testsupport::fixture("events12.jsonl"))));
  return ingest::parse_archive_stream(in).events;
}

}  // namespace

TEST_CASE("stars and forks from the fixture", "[metrics]") {
  auto ev = fixture_events();
  CHECK(count_stars(ev) == 3);
  CHECK(count_forks(ev) == 2);
}

TEST_CASE("issue response times", "[metrics]") {
  CHECK(issue_response_times({}).median_days == 0.0);
  CHECK(issue_response_times({}).average_days == 0.0);
  std::vector<EventRecord> ev = {issue("opened", 1, 0),          issue("closed", 1, 1 * kDay),
                                 issue("opened", 2, 10 * kDay),  issue("closed", 2, 12 * kDay),
                                 issue("opened", 3, 20 * kDay),  issue("closed", 3, 29 * kDay),
                                 issue("opened", 4, 30 * kDay)};
  auto rt = issue_response_times(ev);
  CHECK(rt.median_days == Approx(2.0).margin(1e-12));
  CHECK(rt.average_days == Approx(4.0).margin(1e-12));

  // reopened issue keeps its first close; input order does not matter
  std::vector<EventRecord> re = {issue("closed", 5, 9 * kDay), issue("reopened", 5, 4 * kDay),
                                 issue("closed", 5, 3 * kDay), issue("opened", 5, 0)};
  CHECK(issue_response_times(re).median_days == Approx(3.0));
}

TEST_CASE("months since update", "[metrics]") {
  std::vector<EventRecord> ev = {make(EventType::Push, kAsOf)};
  CHECK(months_since_update(ev, kAsOf) == 0);
  ev[0].created_at = kAsOf - 65 * kDay;
  CHECK(months_since_update(ev, kAsOf) == 2);
  std::vector<EventRecord> watch = {make(EventType::Watch, kAsOf - kDay)};
  CHECK_FALSE(months_since_update(watch, kAsOf).has_value());
}

TEST_CASE("longevity", "[metrics]") {
  CHECK(longevity({}) == 0.0);
  std::vector<EventRecord> ev = {make(EventType::Push, 0, "x"), make(EventType::Push, 10 * kDay, "x"),
                                 make(EventType::IssueComment, 5 * kDay, "y"),
                                 make(EventType::Watch, 100 * kDay, "x")};
  // x spans 10 days, y spans 0; watch events are not contributions
  CHECK(longevity(ev) == Approx(5.0));
}

TEST_CASE("engagement over the last three months", "[metrics]") {
  CHECK(engagement_metrics({}, kAsOf) == EngagementMetrics{});
  std::vector<EventRecord> ev;
  for (int i = 0; i < 3; ++i) {
    auto p = make(EventType::Push, kAsOf - (i + 1) * kDay, "u" + std::to_string(i));
    p.count = 3;
    ev.push_back(p);
    ev.push_back(make(EventType::IssueComment, kAsOf - 2 * kDay, "u" + std::to_string(i)));
    ev.push_back(make(EventType::CommitComment, kAsOf - 2 * kDay, "u" + std::to_string(i)));
    auto pr = make(EventType::PullRequest, kAsOf - 3 * kDay, "u" + std::to_string(i));
    pr.action = "opened";
    ev.push_back(pr);
  }
  // outside the window
  auto old = make(EventType::Push, kAsOf - 100 * kDay, "zz");
  old.count = 50;
  ev.push_back(old);
  ev.push_back(make(EventType::IssueComment, kAsOf, "zz"));
  auto m = engagement_metrics(ev, kAsOf);
  CHECK(m.commits == Approx(3.0));
  CHECK(m.comments == Approx(2.0));
  CHECK(m.pull_requests == Approx(1.0));
  CHECK(m.authors == Approx(1.0));
}

TEST_CASE("mentions are whole-token and case-insensitive", "[metrics]") {
  std::vector<std::string> corpus = {"fix bitcoin bug", "Bitcoin rocks", "bitcoind sync"};
  CHECK(count_mentions(corpus, {"bitcoin"}) == 2);
  CHECK(count_mentions({}, {"bitcoin"}) == 0);
  CHECK_THROWS_AS(count_mentions(corpus, {"  "}), ArgumentError);

  MentionCounter mc;
  auto cash = mc.add_project({"Bitcoin Cash", "BCH"});
  auto btc = mc.add_project({"Bitcoin", "BTC"});
  mc.scan("bitcoin cash fork; bch and btc");
  CHECK(mc.count(cash) == 2);
  CHECK(mc.count(btc) == 2);
}

TEST_CASE("criticality score", "[metrics][criticality]") {
  std::vector<CriticalitySignal> zero = {{"a", 0, 1, 10}, {"b", 0, 2, 5}};
  CHECK(criticality_score(zero) == 0.0);
  std::vector<CriticalitySignal> sat = {{"a", 20, 1, 10}, {"b", 5, 2, 5}};
  CHECK(criticality_score(sat) == Approx(1.0));
  std::vector<CriticalitySignal> one = {{"a", 9, 1, 99}};
  CHECK(criticality_score(one) == Approx(0.5).margin(1e-12));
  CHECK_THROWS_AS(criticality_score({}), ArgumentError);
  std::vector<CriticalitySignal> bad = {{"a", 1, 0, 1}};
  CHECK_THROWS_AS(criticality_score(bad), ArgumentError);
  std::vector<CriticalitySignal> badt = {{"a", 1, 1, -1}};
  CHECK_THROWS_AS(criticality_score(badt), ArgumentError);
}

TEST_CASE("criticality is bounded and monotone", "[metrics][criticality][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 200.0), w(0.1, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<CriticalitySignal> s = {{"a", u(rng), w(rng), u(rng) + 1}, {"b", u(rng), w(rng), u(rng) + 1}};
    double c = criticality_score(s);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0 + 1e-12);
    auto bumped = s;
    bumped[0].value = std::min(s[0].value + 1.0, std::max(s[0].value, s[0].threshold));
    CHECK(criticality_score(bumped) >= c - 1e-12);
  }
}

TEST_CASE("criticality signal config", "[metrics][criticality]") {
  std::ifstream in(testsupport::fixture("criticality.cfg"));
  auto specs = read_signal_specs(in);
  REQUIRE(specs.size() == 4);
  CHECK(specs[2].name == "contributor_count");
  CHECK(specs[2].weight == 2.0);
  std::istringstream bad("x = 1\n");
  CHECK_THROWS_AS(read_signal_specs(bad), ParseError);
  std::istringstream neg("x = -1, 2\n");
  CHECK_THROWS_AS(read_signal_specs(neg), ParseError);
}

TEST_CASE("timezone histograms", "[metrics][timezone]") {
  auto empty = timezone_histogram({}, 0, kAsOf);
  CHECK(empty.total == 0);
  for (double b : empty.bins) CHECK(b == 0.0);

  std::vector<EventRecord> utc(4, with_tz(0, kAsOf - kDay));
  auto h = timezone_histogram(utc, 0, kAsOf);
  CHECK(h.bins[timezone_bin(0)] == 1.0);

  std::vector<EventRecord> mixed = {with_tz(60, kAsOf - kDay), with_tz(60, kAsOf - kDay),
                                    with_tz(-300, kAsOf - kDay), with_tz(-300, kAsOf - kDay)};
  auto m = timezone_histogram(mixed, 0, kAsOf);
  CHECK(m.bins[timezone_bin(60)] == 0.5);
  CHECK(m.bins[timezone_bin(-300)] == 0.5);
  CHECK(timezone_bin(-720) == 0);
  CHECK(timezone_bin(660) == 23);
  CHECK(timezone_bin(330) == timezone_bin(300));
  CHECK(timezone_bin(840) == timezone_bin(-600));
}

TEST_CASE("median distribution", "[metrics][timezone]") {
  CHECK_THROWS_AS(median_distribution({}), ArgumentError);
  TimezoneHistogram a, b, c;
  a.bins[0] = 0.2;
  a.bins[1] = 0.8;
  b.bins[0] = 0.4;
  b.bins[1] = 0.6;
  c.bins[0] = 0.6;
  c.bins[1] = 0.4;
  a.total = b.total = c.total = 5;
  std::vector<TimezoneHistogram> one = {a};
  CHECK(median_distribution(one).bins == a.bins);
  std::vector<TimezoneHistogram> three = {a, b, c};
  auto m = median_distribution(three);
  // medians 0.4 and 0.6 already sum to 1
  CHECK(m.bins[0] == Approx(0.4));
  CHECK(m.bins[1] == Approx(0.6));

  TimezoneHistogram d;
  d.bins[0] = 1.0;
  d.bins[2] = 0.0;
  d.total = 1;
  std::vector<TimezoneHistogram> two = {a, d};
  auto m2 = median_distribution(two);
  // means 0.6 / 0.4, sum 1
  CHECK(m2.bins[0] == Approx(0.6));
  CHECK(m2.bins[1] == Approx(0.4));

  TimezoneHistogram z;
  std::vector<TimezoneHistogram> with_zero = {a, z};
  CHECK(median_distribution(with_zero).bins == a.bins);
}

TEST_CASE("geographic rmse", "[metrics][timezone]") {
  TimezoneHistogram uniform, spike;
  for (double& b : uniform.bins) b = 1.0 / 24.0;
  spike.bins[5] = 1.0;
  CHECK(geo_rmse(uniform, uniform) == 0.0);
  double expected = std::sqrt((1.0 / 24.0) * (std::pow(23.0 / 24.0, 2) + 23.0 * std::pow(1.0 / 24.0, 2)));
  CHECK(geo_rmse(spike, uniform) == Approx(expected).margin(1e-12));
  CHECK(geo_rmse(spike, uniform) == Approx(0.1999).margin(1e-4));
}

TEST_CASE("metrics row composition", "[metrics]") {
  auto ev = fixture_events();
  Timestamp as_of = util::parse_timestamp_or_throw("2019-03-10T00:00:00Z");
  ExternalInputs ext;
  ext.cmc_rank = 1;
  ext.mentions = 4;
  ext.criticality = compute_criticality_signals(ev, as_of, default_signal_specs());
  TimezoneHistogram ref;
  for (double& b : ref.bins) b = 1.0 / 24.0;
  auto row = build_metrics_row("bitcoin/bitcoin", ev, ext, ref, as_of);
  CHECK(row.stars == 3);
  CHECK(row.forks == 2);
  CHECK(row.mentions == 4);
  CHECK(row.cmc_rank == 1);
  CHECK_FALSE(row.alexa_rank.has_value());
  CHECK(row.months_since_update == 0);
  CHECK(row.longevity_days == Approx(longevity(ev)));
  CHECK(row.geo_rmse == Approx(geo_rmse(recent_timezone_histogram(ev, as_of), ref)));
  CHECK(row.commits_3mo == Approx(1.0));
  CHECK(row.comments_3mo == Approx(2.0 / 3.0));
  CHECK(*row.criticality == Approx(criticality_score(*ext.criticality)));
  CHECK(build_metrics_row("bitcoin/bitcoin", ev, ext, ref, as_of) == row);

  auto blank = build_metrics_row("x/y", {}, {}, TimezoneHistogram{}, as_of);
  CHECK(blank.stars == 0);
  CHECK_FALSE(blank.criticality.has_value());
  CHECK_FALSE(blank.months_since_update.has_value());
  CHECK(blank.geo_rmse == 0.0);
}

TEST_CASE("metrics csv and ranks", "[metrics]") {
  ProjectMetrics m;
  m.repo_id = "a/b";
  m.stars = 3;
  m.geo_rmse = 0.125;
  std::ostringstream out;
  std::vector<ProjectMetrics> rows = {m};
  write_metrics_csv(out, rows);
  auto text = out.str();
  CHECK(text.rfind("repo_id,stars,forks,mentions,criticality", 0) == 0);
  CHECK(text.find("a/b,3,0,,,0.125,") != std::string::npos);

  std::istringstream ranks("repo_id,cmc_rank,alexa_rank\na/b,1,\nc/d,2,300\n");
  auto r = read_ranks(ranks);
  CHECK(r.at("a/b").cmc_rank == 1);
  CHECK_FALSE(r.at("a/b").alexa_rank.has_value());
  CHECK(r.at("c/d").alexa_rank == 300);
  std::istringstream bad("repo_id,cmc_rank,alexa_rank\na/b,0,\n");
  CHECK_THROWS_AS(read_ranks(bad), ArgumentError);
}
