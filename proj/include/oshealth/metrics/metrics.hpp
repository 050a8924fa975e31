#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/ingest/event.hpp"
#include "oshealth/metrics/criticality.hpp"
#include "oshealth/metrics/timezone.hpp"
#include "oshealth/util/csv.hpp"
#include "oshealth/util/format.hpp"
#include "oshealth/util/time.hpp"

namespace oshealth::metrics {

using ingest::EventRecord;
using ingest::EventType;

/// Length of a month for month arithmetic on timestamps.
inline constexpr double kDaysPerMonth = 30.44;
inline constexpr double kSecondsPerMonth = kDaysPerMonth * kSecondsPerDay;

inline Timestamp months_before(Timestamp t, int months) {
  return t - static_cast<Timestamp>(std::llround(months * kSecondsPerMonth));
}

/// One project's indicator row.
struct ProjectMetrics {
  std::string repo_id;
  std::int64_t stars = 0;
  std::int64_t forks = 0;
  std::optional<std::int64_t> mentions;
  std::optional<double> criticality;
  double geo_rmse = 0;
  double longevity_days = 0;
  std::optional<std::int64_t> months_since_update;
  double median_response_days = 0;
  double average_response_days = 0;
  std::optional<std::int64_t> cmc_rank;
  std::optional<std::int64_t> alexa_rank;
  double commits_3mo = 0;
  double comments_3mo = 0;
  double pull_requests_3mo = 0;
  double authors_3mo = 0;
  Timestamp as_of = 0;

  bool operator==(const ProjectMetrics&) const = default;
};

inline std::int64_t count_type(std::span<const EventRecord> events, EventType type) {
  return std::count_if(events.begin(), events.end(), [&](const auto& e) { return e.type == type; });
}

/// Watch events, all time. Un-stars are not netted out.
inline std::int64_t count_stars(std::span<const EventRecord> events) {
  return count_type(events, EventType::Watch);
}

inline std::int64_t count_forks(std::span<const EventRecord> events) {
  return count_type(events, EventType::Fork);
}

/// Lower-cased alphanumeric tokens of `text`.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string tok;
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      tok.push_back(static_cast<char>(std::tolower(u)));
    } else if (!tok.empty()) {
      out.push_back(std::move(tok));
      tok.clear();
    }
  }
  if (!tok.empty()) out.push_back(std::move(tok));
  return out;
}

/// Streaming whole-token alias matcher for many projects at once. Multi-word
/// aliases ("bitcoin cash") match as consecutive token runs.
class MentionCounter {
 public:
  /// Registers a project; returns its index. Empty alias sets are rejected.
  std::size_t add_project(const std::vector<std::string>& aliases) {
    std::vector<std::vector<std::string>> seqs;
    for (const auto& a : aliases) {
      auto toks = tokenize(a);
      if (!toks.empty() && std::find(seqs.begin(), seqs.end(), toks) == seqs.end())
        seqs.push_back(std::move(toks));
    }
    if (seqs.empty()) throw ArgumentError("mention matching needs at least one non-empty alias");
    std::size_t id = counts_.size();
    counts_.push_back(0);
    for (auto& s : seqs) {
      std::string head = s.front();
      index_[head].push_back({id, std::move(s)});
    }
    return id;
  }

  void scan(std::string_view text) {
    auto toks = tokenize(text);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      auto it = index_.find(toks[i]);
      if (it == index_.end()) continue;
      for (const auto& [id, seq] : it->second) {
        if (i + seq.size() > toks.size()) continue;
        if (std::equal(seq.begin(), seq.end(), toks.begin() + static_cast<std::ptrdiff_t>(i)))
          ++counts_[id];
      }
    }
  }

  std::int64_t count(std::size_t project) const { return counts_.at(project); }

 private:
  struct Alias {
    std::size_t project;
    std::vector<std::string> tokens;
  };
  std::unordered_map<std::string, std::vector<Alias>> index_;
  std::vector<std::int64_t> counts_;
};

/// Case-insensitive whole-token occurrences of any alias across `corpus`.
inline std::int64_t count_mentions(std::span<const std::string> corpus,
                                   const std::vector<std::string>& aliases) {
  MentionCounter counter;
  auto id = counter.add_project(aliases);
  for (const auto& text : corpus) counter.scan(text);
  return counter.count(id);
}

/// Mean per-actor span, in days, between first and last contribution.
inline double longevity(std::span<const EventRecord> events) {
  std::map<std::string, std::pair<Timestamp, Timestamp>> spans;
  for (const auto& e : events) {
    if (!ingest::is_contribution(e.type) || e.actor.empty()) continue;
    auto [it, fresh] = spans.try_emplace(e.actor, e.created_at, e.created_at);
    if (!fresh) {
      it->second.first = std::min(it->second.first, e.created_at);
      it->second.second = std::max(it->second.second, e.created_at);
    }
  }
  if (spans.empty()) return 0.0;
  double sum = 0;
  for (const auto& [actor, s] : spans)
    sum += static_cast<double>(s.second - s.first) / kSecondsPerDay;
  return sum / static_cast<double>(spans.size());
}

/// Whole months since the last push or pull request; nullopt if there was none.
inline std::optional<std::int64_t> months_since_update(std::span<const EventRecord> events,
                                                       Timestamp as_of) {
  std::optional<Timestamp> last;
  for (const auto& e : events) {
    if (e.type != EventType::Push && e.type != EventType::PullRequest) continue;
    if (e.created_at > as_of) continue;
    if (!last || e.created_at > *last) last = e.created_at;
  }
  if (!last) return std::nullopt;
  return static_cast<std::int64_t>(std::floor(static_cast<double>(as_of - *last) / kSecondsPerMonth));
}

struct ResponseTimes {
  double median_days = 0;
  double average_days = 0;
};

/// Open-to-first-close delay per issue number. Re-opened issues keep their
/// first close; issues never closed are ignored.
inline ResponseTimes issue_response_times(std::span<const EventRecord> events) {
  std::vector<const EventRecord*> issues;
  for (const auto& e : events)
    if (e.type == EventType::Issues && e.number && e.action) issues.push_back(&e);
  std::stable_sort(issues.begin(), issues.end(),
                   [](const auto* a, const auto* b) { return a->created_at < b->created_at; });
  std::map<std::int64_t, Timestamp> opened;
  std::map<std::int64_t, double> closed;
  for (const auto* e : issues) {
    if (*e->action == "opened") {
      opened.try_emplace(*e->number, e->created_at);
    } else if (*e->action == "closed") {
      auto it = opened.find(*e->number);
      if (it != opened.end() && !closed.count(*e->number))
        closed[*e->number] = static_cast<double>(e->created_at - it->second) / kSecondsPerDay;
    }
  }
  if (closed.empty()) return {};
  std::vector<double> d;
  for (const auto& [n, days] : closed) d.push_back(days);
  std::sort(d.begin(), d.end());
  double sum = 0;
  for (double v : d) sum += v;
  std::size_t n = d.size();
  double median = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return {median, sum / static_cast<double>(n)};
}

struct EngagementMetrics {
  double commits = 0;
  double comments = 0;
  double pull_requests = 0;
  double authors = 0;

  bool operator==(const EngagementMetrics&) const = default;
};

/// Monthly averages over the three months before `as_of`.
inline EngagementMetrics engagement_metrics(std::span<const EventRecord> events, Timestamp as_of) {
  const Timestamp start = months_before(as_of, 3);
  double commits = 0, comments = 0, prs = 0;
  std::unordered_set<std::string> authors;
  for (const auto& e : events) {
    if (e.created_at < start || e.created_at >= as_of) continue;
    bool counted = false;
    if (e.type == EventType::Push) {
      commits += static_cast<double>(e.count.value_or(0));
      counted = true;
    } else if (ingest::is_comment(e.type)) {
      comments += 1;
      counted = true;
    } else if (e.type == EventType::PullRequest && e.action == "opened") {
      prs += 1;
      counted = true;
    }
    if (counted && !e.actor.empty()) authors.insert(e.actor);
  }
  return {commits / 3.0, comments / 3.0, prs / 3.0, static_cast<double>(authors.size()) / 3.0};
}

/// Inputs that do not come from the repository's own events.
struct ExternalInputs {
  std::optional<std::int64_t> cmc_rank;
  std::optional<std::int64_t> alexa_rank;
  std::optional<CriticalitySignals> criticality;
  std::optional<std::int64_t> mentions;
};

/// Window used for the timezone histogram: the six months before `as_of`.
inline TimezoneHistogram recent_timezone_histogram(std::span<const EventRecord> events,
                                                   Timestamp as_of) {
  return timezone_histogram(events, months_before(as_of, 6), as_of);
}

inline ProjectMetrics build_metrics_row(const std::string& repo_id,
                                        std::span<const EventRecord> events,
                                        const ExternalInputs& externals,
                                        const TimezoneHistogram& reference, Timestamp as_of) {
  ProjectMetrics m;
  m.repo_id = repo_id;
  m.as_of = as_of;
  m.stars = count_stars(events);
  m.forks = count_forks(events);
  m.mentions = externals.mentions;
  if (externals.criticality) m.criticality = criticality_score(*externals.criticality);
  m.geo_rmse = geo_rmse(recent_timezone_histogram(events, as_of), reference);
  m.longevity_days = longevity(events);
  m.months_since_update = months_since_update(events, as_of);
  auto rt = issue_response_times(events);
  m.median_response_days = rt.median_days;
  m.average_response_days = rt.average_days;
  m.cmc_rank = externals.cmc_rank;
  m.alexa_rank = externals.alexa_rank;
  auto eng = engagement_metrics(events, as_of);
  m.commits_3mo = eng.commits;
  m.comments_3mo = eng.comments;
  m.pull_requests_3mo = eng.pull_requests;
  m.authors_3mo = eng.authors;
  return m;
}

// ---- files -----------------------------------------------------------------

inline const std::vector<std::string>& metrics_csv_header() {
  static const std::vector<std::string> h = {
      "repo_id",          "stars",          "forks",        "mentions",
      "criticality",      "geo_rmse",       "longevity_days", "months_since_update",
      "median_response_days", "average_response_days", "cmc_rank", "alexa_rank",
      "commits_3mo",      "comments_3mo",   "pull_requests_3mo", "authors_3mo",
      "as_of"};
  return h;
}

namespace detail {
template <typename T>
std::string cell(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_floating_point_v<T>) return util::format_double(*v);
  else return std::to_string(*v);
}
}  // namespace detail

inline void write_metrics_csv(std::ostream& out, std::span<const ProjectMetrics> rows) {
  using util::format_double;
  util::write_csv_row(out, metrics_csv_header());
  for (const auto& m : rows) {
    util::write_csv_row(out, {m.repo_id, std::to_string(m.stars), std::to_string(m.forks),
                              detail::cell(m.mentions), detail::cell(m.criticality),
                              format_double(m.geo_rmse), format_double(m.longevity_days),
                              detail::cell(m.months_since_update),
                              format_double(m.median_response_days),
                              format_double(m.average_response_days), detail::cell(m.cmc_rank),
                              detail::cell(m.alexa_rank), format_double(m.commits_3mo),
                              format_double(m.comments_3mo), format_double(m.pull_requests_3mo),
                              format_double(m.authors_3mo), util::format_timestamp(m.as_of)});
  }
}

struct RankRow {
  std::optional<std::int64_t> cmc_rank;
  std::optional<std::int64_t> alexa_rank;
};

inline std::optional<std::int64_t> parse_rank(const std::string& cell, const std::string& what) {
  auto v = util::parse_optional_double(cell);
  if (!v) return std::nullopt;
  if (*v <= 0 || std::floor(*v) != *v) throw ArgumentError(what + " must be a positive integer");
  return static_cast<std::int64_t>(*v);
}

/// Reads `repo_id,cmc_rank,alexa_rank`; empty cells are absent.
inline std::map<std::string, RankRow> read_ranks(std::istream& in) {
  auto t = util::read_csv(in);
  auto c_repo = t.require_column("repo_id"), c_cmc = t.require_column("cmc_rank"),
       c_alexa = t.require_column("alexa_rank");
  std::map<std::string, RankRow> out;
  for (const auto& row : t.rows) {
    std::string repo = util::trim(row[c_repo]);
    out[repo] = {parse_rank(row[c_cmc], "cmc_rank of " + repo),
                 parse_rank(row[c_alexa], "alexa_rank of " + repo)};
  }
  return out;
}

}  // namespace oshealth::metrics
