#pragma once

#include <cmath>
#include <istream>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/ingest/event.hpp"
#include "oshealth/util/csv.hpp"
#include "oshealth/util/format.hpp"

namespace oshealth::metrics {

struct CriticalitySignal {
  std::string name;
  double value = 0;      // S, non-negative
  double weight = 1;     // alpha, positive
  double threshold = 1;  // T, positive
};

using CriticalitySignals = std::vector<CriticalitySignal>;

/// Weight and threshold for one signal, as read from the config file.
struct SignalSpec {
  std::string name;
  double weight = 1;
  double threshold = 1;
};

/// Weighted mean of log-saturated signals:
///   C = sum_i a_i * log(1 + S_i) / log(1 + max(S_i, T_i)) / sum_i a_i
inline double criticality_score(std::span<const CriticalitySignal> signals) {
  if (signals.empty()) throw ArgumentError("criticality score needs at least one signal");
  double num = 0, den = 0;
  for (const auto& s : signals) {
    if (!(s.weight > 0)) throw ArgumentError("criticality weight for '" + s.name + "' must be positive");
    if (!(s.threshold > 0))
      throw ArgumentError("criticality threshold for '" + s.name + "' must be positive");
    if (s.value < 0 || !std::isfinite(s.value))
      throw ArgumentError("criticality signal '" + s.name + "' must be a non-negative number");
    num += s.weight * std::log1p(s.value) / std::log1p(std::max(s.value, s.threshold));
    den += s.weight;
  }
  return num / den;
}

/// Defaults follow the OSSF criticality_score weights and thresholds for the
/// four signals recoverable from the event store.
inline std::vector<SignalSpec> default_signal_specs() {
  return {{"commit_frequency", 1.0, 1000.0},
          {"recent_releases", 0.5, 26.0},
          {"contributor_count", 2.0, 5000.0},
          {"comment_frequency", 1.0, 15.0}};
}

/// Config lines: `name = weight, threshold`; `#` comments.
inline std::vector<SignalSpec> read_signal_specs(std::istream& in) {
  std::vector<SignalSpec> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = util::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    auto comma = line.find(',', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || comma == std::string::npos)
      throw ParseError("expected 'name = weight, threshold'", line_no, 1);
    SignalSpec s;
    s.name = util::trim(line.substr(0, eq));
    auto w = util::parse_optional_double(line.substr(eq + 1, comma - eq - 1));
    auto t = util::parse_optional_double(line.substr(comma + 1));
    if (s.name.empty() || !w || !t) throw ParseError("expected 'name = weight, threshold'", line_no, 1);
    if (*w <= 0 || *t <= 0) throw ParseError("weight and threshold must be positive", line_no, eq + 1);
    if (!seen.insert(s.name).second) throw ParseError("duplicate signal '" + s.name + "'", line_no, 1);
    s.weight = *w;
    s.threshold = *t;
    out.push_back(s);
  }
  if (out.empty()) throw ArgumentError("criticality config defines no signals");
  return out;
}

/// Raw signal values computed from one repository's events as of `as_of`:
///  - commit_frequency: commits per week over the last year
///  - recent_releases: merged pull requests in the last year (release proxy)
///  - contributor_count: distinct push / pull request actors, all time
///  - comment_frequency: issue comments per touched issue, last 90 days
/// Names outside this set must be supplied externally and evaluate to 0 here.
inline CriticalitySignals compute_criticality_signals(std::span<const ingest::EventRecord> events,
                                                      Timestamp as_of,
                                                      std::span<const SignalSpec> specs) {
  using ingest::EventType;
  const Timestamp year_start = as_of - 365 * kSecondsPerDay;
  const Timestamp quarter_start = as_of - 90 * kSecondsPerDay;
  double commits = 0, merged = 0, comments = 0;
  std::unordered_set<std::string> contributors;
  std::unordered_set<std::int64_t> issues;
  for (const auto& e : events) {
    if (e.created_at >= as_of) continue;
    if ((e.type == EventType::Push || e.type == EventType::PullRequest) && !e.actor.empty())
      contributors.insert(e.actor);
    if (e.created_at >= year_start) {
      if (e.type == EventType::Push) commits += static_cast<double>(e.count.value_or(0));
      if (e.type == EventType::PullRequest && e.action == "merged") merged += 1;
    }
    if (e.created_at >= quarter_start && e.type == EventType::IssueComment) {
      comments += 1;
      if (e.number) issues.insert(*e.number);
    }
  }
  CriticalitySignals out;
  for (const auto& s : specs) {
    double v = 0;
    if (s.name == "commit_frequency") v = commits / 52.0;
    else if (s.name == "recent_releases") v = merged;
    else if (s.name == "contributor_count") v = static_cast<double>(contributors.size());
    else if (s.name == "comment_frequency")
      v = comments / static_cast<double>(std::max<std::size_t>(issues.size(), 1));
    out.push_back({s.name, v, s.weight, s.threshold});
  }
  return out;
}

}  // namespace oshealth::metrics
