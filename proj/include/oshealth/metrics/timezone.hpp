#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/ingest/event.hpp"

namespace oshealth::metrics {

inline constexpr int kTimezoneBins = 24;

/// Share of activity per one-hour UTC-offset bucket. Bin k holds offset hour
/// k - 12, so bins run from UTC-12 to UTC+11; +12..+14 wrap onto -12..-10.
struct TimezoneHistogram {
  std::array<double, kTimezoneBins> bins{};
  std::size_t total = 0;

  bool operator==(const TimezoneHistogram&) const = default;
};

/// Half-hour offsets round toward zero (+5:30 -> +5, -3:30 -> -3).
inline int timezone_bin(int offset_minutes) {
  int hour = offset_minutes / 60;
  return ((hour + 12) % kTimezoneBins + kTimezoneBins) % kTimezoneBins;
}

inline TimezoneHistogram timezone_histogram(std::span<const ingest::EventRecord> events,
                                            Timestamp start, Timestamp end) {
  if (start > end) throw ArgumentError("timezone window start is after its end");
  TimezoneHistogram h;
  for (const auto& e : events) {
    if (!e.tz_offset || e.created_at < start || e.created_at >= end) continue;
    h.bins[static_cast<std::size_t>(timezone_bin(*e.tz_offset))] += 1.0;
    ++h.total;
  }
  if (h.total > 0)
    for (double& b : h.bins) b /= static_cast<double>(h.total);
  return h;
}

/// Per-bin median over histograms with activity, renormalized to sum 1.
inline TimezoneHistogram median_distribution(std::span<const TimezoneHistogram> histograms) {
  if (histograms.empty()) throw ArgumentError("median distribution needs at least one histogram");
  std::vector<const TimezoneHistogram*> used;
  for (const auto& h : histograms)
    if (h.total > 0) used.push_back(&h);
  TimezoneHistogram out;
  if (used.empty()) return out;
  std::vector<double> column(used.size());
  for (int b = 0; b < kTimezoneBins; ++b) {
    for (std::size_t i = 0; i < used.size(); ++i) column[i] = used[i]->bins[b];
    std::sort(column.begin(), column.end());
    std::size_t n = column.size();
    out.bins[b] = n % 2 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  double sum = 0;
  for (double v : out.bins) sum += v;
  for (const auto* h : used) out.total += h->total;
  if (sum > 0)
    for (double& v : out.bins) v /= sum;
  else
    out.total = 0;
  return out;
}

/// Root mean squared difference over the 24 bins.
inline double geo_rmse(const TimezoneHistogram& project, const TimezoneHistogram& reference) {
  double ss = 0;
  for (int b = 0; b < kTimezoneBins; ++b) {
    double d = project.bins[b] - reference.bins[b];
    ss += d * d;
  }
  return std::sqrt(ss / kTimezoneBins);
}

}  // namespace oshealth::metrics
