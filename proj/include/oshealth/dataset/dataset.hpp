#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oshealth/error.hpp"
#include "oshealth/ingest/resolve.hpp"
#include "oshealth/util/csv.hpp"
#include "oshealth/util/format.hpp"

namespace oshealth::dataset {

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

inline bool is_absent(double v) { return std::isnan(v); }

struct ColumnInfo {
  std::string name;
  bool reverse_scored = false;
  std::set<std::size_t> imputed_cells;  // row indices filled by imputation
};

/// n x p analysis matrix. Absent cells are NaN until imputed.
struct MetricMatrix {
  std::vector<std::string> rows;
  std::vector<ColumnInfo> columns;
  Eigen::MatrixXd values;

  std::size_t n() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(values.cols()); }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].name == name) return j;
    throw ArgumentError("no column named '" + name + "'");
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }

  bool has_absent() const { return values.array().isNaN().any(); }

  /// Sub-matrix with the named columns, in the given order.
  MetricMatrix select(const std::vector<std::string>& names) const {
    MetricMatrix out;
    out.rows = rows;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
      auto j = column_index(names[k]);
      out.columns.push_back(columns[j]);
      out.values.col(static_cast<Eigen::Index>(k)) = values.col(static_cast<Eigen::Index>(j));
    }
    return out;
  }
};

/// Metrics whose raw scale runs "smaller is healthier".
inline const std::set<std::string>& default_reverse_scored() {
  static const std::set<std::string> s = {"months_since_update",  "cmc_rank",
                                          "geo_rmse",             "alexa_rank",
                                          "median_response_days", "average_response_days"};
  return s;
}

/// The eleven candidate indicators considered for factor analysis.
inline const std::vector<std::string>& efa_candidate_columns() {
  static const std::vector<std::string> c = {
      "forks",       "stars",          "mentions",   "criticality",
      "months_since_update", "cmc_rank", "geo_rmse",  "longevity_days",
      "alexa_rank",  "median_response_days", "average_response_days"};
  return c;
}

// ---- exclusions ------------------------------------------------------------

struct ExclusionReport {
  std::size_t missing_404 = 0;
  std::size_t private_listed = 0;
  std::size_t not_listed = 0;
  std::size_t foreign_host = 0;
  std::size_t duplicates = 0;
  std::size_t dead_no_history = 0;
  std::size_t retained = 0;

  std::size_t total() const {
    return missing_404 + private_listed + not_listed + foreign_host + duplicates +
           dead_no_history + retained;
  }
  bool operator==(const ExclusionReport&) const = default;
};

struct ExclusionResult {
  std::vector<std::string> retained;  // repo ids, input order
  ExclusionReport report;
};

/// Drops unreachable, duplicate and never-worked-on repositories. Every
/// input lands in exactly one report bucket.
inline ExclusionResult apply_exclusions(std::span<const ingest::RepoResolution> resolutions,
                                        const std::map<std::string, bool>& has_history) {
  using S = ingest::ResolutionStatus;
  ExclusionResult out;
  for (const auto& r : resolutions) {
    switch (r.status) {
      case S::Missing404: ++out.report.missing_404; break;
      case S::PrivateListed: ++out.report.private_listed; break;
      case S::NotListed: ++out.report.not_listed; break;
      case S::ForeignHost: ++out.report.foreign_host; break;
      case S::Duplicate: ++out.report.duplicates; break;
      case S::Resolved: {
        auto it = has_history.find(r.repo_id);
        if (it == has_history.end())
          throw ArgumentError("no contribution-history flag for " + r.repo_id);
        if (it->second) {
          ++out.report.retained;
          out.retained.push_back(r.repo_id);
        } else {
          ++out.report.dead_no_history;
        }
        break;
      }
    }
  }
  return out;
}

// ---- column transforms -----------------------------------------------------

/// x' = max + min - x. Order-reversing, range-preserving, involutive.
/// Constant columns come back unchanged.
inline Eigen::VectorXd reverse_score(const Eigen::VectorXd& column) {
  if (column.size() == 0) return column;
  if (column.array().isNaN().any()) throw ArgumentError("reverse scoring needs a complete column");
  double lo = column.minCoeff(), hi = column.maxCoeff();
  if (lo == hi) return column;
  return ((hi + lo) - column.array()).matrix();
}

/// Fills absent cells of `column` with the mean of its present cells.
inline void impute_mean(MetricMatrix& m, std::size_t column) {
  auto col = m.values.col(static_cast<Eigen::Index>(column));
  double sum = 0;
  std::size_t present = 0;
  for (Eigen::Index i = 0; i < col.size(); ++i)
    if (!is_absent(col(i))) {
      sum += col(i);
      ++present;
    }
  if (present == 0 && col.size() > 0)
    throw ArgumentError("column '" + m.columns[column].name + "' has no values to impute from");
  double mean = present ? sum / static_cast<double>(present) : 0.0;
  for (Eigen::Index i = 0; i < col.size(); ++i)
    if (is_absent(col(i))) {
      col(i) = mean;
      m.columns[column].imputed_cells.insert(static_cast<std::size_t>(i));
    }
}

/// Imputation first, then reverse scoring of the flagged columns.
inline void prepare(MetricMatrix& m) {
  for (std::size_t j = 0; j < m.p(); ++j) impute_mean(m, j);
  for (std::size_t j = 0; j < m.p(); ++j)
    if (m.columns[j].reverse_scored)
      m.values.col(static_cast<Eigen::Index>(j)) =
          reverse_score(m.values.col(static_cast<Eigen::Index>(j)));
}

// ---- descriptive statistics ------------------------------------------------

struct ColumnSummary {
  std::string name;
  double mean = 0, sd = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ArgumentError("quantile of an empty column");
  double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::vector<ColumnSummary> describe(const MetricMatrix& m) {
  if (m.n() < 2) throw ArgumentError("standard deviation needs at least two rows");
  if (m.has_absent()) throw ArgumentError("describe needs a prepared matrix (absent cells present)");
  std::vector<ColumnSummary> out;
  for (std::size_t j = 0; j < m.p(); ++j) {
    Eigen::VectorXd col = m.values.col(static_cast<Eigen::Index>(j));
    std::vector<double> v(col.data(), col.data() + col.size());
    std::sort(v.begin(), v.end());
    ColumnSummary s;
    s.name = m.columns[j].name;
    s.mean = col.mean();
    s.sd = std::sqrt((col.array() - s.mean).square().sum() / static_cast<double>(col.size() - 1));
    s.min = v.front();
    s.max = v.back();
    s.q1 = quantile_sorted(v, 0.25);
    s.median = quantile_sorted(v, 0.5);
    s.q3 = quantile_sorted(v, 0.75);
    out.push_back(s);
  }
  return out;
}

// ---- train/test split ------------------------------------------------------

struct Split {
  MetricMatrix train;
  MetricMatrix test;
  std::vector<std::size_t> train_rows;  // indices into the input, ascending
  std::vector<std::size_t> test_rows;
};

inline MetricMatrix take_rows(const MetricMatrix& m, const std::vector<std::size_t>& idx) {
  MetricMatrix out;
  out.columns = m.columns;
  for (auto& c : out.columns) {
    std::set<std::size_t> remapped;
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (c.imputed_cells.count(idx[k])) remapped.insert(k);
    c.imputed_cells = std::move(remapped);
  }
  out.values.resize(static_cast<Eigen::Index>(idx.size()), m.values.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.rows.push_back(m.rows[idx[k]]);
    out.values.row(static_cast<Eigen::Index>(k)) = m.values.row(static_cast<Eigen::Index>(idx[k]));
  }
  return out;
}

/// Seeded uniform shuffle; the first round-half-up(fraction * n) rows train.
inline Split split(const MetricMatrix& m, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) throw ArgumentError("split fraction must lie in (0, 1)");
  const std::size_t n = m.n();
  auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  if (n_train == 0 || n_train >= n)
    throw ArgumentError("split leaves one side empty (n = " + std::to_string(n) + ")");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  // Fisher-Yates with rejection sampling, so the permutation is identical
  // across standard library implementations.
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uint64_t bound = i + 1;
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    std::swap(perm[i], perm[static_cast<std::size_t>(r % bound)]);
  }
  Split s;
  s.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train_rows.begin(), s.train_rows.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  s.train = take_rows(m, s.train_rows);
  s.test = take_rows(m, s.test_rows);
  return s;
}

// ---- files -----------------------------------------------------------------

/// Reads a CSV whose first column is the row label. `columns` picks numeric
/// columns by name (all remaining columns when empty). Reverse-scored flags
/// come from `reverse`.
inline MetricMatrix read_matrix_csv(std::istream& in, const std::vector<std::string>& columns = {},
                                    const std::set<std::string>& reverse = default_reverse_scored()) {
  auto t = util::read_csv(in);
  std::vector<std::string> names = columns;
  if (names.empty())
    for (std::size_t j = 1; j < t.header.size(); ++j)
      if (t.header[j] != "as_of") names.push_back(t.header[j]);
  std::vector<std::size_t> idx;
  for (const auto& name : names) idx.push_back(t.require_column(name));
  MetricMatrix m;
  m.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(names.size()));
  for (const auto& name : names) m.columns.push_back({name, reverse.count(name) > 0, {}});
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    m.rows.push_back(t.rows[i][0]);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::string& cell = t.rows[i][idx[k]];
      std::optional<double> v;
      try {
        v = util::parse_optional_double(cell);
      } catch (const ArgumentError&) {
        throw ParseError("column '" + names[k] + "': not a number '" + cell + "'", i + 2, idx[k] + 1);
      }
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v ? *v : kAbsent;
    }
  }
  return m;
}

inline void write_matrix_csv(std::ostream& out, const MetricMatrix& m,
                             const std::string& label_header = "repo_id") {
  std::vector<std::string> header{label_header};
  for (const auto& c : m.columns) header.push_back(c.name);
  util::write_csv_row(out, header);
  for (std::size_t i = 0; i < m.n(); ++i) {
    std::vector<std::string> row{m.rows[i]};
    for (std::size_t j = 0; j < m.p(); ++j) {
      double v = m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      row.push_back(is_absent(v) ? std::string() : util::format_double(v));
    }
    util::write_csv_row(out, row);
  }
}

inline nlohmann::json to_json(const ExclusionReport& r) {
  return {{"missing_404", r.missing_404},   {"private_listed", r.private_listed},
          {"not_listed", r.not_listed},     {"foreign_host", r.foreign_host},
          {"duplicates", r.duplicates},     {"dead_no_history", r.dead_no_history},
          {"retained", r.retained}};
}

/// Audit sidecar: one JSON object per line, the exclusion report (if any)
/// first, then one line per imputed cell.
inline void write_audit_jsonl(std::ostream& out, const MetricMatrix& m,
                              const ExclusionReport* exclusions = nullptr) {
  if (exclusions) {
    nlohmann::json j = to_json(*exclusions);
    j["kind"] = "exclusion_report";
    out << j.dump() << '\n';
  }
  for (std::size_t c = 0; c < m.p(); ++c)
    for (auto r : m.columns[c].imputed_cells) {
      nlohmann::json j = {{"kind", "imputed"},
                          {"column", m.columns[c].name},
                          {"row", m.rows[r]},
                          {"value", m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))}};
      out << j.dump() << '\n';
    }
}

}  // namespace oshealth::dataset
