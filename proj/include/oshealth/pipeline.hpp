#pragma once

// Command implementations behind the `oshealth` tool. Each command reads its
// inputs from files, writes its outputs into the output directory, and
// depends on nothing but those files.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oshealth/dataset/dataset.hpp"
#include "oshealth/error.hpp"
#include "oshealth/factor/assign.hpp"
#include "oshealth/factor/correlation.hpp"
#include "oshealth/factor/efa.hpp"
#include "oshealth/factor/parallel.hpp"
#include "oshealth/factor/reliability.hpp"
#include "oshealth/factor/report.hpp"
#include "oshealth/factor/varimax.hpp"
#include "oshealth/ingest/archive.hpp"
#include "oshealth/ingest/resolve.hpp"
#include "oshealth/ingest/store.hpp"
#include "oshealth/metrics/criticality.hpp"
#include "oshealth/metrics/metrics.hpp"
#include "oshealth/sem/report.hpp"
#include "oshealth/simulate.hpp"
#include "oshealth/util/csv.hpp"
#include "oshealth/util/format.hpp"
#include "oshealth/util/hash.hpp"
#include "oshealth/util/time.hpp"

#ifndef OSHEALTH_VERSION
#define OSHEALTH_VERSION "0.1.0"
#endif

namespace oshealth::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = OSHEALTH_VERSION;

struct PipelineConfig {
  std::vector<std::string> archives;  // files or directories of *.json.gz
  std::string projects;               // project list CSV
  std::string overrides;
  std::string ranks;
  std::string criticality;  // signal spec file; built-in defaults when empty
  std::string as_of;        // ISO-8601; latest event + 1 s when empty
  double split = 0.51;
  std::uint64_t seed = 1;
  std::string factors = "auto";
  double cutoff = 0.3;
  std::string out = "out";
  std::string store;    // default <out>/store
  std::string metrics;  // metrics CSV for efa/sem; default <out>/metrics.csv
  std::vector<std::string> columns;  // EFA columns; default the eleven candidates
  std::vector<std::string> compare_drop = {"median_response_days", "average_response_days"};
  int pa_sims = 100;
  std::string pa_basis = "full";
  bool cross_validate = false;
  std::string model;
  std::string compare_model;
  bool sem_covariance = false;  // fit the covariance instead of the correlation matrix
  bool mentions_in_comments = false;
  int reference_top = 100;
  unsigned threads = 1;

  fs::path out_dir() const { return out; }
  fs::path store_dir() const { return store.empty() ? out_dir() / "store" : fs::path(store); }
  fs::path metrics_path() const { return metrics.empty() ? out_dir() / "metrics.csv" : fs::path(metrics); }
};

inline std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

/// Canonical key=value text of the settings that can change results.
/// Output locations and thread count are left out so that the same analysis
/// written to two places carries the same hash.
inline std::string canonical_config(const PipelineConfig& c) {
  std::map<std::string, std::string> kv = {
      {"archives", join(c.archives)},
      {"projects", c.projects},
      {"overrides", c.overrides},
      {"ranks", c.ranks},
      {"criticality", c.criticality},
      {"as_of", c.as_of},
      {"split", util::format_double(c.split)},
      {"seed", std::to_string(c.seed)},
      {"factors", c.factors},
      {"cutoff", util::format_double(c.cutoff)},
      {"columns", join(c.columns)},
      {"compare_drop", join(c.compare_drop)},
      {"pa_sims", std::to_string(c.pa_sims)},
      {"pa_basis", c.pa_basis},
      {"cross_validate", c.cross_validate ? "true" : "false"},
      {"model", c.model},
      {"compare_model", c.compare_model},
      {"sem_covariance", c.sem_covariance ? "true" : "false"},
      {"mentions_in_comments", c.mentions_in_comments ? "true" : "false"},
      {"reference_top", std::to_string(c.reference_top)}};
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline std::string config_hash(const PipelineConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(util::fnv1a(canonical_config(c))));
  return buf;
}

inline json provenance(const PipelineConfig& c) {
  return {{"version", kVersion}, {"config_hash", config_hash(c)}};
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline void log(const std::string& msg) { std::cerr << "oshealth: " << msg << "\n"; }

inline void validate(const PipelineConfig& c) {
  if (!(c.split > 0 && c.split < 1)) throw ArgumentError("split must lie in (0, 1)");
  if (!(c.cutoff > 0)) throw ArgumentError("cutoff must be positive");
  if (c.pa_sims < 1) throw ArgumentError("pa_sims must be at least 1");
  if (c.reference_top < 1) throw ArgumentError("reference_top must be at least 1");
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ArgumentError(what + " not configured");
  if (!fs::is_regular_file(path)) throw ArgumentError(what + " not found: " + path);
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + p.string());
  return in;
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json read_json(const fs::path& p) {
  auto in = open_in(p);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ArgumentError("not valid JSON: " + p.string());
  return j;
}

inline std::string fixed3(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// ---- ingest ------------------------------------------------------------------

/// Archive files named by `paths`; directories contribute their *.gz files.
inline std::vector<fs::path> archive_files(const std::vector<std::string>& paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".gz") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.emplace_back(p);
    } else {
      log("skipping missing archive path " + p);
    }
  }
  return out;
}

struct FileScan {
  fs::path path;
  ingest::ParseStats stats;
  std::string error;
};

/// Runs `sink` over every readable archive; corrupt files are recorded and skipped.
template <typename Sink>
std::vector<FileScan> scan_archives(const std::vector<fs::path>& files, Sink&& sink) {
  std::vector<FileScan> out;
  for (const auto& f : files) {
    FileScan s{f, {}, {}};
    std::ifstream in(f, std::ios::binary);
    if (!in) {
      s.error = "cannot open";
    } else {
      try {
        s.stats = ingest::parse_archive_stream(in, sink);
      } catch (const StreamError& e) {
        s.error = e.what();
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_resolutions_csv(const fs::path& p, const std::vector<ingest::RepoResolution>& rs) {
  std::ostringstream out;
  util::write_csv_row(out, {"name", "symbol", "cmc_rank", "alexa_rank", "status", "repo_id", "host",
                            "rationale"});
  for (const auto& r : rs)
    util::write_csv_row(out, {r.project.name, r.project.symbol, std::to_string(r.project.cmc_rank),
                              r.project.alexa_rank ? std::to_string(*r.project.alexa_rank) : "",
                              ingest::to_string(r.status), r.repo_id, r.host, r.rationale});
  write_text(p, out.str());
}

inline std::vector<ingest::RepoResolution> read_resolutions_csv(const fs::path& p) {
  auto in = open_in(p);
  auto t = util::read_csv(in);
  std::vector<ingest::RepoResolution> out;
  for (const auto& row : t.rows) {
    ingest::RepoResolution r;
    r.project.name = row[t.require_column("name")];
    r.project.symbol = row[t.require_column("symbol")];
    r.project.cmc_rank = ingest::parse_optional_int(row[t.require_column("cmc_rank")], "cmc_rank").value_or(0);
    r.project.alexa_rank = ingest::parse_optional_int(row[t.require_column("alexa_rank")], "alexa_rank");
    r.status = ingest::resolution_status_from_string(row[t.require_column("status")]);
    r.repo_id = row[t.require_column("repo_id")];
    r.host = row[t.require_column("host")];
    r.rationale = row[t.require_column("rationale")];
    out.push_back(std::move(r));
  }
  return out;
}

struct IngestSummary {
  ingest::ParseStats totals;
  std::size_t appended = 0;
  std::size_t duplicates_skipped = 0;
  std::size_t repos = 0;
};

/// Parses archives into the event store. With a project list, repositories
/// are resolved first (stars counted from the archives) and only resolved
/// repositories are stored; mentions of every project are counted over the
/// whole corpus.
inline IngestSummary cmd_ingest(const PipelineConfig& cfg) {
  validate(cfg);
  auto files = archive_files(cfg.archives);
  if (files.empty()) throw ArgumentError("no readable archive among the configured paths");

  std::vector<ingest::RepoResolution> resolutions;
  std::set<std::string> keep;
  bool filter = !cfg.projects.empty();
  std::vector<std::string> mention_repos;
  metrics::MentionCounter mentions;

  if (filter) {
    require_file(cfg.projects, "project list");
    auto in = open_in(cfg.projects);
    auto entries = ingest::read_project_list(in);
    ingest::Overrides overrides;
    if (!cfg.overrides.empty()) {
      require_file(cfg.overrides, "overrides file");
      auto oin = open_in(cfg.overrides);
      overrides = ingest::read_overrides(oin);
    }
    // Pass 1: repository population and star counts per owner.
    std::map<std::string, std::map<std::string, std::int64_t>> by_owner;
    auto pass1 = scan_archives(files, [&](ingest::EventRecord&& e) {
      auto slash = e.repo_id.find('/');
      std::string owner = lower(e.repo_id.substr(0, slash));
      auto& stars = by_owner[owner][e.repo_id];
      if (e.type == ingest::EventType::Watch) ++stars;
    });
    bool any_ok = std::any_of(pass1.begin(), pass1.end(), [](const FileScan& s) { return s.error.empty(); });
    if (!any_ok) throw ArgumentError("no readable archive among the configured paths");
    auto candidates_for = [&](const ingest::ProjectEntry& e) {
      std::vector<ingest::RepoCandidate> out;
      if (!e.source_location) return out;
      auto url = ingest::parse_url(*e.source_location);
      if (!url || url->path.empty()) return out;
      auto it = by_owner.find(lower(url->path[0]));
      if (it == by_owner.end()) return out;
      for (const auto& [repo, stars] : it->second)
        out.push_back({repo, stars, ingest::infer_labels(repo)});
      return out;
    };
    resolutions = ingest::resolve_projects(entries, candidates_for, overrides);
    for (const auto& r : resolutions) {
      if (r.status != ingest::ResolutionStatus::Resolved) continue;
      keep.insert(r.repo_id);
      std::vector<std::string> aliases{r.project.name};
      if (!r.project.symbol.empty()) aliases.push_back(r.project.symbol);
      mentions.add_project(aliases);
      mention_repos.push_back(r.repo_id);
    }
    write_resolutions_csv(cfg.out_dir() / "resolutions.csv", resolutions);
  }

  // Pass 2: store events of kept repositories, scan texts for mentions.
  ingest::EventStore store(cfg.store_dir());
  IngestSummary summary;
  std::vector<ingest::EventRecord> batch;
  auto flush = [&] {
    if (batch.empty()) return;
    auto receipt = store.append(batch);
    summary.appended += receipt.count;
    summary.duplicates_skipped += receipt.duplicates_skipped;
    batch.clear();
  };
  std::set<std::string> seen_repos;
  auto scans = scan_archives(files, [&](ingest::EventRecord&& e) {
    if (filter) {
      bool texts = e.type == ingest::EventType::Push ||
                   (cfg.mentions_in_comments && ingest::is_comment(e.type));
      if (texts)
        for (const auto& t : e.texts) mentions.scan(t);
      if (!keep.count(e.repo_id)) return;
    }
    seen_repos.insert(e.repo_id);
    batch.push_back(std::move(e));
    if (batch.size() >= 4096) flush();
  });
  flush();
  bool any_ok = std::any_of(scans.begin(), scans.end(), [](const FileScan& s) { return s.error.empty(); });
  if (!any_ok) throw ArgumentError("no readable archive among the configured paths");
  summary.repos = seen_repos.size();

  json per_file = json::array();
  for (const auto& s : scans) {
    summary.totals += s.stats;
    json malformed = json::array();
    for (const auto& m : s.stats.malformed)
      malformed.push_back({{"byte_offset", m.byte_offset}, {"reason", m.reason}});
    per_file.push_back({{"file", s.path.filename().string()},
                        {"lines", s.stats.lines},
                        {"records", s.stats.records},
                        {"type_skipped", s.stats.type_skipped},
                        {"malformed_skipped", s.stats.malformed_skipped},
                        {"malformed", malformed},
                        {"error", s.error.empty() ? json(nullptr) : json(s.error)}});
    if (!s.error.empty()) log(s.path.string() + ": " + s.error);
  }
  json report = provenance(cfg);
  report["files"] = per_file;
  report["totals"] = {{"lines", summary.totals.lines},
                      {"records", summary.totals.records},
                      {"type_skipped", summary.totals.type_skipped},
                      {"malformed_skipped", summary.totals.malformed_skipped}};
  report["store"] = {{"appended", summary.appended},
                     {"duplicates_skipped", summary.duplicates_skipped},
                     {"repos", summary.repos}};
  if (filter) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : resolutions) ++counts[ingest::to_string(r.status)];
    report["resolutions"] = counts;
    std::ostringstream mcsv;
    util::write_csv_row(mcsv, {"repo_id", "mentions"});
    for (std::size_t i = 0; i < mention_repos.size(); ++i)
      util::write_csv_row(mcsv, {mention_repos[i], std::to_string(mentions.count(i))});
    write_text(cfg.out_dir() / "mentions.csv", mcsv.str());
  }
  write_json(cfg.out_dir() / "ingest_report.json", report);
  log("ingested " + std::to_string(summary.totals.records) + " events from " +
      std::to_string(files.size()) + " file(s); " + std::to_string(summary.appended) +
      " appended, " + std::to_string(summary.duplicates_skipped) + " duplicates skipped");
  return summary;
}

// ---- metrics -----------------------------------------------------------------

inline std::map<std::string, std::int64_t> read_mentions_csv(const fs::path& p) {
  auto in = open_in(p);
  auto t = util::read_csv(in);
  std::map<std::string, std::int64_t> out;
  for (const auto& row : t.rows)
    out[row[t.require_column("repo_id")]] =
        ingest::parse_optional_int(row[t.require_column("mentions")], "mentions").value_or(0);
  return out;
}

inline bool has_contribution_history(const std::vector<ingest::EventRecord>& events) {
  return std::any_of(events.begin(), events.end(),
                     [](const ingest::EventRecord& e) { return ingest::is_contribution(e.type); });
}

/// One metrics row per retained project plus an exclusion sidecar.
inline std::vector<metrics::ProjectMetrics> cmd_metrics(const PipelineConfig& cfg) {
  validate(cfg);
  require_file(cfg.ranks, "ranks file");
  if (!fs::is_directory(cfg.store_dir()))
    throw ArgumentError("event store not found: " + cfg.store_dir().string());
  std::map<std::string, metrics::RankRow> ranks;
  {
    auto in = open_in(cfg.ranks);
    ranks = metrics::read_ranks(in);
  }
  std::vector<metrics::SignalSpec> specs = metrics::default_signal_specs();
  if (!cfg.criticality.empty()) {
    require_file(cfg.criticality, "criticality config");
    auto in = open_in(cfg.criticality);
    specs = metrics::read_signal_specs(in);
  }
  ingest::EventStore store(cfg.store_dir());

  std::vector<ingest::RepoResolution> resolutions;
  fs::path res_path = cfg.out_dir() / "resolutions.csv";
  if (fs::is_regular_file(res_path)) {
    resolutions = read_resolutions_csv(res_path);
  } else {
    for (const auto& repo : store.repos()) {
      ingest::RepoResolution r;
      r.project.name = repo;
      r.status = ingest::ResolutionStatus::Resolved;
      r.repo_id = repo;
      r.rationale = "stored repository";
      resolutions.push_back(std::move(r));
    }
  }
  std::map<std::string, std::vector<ingest::EventRecord>> events;
  std::map<std::string, bool> history;
  Timestamp latest = 0;
  for (const auto& r : resolutions) {
    if (r.status != ingest::ResolutionStatus::Resolved) continue;
    auto ev = store.read_repo(r.repo_id);
    std::stable_sort(ev.begin(), ev.end(),
                     [](const auto& a, const auto& b) { return a.created_at < b.created_at; });
    for (const auto& e : ev) latest = std::max(latest, e.created_at);
    history[r.repo_id] = has_contribution_history(ev);
    events[r.repo_id] = std::move(ev);
  }
  auto excl = dataset::apply_exclusions(resolutions, history);
  Timestamp as_of = cfg.as_of.empty() ? latest + 1 : util::parse_timestamp_or_throw(cfg.as_of);

  std::map<std::string, std::int64_t> mention_counts;
  bool have_mentions = fs::is_regular_file(cfg.out_dir() / "mentions.csv");
  if (have_mentions) mention_counts = read_mentions_csv(cfg.out_dir() / "mentions.csv");

  // Retained repos in rank order; unranked after ranked, then by id.
  std::vector<std::string> order = excl.retained;
  auto rank_of = [&](const std::string& repo) -> std::int64_t {
    auto it = ranks.find(repo);
    return it != ranks.end() && it->second.cmc_rank ? *it->second.cmc_rank : INT64_MAX;
  };
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    auto ra = rank_of(a), rb = rank_of(b);
    return ra != rb ? ra < rb : a < b;
  });

  // Phase 1: reference timezone distribution of the top-ranked projects.
  std::vector<metrics::TimezoneHistogram> top;
  for (std::size_t i = 0; i < order.size() && static_cast<int>(i) < cfg.reference_top; ++i)
    top.push_back(metrics::recent_timezone_histogram(events[order[i]], as_of));
  metrics::TimezoneHistogram reference;
  if (!top.empty()) reference = metrics::median_distribution(top);

  // Phase 2: one row per project.
  std::vector<metrics::ProjectMetrics> rows;
  for (const auto& repo : order) {
    const auto& ev = events[repo];
    metrics::ExternalInputs ext;
    if (auto it = ranks.find(repo); it != ranks.end()) {
      ext.cmc_rank = it->second.cmc_rank;
      ext.alexa_rank = it->second.alexa_rank;
    }
    ext.criticality = metrics::compute_criticality_signals(ev, as_of, specs);
    if (have_mentions) {
      auto it = mention_counts.find(repo);
      ext.mentions = it != mention_counts.end() ? it->second : 0;
    }
    rows.push_back(metrics::build_metrics_row(repo, ev, ext, reference, as_of));
  }
  std::ostringstream csv;
  metrics::write_metrics_csv(csv, rows);
  write_text(cfg.metrics_path(), csv.str());

  std::ostringstream side;
  json head = dataset::to_json(excl.report);
  head["kind"] = "exclusion_report";
  head["config_hash"] = config_hash(cfg);
  head["version"] = kVersion;
  side << head.dump() << "\n";
  for (const auto& r : resolutions) {
    std::string why;
    if (r.status != ingest::ResolutionStatus::Resolved) why = ingest::to_string(r.status);
    else if (!history[r.repo_id]) why = "dead_no_history";
    if (why.empty()) continue;
    json line = {{"kind", "excluded"}, {"project", r.project.name}, {"reason", why},
                 {"repo_id", r.repo_id}, {"rationale", r.rationale}};
    side << line.dump() << "\n";
  }
  write_text(cfg.out_dir() / "exclusions.jsonl", side.str());
  log("wrote " + std::to_string(rows.size()) + " metric rows (" +
      std::to_string(excl.report.total() - excl.report.retained) + " projects excluded)");
  return rows;
}

// ---- efa ---------------------------------------------------------------------

/// Names of columns that take part in a (near) exact linear dependency.
inline std::vector<std::string> collinear_columns(const Eigen::MatrixXd& r,
                                                  const std::vector<std::string>& names) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  std::vector<std::string> out;
  if (es.eigenvalues()(0) > 1e-10 * r.rows()) return out;
  Eigen::VectorXd v = es.eigenvectors().col(0);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > 1e-3) out.push_back(names[static_cast<size_t>(i)]);
  return out;
}

inline Eigen::MatrixXd checked_correlation(const dataset::MetricMatrix& m) {
  auto names = m.column_names();
  Eigen::MatrixXd r = factor::correlation_matrix(m.values, names);
  auto bad = collinear_columns(r, names);
  if (!bad.empty()) throw ArgumentError("correlation matrix is singular; collinear columns: " + join(bad, ", "));
  return r;
}

struct EfaRun {
  factor::FactorSolution ml;
  factor::FitStatistics fit;
  factor::FactorSolution paf;
  factor::Assignment assignment;
};

inline EfaRun run_efa(const Eigen::MatrixXd& r, long n, long m, const std::vector<std::string>& names,
                      double cutoff) {
  EfaRun out;
  auto ml = factor::efa_ml(r, n, m);
  out.ml = factor::rotate_varimax(ml.solution);
  out.fit = ml.fit;
  out.paf = factor::rotate_varimax(factor::efa_principal_axis(r, m));
  out.assignment = factor::assign_indicators(out.ml.loadings, names, cutoff);
  return out;
}

/// Largest m with non-negative degrees of freedom for p variables.
inline long max_identified_factors(long p) {
  long m = 0;
  while (factor::efa_degrees_of_freedom(p, m + 1) >= 0 && m + 1 <= p) ++m;
  return m;
}

inline json reliability_json(const EfaRun& run, const dataset::MetricMatrix& m) {
  json out = json::array();
  for (std::size_t f = 0; f < run.assignment.factors.size(); ++f) {
    const auto& items = run.assignment.factors[f];
    json j = {{"factor", f + 1}, {"items", items}, {"alpha", nullptr}, {"omega", nullptr}};
    if (items.size() >= 2) {
      Eigen::MatrixXd sub = m.select(items).values;
      Eigen::MatrixXd z = sub;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        Eigen::VectorXd col = z.col(c);
        double mean = col.mean();
        double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(col.size() - 1));
        z.col(c) = (col.array() - mean) / sd;
      }
      try {
        j["alpha"] = factor::number_or_null(factor::cronbach_alpha(z));
      } catch (const NumericError&) {
      }
    }
    if (!items.empty()) {
      Eigen::VectorXd lam(static_cast<Eigen::Index>(items.size())), psi(lam.size());
      auto names = m.column_names();
      for (std::size_t k = 0; k < items.size(); ++k) {
        auto i = std::find(names.begin(), names.end(), items[k]) - names.begin();
        lam(static_cast<Eigen::Index>(k)) = run.ml.loadings(i, static_cast<Eigen::Index>(f));
        psi(static_cast<Eigen::Index>(k)) = std::max(0.0, 1.0 - lam(static_cast<Eigen::Index>(k)) * lam(static_cast<Eigen::Index>(k)));
      }
      j["omega"] = factor::number_or_null(factor::mcdonald_omega(lam, psi));
    }
    out.push_back(j);
  }
  return out;
}

inline json efa_run_json(const EfaRun& run, const std::vector<std::string>& names) {
  return {{"ml", factor::to_json(run.ml, names)},
          {"fit", factor::to_json(run.fit)},
          {"principal_axis", factor::to_json(run.paf, names)},
          {"assignment", factor::to_json(run.assignment)}};
}

inline std::string efa_table(const EfaRun& run, const std::vector<std::string>& names) {
  std::ostringstream out;
  char line[256];
  const auto m = run.ml.loadings.cols();
  std::snprintf(line, sizeof line, "%-24s", "Indicator");
  out << line;
  for (Eigen::Index j = 0; j < m; ++j) {
    std::snprintf(line, sizeof line, " %9s", ("Factor " + std::to_string(j + 1)).c_str());
    out << line;
  }
  out << "        h2\n";
  for (Eigen::Index i = 0; i < run.ml.loadings.rows(); ++i) {
    std::snprintf(line, sizeof line, "%-24s", names[static_cast<size_t>(i)].c_str());
    out << line;
    for (Eigen::Index j = 0; j < m; ++j) {
      std::snprintf(line, sizeof line, " %9s", fixed3(run.ml.loadings(i, j)).c_str());
      out << line;
    }
    std::snprintf(line, sizeof line, " %9s\n", fixed3(run.ml.communalities(i)).c_str());
    out << line;
  }
  auto row = [&](const char* label, const Eigen::VectorXd& v) {
    std::snprintf(line, sizeof line, "%-24s", label);
    out << line;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      std::snprintf(line, sizeof line, " %9s", fixed3(v(j)).c_str());
      out << line;
    }
    out << "\n";
  };
  row("SS loadings", run.ml.variance.ss_loadings);
  row("Cumulative variance", run.ml.variance.cumulative_variance);
  row("Proportion explained", run.ml.variance.proportion_explained);
  const auto& f = run.fit;
  out << "\nchi-square " << fixed3(f.chi_square) << "  df " << f.df << "  TLI " << fixed3(f.tli)
      << "  RMSEA " << fixed3(f.rmsea) << "  CFI " << fixed3(f.cfi) << "  SRMR " << fixed3(f.srmr)
      << "  BIC " << fixed3(f.bic) << "\n";
  for (std::size_t k = 0; k < run.assignment.factors.size(); ++k)
    out << "Factor " << k + 1 << ": " << join(run.assignment.factors[k], ", ") << "\n";
  out << "Dropped: " << join(run.assignment.dropped, ", ") << "\n";
  return out.str();
}

inline dataset::MetricMatrix load_prepared(const PipelineConfig& cfg,
                                           const std::vector<std::string>& wanted) {
  require_file(cfg.metrics_path().string(), "metrics file");
  auto in = open_in(cfg.metrics_path());
  auto t = util::read_csv(in);
  for (const auto& c : wanted)
    if (!t.column(c)) throw ArgumentError("column '" + c + "' is absent from " + cfg.metrics_path().string());
  in.clear();
  in.seekg(0);
  auto m = dataset::read_matrix_csv(in, wanted);
  if (m.n() < 3) throw ArgumentError("need at least 3 rows, got " + std::to_string(m.n()));
  dataset::prepare(m);
  return m;
}

/// Parallel analysis, ML extraction with varimax, assignments, reliability,
/// the BIC comparison without `compare_drop`, and optional cross-validation.
inline json cmd_efa(const PipelineConfig& cfg) {
  validate(cfg);
  std::vector<std::string> cols = cfg.columns;
  if (cols.empty()) {
    require_file(cfg.metrics_path().string(), "metrics file");
    auto in = open_in(cfg.metrics_path());
    auto t = util::read_csv(in);
    for (const auto& c : dataset::efa_candidate_columns())
      if (t.column(c)) cols.push_back(c);
  }
  if (cols.size() < 3) throw ArgumentError("EFA needs at least 3 columns");
  auto m = load_prepared(cfg, cols);
  const long n = static_cast<long>(m.n());
  const long p = static_cast<long>(m.p());
  Eigen::MatrixXd r = checked_correlation(m);

  factor::ParallelOptions po;
  po.n_sims = cfg.pa_sims;
  po.seed = cfg.seed;
  po.basis = factor::eigen_basis_from_string(cfg.pa_basis);
  po.threads = cfg.threads;
  auto pa = factor::parallel_analysis_from_correlation(r, n, po);

  long mfac = 0;
  long max_m = max_identified_factors(p);
  if (cfg.factors == "auto") {
    mfac = std::clamp<long>(pa.suggested_factors, 1, std::max<long>(max_m, 1));
    if (mfac != pa.suggested_factors)
      log("parallel analysis suggested " + std::to_string(pa.suggested_factors) + " factor(s); using " +
          std::to_string(mfac));
  } else {
    try {
      mfac = std::stol(cfg.factors);
    } catch (const std::exception&) {
      throw ArgumentError("factors must be 'auto' or a positive integer, got '" + cfg.factors + "'");
    }
  }
  auto names = m.column_names();
  EfaRun run = run_efa(r, n, mfac, names, cfg.cutoff);

  json report = provenance(cfg);
  report["n"] = n;
  report["variables"] = names;
  report["factors"] = mfac;
  report["cutoff"] = cfg.cutoff;
  report["eigenvalues"] = factor::vector_json(factor::eigenvalues(r));
  report["parallel_analysis"] = factor::to_json(pa);
  report["model"] = efa_run_json(run, names);
  report["reliability"] = reliability_json(run, m);
  {
    json imputed = json::object();
    for (const auto& c : m.columns) imputed[c.name] = c.imputed_cells.size();
    report["imputed_cells"] = imputed;
  }

  std::vector<std::string> kept;
  for (const auto& c : names)
    if (std::find(cfg.compare_drop.begin(), cfg.compare_drop.end(), c) == cfg.compare_drop.end())
      kept.push_back(c);
  if (!cfg.compare_drop.empty() && kept.size() < names.size() &&
      factor::efa_degrees_of_freedom(static_cast<long>(kept.size()), mfac) >= 0) {
    auto sub = m.select(kept);
    Eigen::MatrixXd rs = checked_correlation(sub);
    EfaRun reduced = run_efa(rs, n, mfac, kept, cfg.cutoff);
    report["comparison"] = {{"dropped", cfg.compare_drop},
                            {"bic_full", factor::number_or_null(run.fit.bic)},
                            {"bic_reduced", factor::number_or_null(reduced.fit.bic)},
                            {"reduced", efa_run_json(reduced, kept)}};
  }

  std::string text = efa_table(run, names);
  if (cfg.cross_validate) {
    auto sp = dataset::split(m, cfg.split, cfg.seed);
    auto fit_part = [&](const dataset::MetricMatrix& part) {
      return run_efa(checked_correlation(part), static_cast<long>(part.n()), mfac, names, cfg.cutoff);
    };
    EfaRun train = fit_part(sp.train), test = fit_part(sp.test);
    bool same = factor::same_structure(train.assignment, test.assignment);
    report["cross_validation"] = {{"fraction", cfg.split},
                                  {"train_n", sp.train.n()},
                                  {"test_n", sp.test.n()},
                                  {"train", efa_run_json(train, names)},
                                  {"test", efa_run_json(test, names)},
                                  {"same_structure", same}};
    text += "\nTraining (n=" + std::to_string(sp.train.n()) + ")\n" + efa_table(train, names);
    text += "\nTesting (n=" + std::to_string(sp.test.n()) + ")\n" + efa_table(test, names);
    text += std::string("\nSame factor structure: ") + (same ? "yes" : "no") + "\n";
  }

  std::ostringstream scree;
  util::write_csv_row(scree, {"rank", "observed", "simulated_mean", "simulated_quantile"});
  for (Eigen::Index k = 0; k < pa.observed_eigenvalues.size(); ++k)
    util::write_csv_row(scree, {std::to_string(k + 1), util::format_double(pa.observed_eigenvalues(k)),
                                util::format_double(pa.simulated_mean_eigenvalues(k)),
                                util::format_double(pa.simulated_quantile_eigenvalues(k))});
  std::ostringstream audit;
  dataset::write_audit_jsonl(audit, m);

  write_json(cfg.out_dir() / "efa_report.json", report);
  write_text(cfg.out_dir() / "efa_report.txt", text);
  write_text(cfg.out_dir() / "scree.csv", scree.str());
  write_text(cfg.out_dir() / "efa_audit.jsonl", audit.str());
  log("EFA: " + std::to_string(mfac) + " factor(s) on " + std::to_string(p) + " variables, n=" +
      std::to_string(n));
  return report;
}

// ---- sem ---------------------------------------------------------------------

inline std::string read_text(const fs::path& p) {
  auto in = open_in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline sem::SampleMoments sample_for(const PipelineConfig& cfg, const sem::SemModel& model) {
  auto indicators = model.indicators();
  auto m = load_prepared(cfg, indicators);
  Eigen::MatrixXd cov = factor::covariance_matrix(m.values);
  if (!cfg.sem_covariance) cov = factor::correlation_matrix(m.values, m.column_names());
  return {cov, m.column_names(), static_cast<long>(m.n())};
}

/// Fits the model file (and optional comparison model) to the prepared data.
inline json cmd_sem(const PipelineConfig& cfg) {
  validate(cfg);
  require_file(cfg.model, "model file");
  auto model = sem::parse_model(read_text(cfg.model));
  auto sample = sample_for(cfg, model);
  auto fit = sem::fit_ml(model, sample);
  json report = provenance(cfg);
  report["n"] = sample.n;
  report["metric"] = cfg.sem_covariance ? "covariance" : "correlation";
  report["model"] = sem::to_text(model);
  report["fit"] = sem::to_json(fit);
  std::string text = sem::to_text(fit);
  if (!cfg.compare_model.empty()) {
    require_file(cfg.compare_model, "comparison model file");
    auto other = sem::parse_model(read_text(cfg.compare_model));
    auto other_fit = sem::fit_ml(other, sample_for(cfg, other));
    report["comparison"] = {{"model", sem::to_text(other)},
                            {"fit", sem::to_json(other_fit)},
                            {"difference", sem::to_json(sem::compare_models(other_fit, fit))}};
    auto d = sem::compare_models(other_fit, fit);
    text += "\nComparison model:\n" + sem::to_text(other_fit);
    text += "\nDifference (comparison - main): chi-square " + fixed3(d.delta_chi_square) + ", df " +
            std::to_string(d.delta_df) + ", BIC " + fixed3(d.delta_bic) + "\n";
  }
  write_json(cfg.out_dir() / "sem_report.json", report);
  write_text(cfg.out_dir() / "sem_report.txt", text);
  if (!fit.heywood.empty()) log("negative variance estimate(s): " + join(fit.heywood, ", "));
  if (!fit.converged) log("SEM optimizer did not converge: " + fit.message);
  return report;
}

// ---- report ------------------------------------------------------------------

/// Plain-text summary of whatever stage outputs exist in the output directory.
inline std::string cmd_report(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "oshealth " << kVersion << " report (config " << config_hash(cfg) << ")\n";
  bool any = false;
  auto dir = cfg.out_dir();
  if (fs::is_regular_file(dir / "ingest_report.json")) {
    any = true;
    auto j = read_json(dir / "ingest_report.json");
    const auto& t = j["totals"];
    out << "\n== Ingest\nlines " << t["lines"] << ", events " << t["records"] << ", type-skipped "
        << t["type_skipped"] << ", malformed " << t["malformed_skipped"] << "\n";
    out << "stored " << j["store"]["appended"] << " events ("
        << j["store"]["duplicates_skipped"] << " duplicates skipped)\n";
  }
  if (fs::is_regular_file(dir / "exclusions.jsonl")) {
    any = true;
    auto in = open_in(dir / "exclusions.jsonl");
    std::string first;
    std::getline(in, first);
    auto j = json::parse(first, nullptr, false);
    if (!j.is_discarded()) {
      out << "\n== Exclusions\n";
      for (const char* k : {"missing_404", "private_listed", "not_listed", "foreign_host",
                            "duplicates", "dead_no_history", "retained"})
        out << k << " " << j.value(k, 0) << "\n";
    }
  }
  if (fs::is_regular_file(dir / "efa_report.txt")) {
    any = true;
    out << "\n== Exploratory factor analysis\n" << read_text(dir / "efa_report.txt");
  }
  if (fs::is_regular_file(dir / "sem_report.txt")) {
    any = true;
    out << "\n== Structural model\n" << read_text(dir / "sem_report.txt");
  }
  if (!any) throw ArgumentError("no stage outputs found in " + dir.string());
  write_text(dir / "report.txt", out.str());
  return out.str();
}

// ---- simulate ----------------------------------------------------------------

/// Writes a metrics-shaped CSV drawn from a reference generator: kind "efa"
/// (the nine EFA indicators) or "sem" (the eleven model indicators).
inline void cmd_simulate(const PipelineConfig& cfg, const std::string& kind, long n) {
  if (n < 3) throw ArgumentError("simulate needs n >= 3");
  util::Rng rng(util::derive_seed(cfg.seed, 0));
  Eigen::MatrixXd data;
  std::vector<std::string> names;
  if (kind == "efa") {
    auto g = simulate::reference_efa_generator();
    data = simulate::sample_normal(g.correlation(), n, rng);
    names = g.names;
  } else if (kind == "sem") {
    auto g = simulate::reference_sem_generator();
    data = simulate::sample_normal(g.sigma, n, rng);
    names = g.names;
  } else {
    throw ArgumentError("unknown simulation kind '" + kind + "' (expected efa or sem)");
  }
  // Reverse-scored columns are stored reversed so that preparation restores
  // the generator's orientation.
  const auto& rev = dataset::default_reverse_scored();
  for (size_t j = 0; j < names.size(); ++j)
    if (rev.count(names[j]))
      data.col(static_cast<Eigen::Index>(j)) = dataset::reverse_score(data.col(static_cast<Eigen::Index>(j)));
  std::ostringstream out;
  std::vector<std::string> header{"repo_id"};
  header.insert(header.end(), names.begin(), names.end());
  util::write_csv_row(out, header);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    char label[32];
    std::snprintf(label, sizeof label, "sim/%05ld", static_cast<long>(i + 1));
    std::vector<std::string> row{label};
    for (Eigen::Index j = 0; j < data.cols(); ++j) row.push_back(util::format_double(data(i, j)));
    util::write_csv_row(out, row);
  }
  write_text(cfg.metrics_path(), out.str());
  log("simulated " + std::to_string(n) + " rows (" + kind + ") into " + cfg.metrics_path().string());
}

}  // namespace oshealth::pipeline
