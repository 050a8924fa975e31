#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/util/csv.hpp"

namespace oshealth::ingest {

struct ProjectEntry {
  std::string name;
  std::string symbol;
  std::int64_t cmc_rank = 0;
  std::string website;
  std::optional<std::string> source_location;
  std::optional<std::int64_t> alexa_rank;
};

enum class RepoLabel { Reference, Core, Node, Contract };

struct RepoCandidate {
  std::string repo_id;
  std::int64_t stars = 0;
  std::set<RepoLabel> labels;
};

enum class ResolutionStatus { Resolved, Missing404, PrivateListed, NotListed, ForeignHost, Duplicate };

inline const char* to_string(ResolutionStatus s) {
  switch (s) {
    case ResolutionStatus::Resolved: return "resolved";
    case ResolutionStatus::Missing404: return "missing_404";
    case ResolutionStatus::PrivateListed: return "private_listed";
    case ResolutionStatus::NotListed: return "not_listed";
    case ResolutionStatus::ForeignHost: return "foreign_host";
    case ResolutionStatus::Duplicate: return "duplicate";
  }
  return "";
}

inline ResolutionStatus resolution_status_from_string(const std::string& s) {
  for (auto st : {ResolutionStatus::Resolved, ResolutionStatus::Missing404,
                  ResolutionStatus::PrivateListed, ResolutionStatus::NotListed,
                  ResolutionStatus::ForeignHost, ResolutionStatus::Duplicate})
    if (s == to_string(st)) return st;
  throw ArgumentError("unknown resolution status '" + s + "'");
}

struct RepoResolution {
  ProjectEntry project;
  ResolutionStatus status = ResolutionStatus::NotListed;
  std::string repo_id;  // Resolved: the repo; Duplicate: the repo it duplicates
  std::string host;     // ForeignHost only
  std::string rationale;
};

using Overrides = std::map<std::string, std::string>;

struct ParsedUrl {
  std::string host;
  std::vector<std::string> path;
};

inline std::optional<ParsedUrl> parse_url(const std::string& url) {
  std::string rest = util::trim(url);
  auto scheme = rest.find("://");
  if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
  if (rest.empty()) return std::nullopt;
  ParsedUrl out;
  auto slash = rest.find('/');
  out.host = rest.substr(0, slash);
  std::transform(out.host.begin(), out.host.end(), out.host.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (out.host.rfind("www.", 0) == 0) out.host = out.host.substr(4);
  if (out.host.empty() || out.host.find('.') == std::string::npos ||
      out.host.find(' ') != std::string::npos)
    return std::nullopt;
  if (slash != std::string::npos) {
    std::string path = rest.substr(slash + 1);
    std::size_t pos = 0;
    while (pos <= path.size()) {
      auto next = path.find('/', pos);
      std::string seg = path.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      auto q = seg.find_first_of("?#");
      if (q != std::string::npos) seg = seg.substr(0, q);
      if (!seg.empty()) out.path.push_back(seg);
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }
  if (out.path.size() >= 2 && out.path[1].size() > 4 &&
      out.path[1].compare(out.path[1].size() - 4, 4, ".git") == 0)
    out.path[1].resize(out.path[1].size() - 4);
  return out;
}

/// Labels implied by a repository name, e.g. "go-ethereum-node" -> {Node}.
inline std::set<RepoLabel> infer_labels(const std::string& repo_id) {
  std::string name = repo_id.substr(repo_id.find('/') + 1);
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::set<RepoLabel> labels;
  std::string token;
  auto flush = [&] {
    if (token == "core") labels.insert(RepoLabel::Core);
    else if (token == "node") labels.insert(RepoLabel::Node);
    else if (token == "reference" || token == "ref") labels.insert(RepoLabel::Reference);
    else if (token == "contract" || token == "contracts") labels.insert(RepoLabel::Contract);
    token.clear();
  };
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) token.push_back(c);
    else flush();
  }
  flush();
  return labels;
}

namespace detail {

inline int label_tier(const RepoCandidate& c) {
  if (c.labels.count(RepoLabel::Reference) || c.labels.count(RepoLabel::Core) ||
      c.labels.count(RepoLabel::Node))
    return 0;
  if (c.labels.count(RepoLabel::Contract)) return 1;
  return 2;
}

inline RepoResolution make(const ProjectEntry& e, ResolutionStatus s, std::string repo,
                           std::string why) {
  RepoResolution r;
  r.project = e;
  r.status = s;
  r.repo_id = std::move(repo);
  r.rationale = std::move(why);
  return r;
}

}  // namespace detail

/// Picks the canonical repository for one project.
///
/// Order of precedence: manual override; absent source -> NotListed;
/// non-GitHub host -> ForeignHost; a URL naming an existing repo directly;
/// otherwise reference/core/node beats contract beats unlabelled, with the
/// most-starred repo winning inside a tier (repo_id breaks exact ties).
/// Overrides may also name a status: `@private`, `@missing`, `@unlisted`.
inline RepoResolution resolve_repo(const ProjectEntry& entry,
                                   const std::vector<RepoCandidate>& candidates,
                                   const Overrides& overrides) {
  using S = ResolutionStatus;
  if (auto it = overrides.find(entry.name); it != overrides.end()) {
    const std::string& v = it->second;
    if (v == "@private") return detail::make(entry, S::PrivateListed, "", "override: private");
    if (v == "@missing") return detail::make(entry, S::Missing404, "", "override: missing");
    if (v == "@unlisted") return detail::make(entry, S::NotListed, "", "override: not listed");
    return detail::make(entry, S::Resolved, v, "override");
  }
  if (!entry.source_location || util::trim(*entry.source_location).empty())
    return detail::make(entry, S::NotListed, "", "no source location listed");
  auto url = parse_url(*entry.source_location);
  if (!url) throw ArgumentError("project '" + entry.name + "' has an unparseable source URL");
  if (url->host != "github.com") {
    auto r = detail::make(entry, S::ForeignHost, "", "hosted outside GitHub");
    r.host = url->host;
    return r;
  }
  if (candidates.empty() || url->path.empty())
    return detail::make(entry, S::Missing404, "", "no repositories found at source location");
  if (url->path.size() >= 2) {
    std::string direct = url->path[0] + "/" + url->path[1];
    for (const auto& c : candidates)
      if (c.repo_id == direct)
        return detail::make(entry, S::Resolved, direct, "source URL names the repository");
  }
  const RepoCandidate* best = nullptr;
  for (const auto& c : candidates) {
    if (!best) {
      best = &c;
      continue;
    }
    int tc = detail::label_tier(c), tb = detail::label_tier(*best);
    if (tc != tb) {
      if (tc < tb) best = &c;
    } else if (c.stars != best->stars) {
      if (c.stars > best->stars) best = &c;
    } else if (c.repo_id < best->repo_id) {
      best = &c;
    }
  }
  static const char* why[] = {"reference/core/node implementation", "contract repository",
                              "most-starred repository"};
  return detail::make(entry, S::Resolved, best->repo_id, why[detail::label_tier(*best)]);
}

/// Resolves a whole project list in rank order; later projects that land on
/// an already-claimed repository become Duplicate of it.
template <typename CandidatesFor>
std::vector<RepoResolution> resolve_projects(std::vector<ProjectEntry> entries,
                                             CandidatesFor&& candidates_for,
                                             const Overrides& overrides) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.cmc_rank < b.cmc_rank; });
  std::vector<RepoResolution> out;
  std::unordered_set<std::string> claimed;
  for (const auto& e : entries) {
    auto r = resolve_repo(e, candidates_for(e), overrides);
    if (r.status == ResolutionStatus::Resolved) {
      if (!claimed.insert(r.repo_id).second) {
        r.status = ResolutionStatus::Duplicate;
        r.rationale = "same code base as a higher-ranked project";
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::optional<std::int64_t> parse_optional_int(const std::string& cell,
                                                      const std::string& what) {
  std::string t = util::trim(cell);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    long long v = std::stoll(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("invalid integer '" + t + "' for " + what);
  }
}

/// Reads `name,symbol,cmc_rank,website,source_location,alexa_rank`.
inline std::vector<ProjectEntry> read_project_list(std::istream& in) {
  auto t = util::read_csv(in);
  auto c_name = t.require_column("name"), c_sym = t.require_column("symbol"),
       c_rank = t.require_column("cmc_rank"), c_web = t.require_column("website"),
       c_src = t.require_column("source_location"), c_alexa = t.require_column("alexa_rank");
  std::vector<ProjectEntry> out;
  std::set<std::int64_t> ranks;
  for (const auto& row : t.rows) {
    ProjectEntry e;
    e.name = util::trim(row[c_name]);
    e.symbol = util::trim(row[c_sym]);
    auto rank = parse_optional_int(row[c_rank], "cmc_rank of " + e.name);
    if (!rank || *rank <= 0) throw ArgumentError("project '" + e.name + "' needs a positive cmc_rank");
    if (!ranks.insert(*rank).second)
      throw ArgumentError("duplicate cmc_rank " + std::to_string(*rank));
    e.cmc_rank = *rank;
    e.website = util::trim(row[c_web]);
    if (auto src = util::trim(row[c_src]); !src.empty()) {
      if (!parse_url(src)) throw ArgumentError("project '" + e.name + "' source is not a URL: " + src);
      e.source_location = src;
    }
    e.alexa_rank = parse_optional_int(row[c_alexa], "alexa_rank of " + e.name);
    if (e.alexa_rank && *e.alexa_rank <= 0)
      throw ArgumentError("project '" + e.name + "' has a non-positive alexa_rank");
    out.push_back(std::move(e));
  }
  return out;
}

/// Reads `name=owner/repo` lines; `#` starts a comment.
inline Overrides read_overrides(std::istream& in) {
  Overrides out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = util::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected name=owner/repo", line_no, 1);
    std::string name = util::trim(line.substr(0, eq));
    std::string repo = util::trim(line.substr(eq + 1));
    if (name.empty() || repo.empty() ||
        (repo.front() != '@' && repo.find('/') == std::string::npos))
      throw ParseError("expected name=owner/repo", line_no, eq + 1);
    out[name] = repo;
  }
  return out;
}

}  // namespace oshealth::ingest
