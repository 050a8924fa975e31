#pragma once

#include <zlib.h>

#include <array>
#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oshealth/error.hpp"
#include "oshealth/ingest/event.hpp"

namespace oshealth::ingest {

struct MalformedLine {
  std::size_t byte_offset = 0;  // offset of the line start in the decompressed stream
  std::string reason;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t type_skipped = 0;
  std::size_t malformed_skipped = 0;
  std::vector<MalformedLine> malformed;

  ParseStats& operator+=(const ParseStats& o) {
    lines += o.lines;
    records += o.records;
    type_skipped += o.type_skipped;
    malformed_skipped += o.malformed_skipped;
    malformed.insert(malformed.end(), o.malformed.begin(), o.malformed.end());
    return *this;
  }
};

struct ParseResult {
  std::vector<EventRecord> events;
  ParseStats stats;
};

namespace detail {

using nlohmann::json;

inline const json* find(const json& j, std::string_view key) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(std::string(key));
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

inline std::optional<std::string> string_at(const json& j, std::string_view key) {
  const json* v = find(j, key);
  if (v && v->is_string()) return v->get<std::string>();
  return std::nullopt;
}

inline std::optional<std::int64_t> int_at(const json& j, std::string_view key) {
  const json* v = find(j, key);
  if (v && v->is_number_integer()) return v->get<std::int64_t>();
  return std::nullopt;
}

// Both "repo": {"name": "owner/name"} (2015+) and the Timeline-era
// "repository": {"owner": ..., "name": ...} spellings.
inline std::optional<std::string> repo_name(const json& j) {
  if (const json* repo = find(j, "repo")) {
    if (auto name = string_at(*repo, "name"); name && name->find('/') != std::string::npos)
      return name;
  }
  if (const json* repo = find(j, "repository")) {
    auto owner = string_at(*repo, "owner");
    auto name = string_at(*repo, "name");
    if (owner && name) return *owner + "/" + *name;
  }
  return std::nullopt;
}

inline std::string actor_name(const json& j) {
  if (const json* a = find(j, "actor")) {
    if (a->is_string()) return a->get<std::string>();
    if (auto login = string_at(*a, "login")) return *login;
  }
  if (const json* attrs = find(j, "actor_attributes"))
    if (auto login = string_at(*attrs, "login")) return *login;
  return {};
}

inline void fill_push(const json& payload, EventRecord& rec) {
  if (const json* commits = find(payload, "commits"); commits && commits->is_array()) {
    for (const auto& c : *commits) {
      if (auto msg = string_at(c, "message")) rec.texts.push_back(*msg);
      if (!rec.tz_offset) {
        std::optional<std::string> stamp = string_at(c, "timestamp");
        if (!stamp)
          if (const json* author = find(c, "author")) stamp = string_at(*author, "date");
        if (stamp)
          if (auto t = util::parse_timestamp(*stamp); t && t->offset_minutes)
            rec.tz_offset = static_cast<std::int16_t>(*t->offset_minutes);
      }
    }
  } else if (const json* shas = find(payload, "shas"); shas && shas->is_array()) {
    // [sha, email, message, name, distinct]
    for (const auto& s : *shas)
      if (s.is_array() && s.size() > 2 && s[2].is_string())
        rec.texts.push_back(s[2].get<std::string>());
  }
  if (auto size = int_at(payload, "size")) rec.count = *size;
  else rec.count = static_cast<std::int64_t>(rec.texts.size());
}

inline void fill_payload(const json& payload, EventRecord& rec) {
  switch (rec.type) {
    case EventType::Push:
      fill_push(payload, rec);
      break;
    case EventType::PullRequest: {
      rec.action = string_at(payload, "action");
      rec.number = int_at(payload, "number");
      if (const json* pr = find(payload, "pull_request")) {
        if (!rec.number) rec.number = int_at(*pr, "number");
        if (auto title = string_at(*pr, "title")) rec.texts.push_back(*title);
        const json* merged = find(*pr, "merged");
        if (rec.action == "closed" && merged && merged->is_boolean() && merged->get<bool>())
          rec.action = "merged";
      }
      break;
    }
    case EventType::Issues: {
      rec.action = string_at(payload, "action");
      if (const json* issue = find(payload, "issue")) {
        if (issue->is_object()) rec.number = int_at(*issue, "number");
      }
      if (!rec.number) rec.number = int_at(payload, "number");
      break;
    }
    case EventType::IssueComment:
    case EventType::CommitComment:
    case EventType::PullRequestReviewComment: {
      rec.action = string_at(payload, "action");
      if (const json* comment = find(payload, "comment"))
        if (auto body = string_at(*comment, "body")) rec.texts.push_back(*body);
      if (const json* issue = find(payload, "issue"); issue && issue->is_object())
        rec.number = int_at(*issue, "number");
      break;
    }
    case EventType::Watch:
    case EventType::Fork:
      break;
  }
}

}  // namespace detail

enum class LineOutcome { Record, TypeSkipped, Malformed };

/// Parses one archive line. On `Malformed`, `reason` says why.
inline LineOutcome parse_event_line(std::string_view line, EventRecord& out,
                                    std::string& reason) {
  using nlohmann::json;
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    reason = "invalid JSON object";
    return LineOutcome::Malformed;
  }
  try {
    auto type_name = detail::string_at(j, "type");
    if (!type_name) {
      reason = "missing event type";
      return LineOutcome::Malformed;
    }
    auto type = event_type_from_archive_name(*type_name);
    if (!type) return LineOutcome::TypeSkipped;
    auto repo = detail::repo_name(j);
    if (!repo) {
      reason = "missing repository name";
      return LineOutcome::Malformed;
    }
    auto created = detail::string_at(j, "created_at");
    std::optional<util::ParsedTime> when;
    if (created) when = util::parse_timestamp(*created);
    if (!when) {
      reason = "missing or unparseable created_at";
      return LineOutcome::Malformed;
    }
    out = EventRecord{};
    out.type = *type;
    out.repo_id = std::move(*repo);
    out.actor = detail::actor_name(j);
    out.created_at = when->utc;
    if (const json* payload = detail::find(j, "payload"); payload && payload->is_object())
      detail::fill_payload(*payload, out);
    return LineOutcome::Record;
  } catch (const json::exception& e) {
    reason = e.what();
    return LineOutcome::Malformed;
  }
}

/// Incremental line splitter that tracks the byte offset of each line.
class LineAssembler {
 public:
  template <typename OnLine>
  void feed(std::string_view chunk, OnLine&& on_line) {
    std::size_t start = 0;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (chunk[i] == '\n') {
        pending_.append(chunk.substr(start, i - start));
        emit(on_line);
        start = i + 1;
      }
    }
    pending_.append(chunk.substr(start));
  }

  template <typename OnLine>
  void finish(OnLine&& on_line) {
    if (!pending_.empty()) emit(on_line);
  }

 private:
  template <typename OnLine>
  void emit(OnLine& on_line) {
    if (!pending_.empty() && pending_.back() == '\r') pending_.pop_back();
    std::size_t len = pending_.size();
    bool blank = pending_.find_first_not_of(" \t") == std::string::npos;
    if (!blank) on_line(std::string_view(pending_), offset_);
    offset_ += len + 1;
    pending_.clear();
  }

  std::string pending_;
  std::size_t offset_ = 0;
};

/// Streams gzip (or zlib) data from `in`, decompressing multi-member files,
/// and hands each decompressed chunk to `on_chunk`. Throws StreamError on
/// corrupt or truncated input; zero-length input is an empty stream.
template <typename OnChunk>
void inflate_stream(std::istream& in, OnChunk&& on_chunk) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw StreamError("inflateInit failed", 0);
  struct Guard {
    z_stream* z;
    ~Guard() { inflateEnd(z); }
  } guard{&zs};

  std::array<char, 1 << 16> inbuf{};
  std::array<char, 1 << 17> outbuf{};
  std::size_t consumed = 0;
  bool any_input = false;
  bool member_open = false;
  bool output_full = false;
  for (;;) {
    if (zs.avail_in == 0 && !output_full) {
      in.read(inbuf.data(), static_cast<std::streamsize>(inbuf.size()));
      auto got = static_cast<std::size_t>(in.gcount());
      if (got == 0) break;
      any_input = true;
      zs.next_in = reinterpret_cast<Bytef*>(inbuf.data());
      zs.avail_in = static_cast<uInt>(got);
    }
    member_open = true;
    zs.next_out = reinterpret_cast<Bytef*>(outbuf.data());
    zs.avail_out = static_cast<uInt>(outbuf.size());
    uInt before = zs.avail_in;
    int rc = inflate(&zs, Z_NO_FLUSH);
    consumed += before - zs.avail_in;
    std::size_t produced = outbuf.size() - zs.avail_out;
    output_full = zs.avail_out == 0;
    if (produced) on_chunk(std::string_view(outbuf.data(), produced));
    if (rc == Z_STREAM_END) {
      member_open = false;
      if (inflateReset(&zs) != Z_OK) throw StreamError("inflateReset failed", consumed);
      continue;
    }
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) continue;
    if (rc != Z_OK)
      throw StreamError(std::string("decompression failed: ") + (zs.msg ? zs.msg : "zlib error"),
                        consumed);
  }
  if (any_input && member_open) throw StreamError("truncated compressed stream", consumed);
}

/// Parses a compressed JSON-Lines archive, calling `sink(EventRecord&&)` for
/// every retained event. A bad line never aborts the stream.
template <typename Sink>
ParseStats parse_archive_stream(std::istream& compressed, Sink&& sink) {
  ParseStats stats;
  LineAssembler lines;
  EventRecord rec;
  std::string reason;
  auto on_line = [&](std::string_view line, std::size_t offset) {
    ++stats.lines;
    switch (parse_event_line(line, rec, reason)) {
      case LineOutcome::Record:
        ++stats.records;
        sink(std::move(rec));
        break;
      case LineOutcome::TypeSkipped:
        ++stats.type_skipped;
        break;
      case LineOutcome::Malformed:
        ++stats.malformed_skipped;
        stats.malformed.push_back({offset, reason});
        break;
    }
  };
  inflate_stream(compressed, [&](std::string_view chunk) { lines.feed(chunk, on_line); });
  lines.finish(on_line);
  return stats;
}

inline ParseResult parse_archive_stream(std::istream& compressed) {
  ParseResult out;
  out.stats = parse_archive_stream(compressed,
                                   [&](EventRecord&& r) { out.events.push_back(std::move(r)); });
  return out;
}

}  // namespace oshealth::ingest
