#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oshealth/util/time.hpp"

namespace oshealth::ingest {

/// The event kinds the pipeline consumes. Everything else is dropped at parse time.
enum class EventType : std::uint8_t {
  Watch = 0,
  Fork,
  Push,
  PullRequest,
  IssueComment,
  CommitComment,
  PullRequestReviewComment,
  Issues,
};

inline constexpr std::array<EventType, 8> kAllEventTypes = {
    EventType::Watch,        EventType::Fork,          EventType::Push,
    EventType::PullRequest,  EventType::IssueComment,  EventType::CommitComment,
    EventType::PullRequestReviewComment, EventType::Issues};

inline constexpr std::string_view archive_name(EventType t) {
  switch (t) {
    case EventType::Watch: return "WatchEvent";
    case EventType::Fork: return "ForkEvent";
    case EventType::Push: return "PushEvent";
    case EventType::PullRequest: return "PullRequestEvent";
    case EventType::IssueComment: return "IssueCommentEvent";
    case EventType::CommitComment: return "CommitCommentEvent";
    case EventType::PullRequestReviewComment: return "PullRequestReviewCommentEvent";
    case EventType::Issues: return "IssuesEvent";
  }
  return "";
}

inline std::optional<EventType> event_type_from_archive_name(std::string_view name) {
  for (EventType t : kAllEventTypes)
    if (archive_name(t) == name) return t;
  return std::nullopt;
}

/// True for the kinds that count as someone working on the repository
/// (as opposed to starring or forking it).
inline constexpr bool is_contribution(EventType t) {
  switch (t) {
    case EventType::Push:
    case EventType::PullRequest:
    case EventType::IssueComment:
    case EventType::CommitComment:
    case EventType::PullRequestReviewComment:
      return true;
    default:
      return false;
  }
}

inline constexpr bool is_comment(EventType t) {
  return t == EventType::IssueComment || t == EventType::CommitComment ||
         t == EventType::PullRequestReviewComment;
}

/// One normalized repository event.
struct EventRecord {
  std::string repo_id;  // "owner/name"
  EventType type = EventType::Watch;
  std::string actor;
  Timestamp created_at = 0;
  std::optional<std::int16_t> tz_offset;  // minutes east of UTC, [-720, 840]
  std::optional<std::string> action;      // "opened", "closed", "merged", ...
  std::optional<std::int64_t> number;     // issue / pull request number
  std::vector<std::string> texts;         // commit messages, comment bodies
  std::optional<std::int64_t> count;      // commits carried by a push

  bool operator==(const EventRecord&) const = default;
};

}  // namespace oshealth::ingest
