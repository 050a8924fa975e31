#pragma once

#include <span>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/ingest/event.hpp"

namespace oshealth::ingest {

/// Events with start <= created_at < end, in their original order.
inline std::vector<EventRecord> apply_event_window(std::span<const EventRecord> events,
                                                   Timestamp start, Timestamp end) {
  if (start > end) throw ArgumentError("event window start is after its end");
  std::vector<EventRecord> out;
  for (const auto& e : events)
    if (e.created_at >= start && e.created_at < end) out.push_back(e);
  return out;
}

}  // namespace oshealth::ingest
