#pragma once

// Append-only event store.
//
// Layout: <root>/<owner>__<repo>/<YYYY-MM>.events, one file per repository
// and UTC month. See docs/event_store_format.md for the byte layout.

#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/ingest/event.hpp"
#include "oshealth/util/hash.hpp"

namespace oshealth::ingest {

inline constexpr char kStoreMagic[8] = {'O', 'S', 'H', 'E', 'V', 'T', 'S', '\0'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderSize = 16;

namespace codec {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    auto n = u32();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw StoreError("corrupt event record", 0);
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

enum : std::uint8_t { kHasTz = 1, kHasAction = 2, kHasNumber = 4, kHasCount = 8 };

inline std::string encode(const EventRecord& e) {
  std::string out;
  out.push_back(static_cast<char>(e.type));
  std::uint8_t flags = (e.tz_offset ? kHasTz : 0) | (e.action ? kHasAction : 0) |
                       (e.number ? kHasNumber : 0) | (e.count ? kHasCount : 0);
  out.push_back(static_cast<char>(flags));
  put_str(out, e.repo_id);
  put_str(out, e.actor);
  put_u64(out, static_cast<std::uint64_t>(e.created_at));
  if (e.tz_offset) put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(*e.tz_offset)));
  if (e.action) put_str(out, *e.action);
  if (e.number) put_u64(out, static_cast<std::uint64_t>(*e.number));
  if (e.count) put_u64(out, static_cast<std::uint64_t>(*e.count));
  put_u32(out, static_cast<std::uint32_t>(e.texts.size()));
  for (const auto& t : e.texts) put_str(out, t);
  return out;
}

inline EventRecord decode(std::string_view payload) {
  Reader r(payload);
  EventRecord e;
  auto type = r.u8();
  if (type >= kAllEventTypes.size()) throw StoreError("unknown event type in store", 0);
  e.type = static_cast<EventType>(type);
  auto flags = r.u8();
  e.repo_id = r.str();
  e.actor = r.str();
  e.created_at = static_cast<Timestamp>(r.u64());
  if (flags & kHasTz) e.tz_offset = static_cast<std::int16_t>(static_cast<std::int32_t>(r.u32()));
  if (flags & kHasAction) e.action = r.str();
  if (flags & kHasNumber) e.number = static_cast<std::int64_t>(r.u64());
  if (flags & kHasCount) e.count = static_cast<std::int64_t>(r.u64());
  auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) e.texts.push_back(r.str());
  if (!r.done()) throw StoreError("trailing bytes in event record", 0);
  return e;
}

inline std::uint32_t crc(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace codec

struct PartitionRange {
  std::string repo_id;
  std::string month;
  std::uint64_t begin = 0;  // byte offsets within the partition file
  std::uint64_t end = 0;
};

struct AppendReceipt {
  std::size_t count = 0;               // records written
  std::size_t duplicates_skipped = 0;  // records dropped by the dedup key
  std::uint64_t bytes_written = 0;
  std::vector<PartitionRange> ranges;
};

struct StoreOptions {
  bool dedup = true;
  bool fsync = true;
};

class EventStore {
 public:
  explicit EventStore(std::filesystem::path root, StoreOptions options = {})
      : root_(std::move(root)), options_(options) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw StoreError("cannot create store at " + root_.string() + ": " + ec.message(), 0);
  }

  const std::filesystem::path& root() const { return root_; }

  static std::string partition_dir_name(const std::string& repo_id) {
    auto slash = repo_id.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == repo_id.size())
      throw ArgumentError("repo_id must be owner/name: '" + repo_id + "'");
    return repo_id.substr(0, slash) + "__" + repo_id.substr(slash + 1);
  }

  static std::string repo_id_from_dir_name(const std::string& dir) {
    auto sep = dir.find("__");
    if (sep == std::string::npos) return {};
    return dir.substr(0, sep) + "/" + dir.substr(sep + 2);
  }

  std::filesystem::path partition_path(const std::string& repo_id, const std::string& month) const {
    return root_ / partition_dir_name(repo_id) / (month + ".events");
  }

  /// Appends `events`, grouping them into (repo, month) partitions. Records
  /// keep their relative order within each partition.
  AppendReceipt append(std::span<const EventRecord> events) {
    std::map<std::pair<std::string, std::string>, std::vector<const EventRecord*>> groups;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& e : events) {
      auto key = std::make_pair(e.repo_id, util::month_key(e.created_at));
      auto [it, inserted] = groups.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.push_back(&e);
    }
    AppendReceipt receipt;
    for (const auto& key : order) append_partition(key.first, key.second, groups[key], receipt);
    return receipt;
  }

  std::vector<EventRecord> read_partition(const std::string& repo_id, const std::string& month) const {
    std::vector<EventRecord> out;
    scan(partition_path(repo_id, month), [&](std::string_view payload) {
      out.push_back(codec::decode(payload));
    });
    return out;
  }

  /// All events of one repository, partitions in month order.
  std::vector<EventRecord> read_repo(const std::string& repo_id) const {
    std::vector<EventRecord> out;
    for (const auto& m : months(repo_id)) {
      auto part = read_partition(repo_id, m);
      out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
  }

  std::vector<std::string> months(const std::string& repo_id) const {
    std::vector<std::string> out;
    auto dir = root_ / partition_dir_name(repo_id);
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) return out;
    for (const auto& f : std::filesystem::directory_iterator(dir)) {
      if (f.path().extension() == ".events") out.push_back(f.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::string> repos() const {
    std::vector<std::string> out;
    for (const auto& d : std::filesystem::directory_iterator(root_)) {
      if (!d.is_directory()) continue;
      auto id = repo_id_from_dir_name(d.path().filename().string());
      if (!id.empty()) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Partition {
    std::mutex mutex;
    bool keys_loaded = false;
    std::unordered_set<std::uint64_t> keys;
  };

  Partition& partition(const std::filesystem::path& path) {
    std::lock_guard lock(partitions_mutex_);
    auto& slot = partitions_[path.string()];
    if (!slot) slot = std::make_unique<Partition>();
    return *slot;
  }

  template <typename OnRecord>
  static void scan(const std::filesystem::path& path, OnRecord&& on_record) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) return;
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, &std::fclose);
    char header[kStoreHeaderSize];
    if (std::fread(header, 1, kStoreHeaderSize, f) != kStoreHeaderSize ||
        std::memcmp(header, kStoreMagic, sizeof kStoreMagic) != 0)
      throw StoreError("not an event store partition: " + path.string(), 0);
    codec::Reader hr(std::string_view(header + 8, 8));
    if (auto v = hr.u32(); v != kStoreVersion)
      throw StoreError("unsupported store version " + std::to_string(v) + " in " + path.string(), 0);
    std::string payload;
    for (;;) {
      unsigned char frame[8];
      std::size_t got = std::fread(frame, 1, 8, f);
      if (got == 0) break;
      if (got != 8) throw StoreError("truncated record frame in " + path.string(), 0);
      codec::Reader fr(std::string_view(reinterpret_cast<char*>(frame), 8));
      auto len = fr.u32();
      auto sum = fr.u32();
      payload.resize(len);
      if (std::fread(payload.data(), 1, len, f) != len)
        throw StoreError("truncated record in " + path.string(), 0);
      if (codec::crc(payload) != sum) throw StoreError("checksum mismatch in " + path.string(), 0);
      on_record(std::string_view(payload));
    }
  }

  void append_partition(const std::string& repo_id, const std::string& month,
                        const std::vector<const EventRecord*>& records, AppendReceipt& receipt) {
    auto path = partition_path(repo_id, month);
    Partition& part = partition(path);
    std::lock_guard lock(part.mutex);
    if (options_.dedup && !part.keys_loaded) {
      scan(path, [&](std::string_view payload) { part.keys.insert(util::fnv1a(payload)); });
      part.keys_loaded = true;
    }
    std::string buffer;
    std::size_t pending = 0;
    std::unordered_set<std::uint64_t> new_keys;
    for (const EventRecord* e : records) {
      std::string payload = codec::encode(*e);
      if (options_.dedup) {
        auto key = util::fnv1a(payload);
        if (part.keys.count(key) || !new_keys.insert(key).second) {
          ++receipt.duplicates_skipped;
          continue;
        }
      }
      codec::put_u32(buffer, static_cast<std::uint32_t>(payload.size()));
      codec::put_u32(buffer, codec::crc(payload));
      buffer += payload;
      ++pending;
    }
    if (pending == 0) return;

    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw StoreError("cannot create " + path.parent_path().string(), receipt.count);
    bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) throw StoreError("cannot open " + path.string() + " for append", receipt.count);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, &std::fclose);
    if (fresh) {
      std::string header(kStoreMagic, sizeof kStoreMagic);
      codec::put_u32(header, kStoreVersion);
      codec::put_u32(header, 0);
      if (std::fwrite(header.data(), 1, header.size(), f) != header.size())
        throw StoreError("write failed on " + path.string(), receipt.count);
    }
    std::fseek(f, 0, SEEK_END);
    auto begin = static_cast<std::uint64_t>(std::ftell(f));
    if (std::fwrite(buffer.data(), 1, buffer.size(), f) != buffer.size() || std::fflush(f) != 0)
      throw StoreError("write failed on " + path.string(), receipt.count);
    if (options_.fsync && ::fsync(fileno(f)) != 0)
      throw StoreError("fsync failed on " + path.string(), receipt.count);
    part.keys.insert(new_keys.begin(), new_keys.end());
    receipt.count += pending;
    receipt.bytes_written += buffer.size();
    receipt.ranges.push_back({repo_id, month, begin, begin + buffer.size()});
  }

  std::filesystem::path root_;
  StoreOptions options_;
  std::mutex partitions_mutex_;
  std::map<std::string, std::unique_ptr<Partition>> partitions_;
};

}  // namespace oshealth::ingest
