#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evdi {

struct EventRecord {
  std::uint64_t t = 0;  // microseconds
  int x = 0;            // column
  int y = 0;            // row
  int p = 1;            // +1 or -1

  bool operator==(const EventRecord&) const = default;
};

struct SensorSize {
  int width = 0;
  int height = 0;
  bool operator==(const SensorSize&) const = default;
};

// Time-ordered polarity events from one sensor. Validated on construction
// and immutable afterwards.
class EventStream {
 public:
  EventStream() = default;
  // Throws OrderingError, BoundsError or FormatError on invalid records.
  EventStream(SensorSize sensor, std::vector<EventRecord> records);

  SensorSize sensor() const { return sensor_; }
  int width() const { return sensor_.width; }
  int height() const { return sensor_.height; }
  const std::vector<EventRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Sum of polarities over all records.
  long signed_polarity_sum() const;

  bool operator==(const EventStream&) const = default;

 private:
  SensorSize sensor_;
  std::vector<EventRecord> records_;
};

enum class EventFormat { csv, binary };

// Bytes per record of the binary format: u64 t, u16 x, u16 y, i8 p, little-endian.
inline constexpr std::size_t kBinaryRecordSize = 13;

EventStream parse_events(std::span<const std::uint8_t> bytes, EventFormat format, SensorSize sensor);
EventStream parse_events(std::string_view text, EventFormat format, SensorSize sensor);
std::vector<std::uint8_t> serialize_events(const EventStream& stream, EventFormat format);

// Records with t_a < t <= t_b, order preserved.
EventStream slice_events(const EventStream& stream, std::uint64_t t_a, std::uint64_t t_b);

// (t, x, y, p) -> (pivot - t, x, y, -p) for the backward-time branch. Polarity
// negation can be switched off; the record order is reversed so timestamps stay
// non-decreasing, which makes reversal with one pivot an exact involution.
EventStream reverse_time(const EventStream& stream, std::uint64_t pivot, bool negate_polarity = true);

// Format from file extension: ".csv" or ".evb".
EventFormat format_for_path(const std::string& path);
EventStream read_events_file(const std::string& path, SensorSize sensor);
void write_events_file(const std::string& path, const EventStream& stream);

}  // namespace evdi
