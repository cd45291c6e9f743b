#include "evdi/events.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>

#include "evdi/errors.hpp"

namespace evdi {

namespace {

void validate(SensorSize sensor, const std::vector<EventRecord>& records) {
  if (sensor.width <= 0 || sensor.height <= 0 || sensor.width > 65535 || sensor.height > 65535) {
    throw ArgumentError("sensor dimensions must be in [1, 65535]");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EventRecord& r = records[i];
    if (i > 0 && r.t < records[i - 1].t) {
      throw OrderingError("event " + std::to_string(i) + " has decreasing timestamp " +
                          std::to_string(r.t) + " < " + std::to_string(records[i - 1].t));
    }
    if (r.x < 0 || r.x >= sensor.width || r.y < 0 || r.y >= sensor.height) {
      throw BoundsError("event " + std::to_string(i) + " at (" + std::to_string(r.x) + "," +
                        std::to_string(r.y) + ") outside " + std::to_string(sensor.width) + "x" +
                        std::to_string(sensor.height) + " sensor");
    }
    if (r.p != 1 && r.p != -1) {
      throw FormatError("event " + std::to_string(i) + " has polarity " + std::to_string(r.p));
    }
  }
}

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
  T value{};
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw FormatError("line " + std::to_string(line) + ": invalid " + name + " '" +
                      std::string(field) + "'");
  }
  return value;
}

std::vector<EventRecord> parse_csv(std::string_view text) {
  std::vector<EventRecord> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::string_view fields[4];
    std::size_t count = 0;
    while (count < 4) {
      const std::size_t comma = line.find(',');
      fields[count++] = line.substr(0, comma);
      if (comma == std::string_view::npos) {
        line = {};
        break;
      }
      line.remove_prefix(comma + 1);
    }
    if (count != 4 || !line.empty()) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 4 fields t_us,x,y,p");
    }
    EventRecord r;
    r.t = parse_field<std::uint64_t>(fields[0], line_no, "timestamp");
    r.x = parse_field<int>(fields[1], line_no, "x");
    r.y = parse_field<int>(fields[2], line_no, "y");
    r.p = parse_field<int>(fields[3], line_no, "polarity");
    out.push_back(r);
  }
  return out;
}

std::vector<EventRecord> parse_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kBinaryRecordSize != 0) {
    throw FormatError("truncated binary event record: " + std::to_string(bytes.size()) +
                      " bytes is not a multiple of 13");
  }
  std::vector<EventRecord> out(bytes.size() / kBinaryRecordSize);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint8_t* b = bytes.data() + i * kBinaryRecordSize;
    std::uint64_t t = 0;
    for (int k = 7; k >= 0; --k) t = (t << 8) | b[k];
    out[i].t = t;
    out[i].x = b[8] | (b[9] << 8);
    out[i].y = b[10] | (b[11] << 8);
    out[i].p = static_cast<std::int8_t>(b[12]);
  }
  return out;
}

}  // namespace

EventStream::EventStream(SensorSize sensor, std::vector<EventRecord> records)
    : sensor_(sensor), records_(std::move(records)) {
  validate(sensor_, records_);
}

long EventStream::signed_polarity_sum() const {
  long s = 0;
  for (const auto& r : records_) s += r.p;
  return s;
}

EventStream parse_events(std::span<const std::uint8_t> bytes, EventFormat format, SensorSize sensor) {
  if (format == EventFormat::binary) return EventStream(sensor, parse_binary(bytes));
  return EventStream(sensor, parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                                        bytes.size())));
}

EventStream parse_events(std::string_view text, EventFormat format, SensorSize sensor) {
  return parse_events(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
      format, sensor);
}

std::vector<std::uint8_t> serialize_events(const EventStream& stream, EventFormat format) {
  std::vector<std::uint8_t> out;
  if (format == EventFormat::binary) {
    out.resize(stream.size() * kBinaryRecordSize);
    std::uint8_t* b = out.data();
    for (const auto& r : stream.records()) {
      for (int k = 0; k < 8; ++k) b[k] = static_cast<std::uint8_t>(r.t >> (8 * k));
      b[8] = static_cast<std::uint8_t>(r.x & 0xff);
      b[9] = static_cast<std::uint8_t>(r.x >> 8);
      b[10] = static_cast<std::uint8_t>(r.y & 0xff);
      b[11] = static_cast<std::uint8_t>(r.y >> 8);
      b[12] = static_cast<std::uint8_t>(static_cast<std::int8_t>(r.p));
      b += kBinaryRecordSize;
    }
    return out;
  }
  std::string text;
  text.reserve(stream.size() * 16);
  for (const auto& r : stream.records()) {
    text += std::to_string(r.t);
    text += ',';
    text += std::to_string(r.x);
    text += ',';
    text += std::to_string(r.y);
    text += r.p > 0 ? ",1\n" : ",-1\n";
  }
  out.assign(text.begin(), text.end());
  return out;
}

EventStream slice_events(const EventStream& stream, std::uint64_t t_a, std::uint64_t t_b) {
  if (t_a > t_b) {
    throw ArgumentError("slice_events: t_a " + std::to_string(t_a) + " > t_b " + std::to_string(t_b));
  }
  const auto& recs = stream.records();
  auto by_time = [](std::uint64_t t, const EventRecord& r) { return t < r.t; };
  auto lo = std::upper_bound(recs.begin(), recs.end(), t_a, by_time);
  auto hi = std::upper_bound(lo, recs.end(), t_b, by_time);
  return EventStream(stream.sensor(), std::vector<EventRecord>(lo, hi));
}

EventStream reverse_time(const EventStream& stream, std::uint64_t pivot, bool negate_polarity) {
  std::vector<EventRecord> out;
  out.reserve(stream.size());
  for (auto it = stream.records().rbegin(); it != stream.records().rend(); ++it) {
    if (it->t > pivot) {
      throw ArgumentError("reverse_time: event at t=" + std::to_string(it->t) + " after pivot " +
                          std::to_string(pivot));
    }
    out.push_back({pivot - it->t, it->x, it->y, negate_polarity ? -it->p : it->p});
  }
  return EventStream(stream.sensor(), std::move(out));
}

EventFormat format_for_path(const std::string& path) {
  auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".csv")) return EventFormat::csv;
  if (ends_with(".evb")) return EventFormat::binary;
  throw ArgumentError("unknown event file extension (expected .csv or .evb): " + path);
}

EventStream read_events_file(const std::string& path, SensorSize sensor) {
  const EventFormat format = format_for_path(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open event file", path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_events(bytes, format, sensor);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(std::string("corrupt event file (") + e.what() + ")", path);
  }
}

void write_events_file(const std::string& path, const EventStream& stream) {
  const auto bytes = serialize_events(stream, format_for_path(path));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open event file for writing", path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed", path);
}

}  // namespace evdi
