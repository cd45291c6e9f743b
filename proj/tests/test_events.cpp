#include <filesystem>
#include <random>

#include "doctest.h"
#include "evdi/errors.hpp"
#include "evdi/events.hpp"

using namespace evdi;

namespace {

EventStream random_stream(std::mt19937_64& rng, std::size_t n, SensorSize s) {
  std::vector<EventRecord> r;
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    t += rng() % 4;  // repeated timestamps included
    r.push_back({t, static_cast<int>(rng() % s.width), static_cast<int>(rng() % s.height), (rng() & 1) ? 1 : -1});
  }
  return EventStream(s, std::move(r));
}

std::vector<std::uint64_t> times(const EventStream& s) {
  std::vector<std::uint64_t> out;
  for (const auto& r : s.records()) out.push_back(r.t);
  return out;
}

}  // namespace

TEST_SUITE("events") {
  const SensorSize kSensor{8, 6};

  TEST_CASE("csv parsing maps fields directly") {
    const EventStream s = parse_events(std::string_view("100,3,2,1\n200,3,2,-1\n"), EventFormat::csv, kSensor);
    REQUIRE(s.size() == 2);
    CHECK(s.records()[0] == EventRecord{100, 3, 2, 1});
    CHECK(s.records()[1] == EventRecord{200, 3, 2, -1});
    CHECK(parse_events(std::string_view(""), EventFormat::csv, kSensor).empty());
  }

  TEST_CASE("invalid records raise the matching error") {
    CHECK_THROWS_AS(parse_events(std::string_view("200,3,2,1\n100,3,2,1\n"), EventFormat::csv, kSensor), OrderingError);
    CHECK_THROWS_AS(parse_events(std::string_view("100,8,2,1\n"), EventFormat::csv, kSensor), BoundsError);
    CHECK_THROWS_AS(parse_events(std::string_view("100,1,6,1\n"), EventFormat::csv, kSensor), BoundsError);
    CHECK_THROWS_AS(parse_events(std::string_view("100,1,1,0\n"), EventFormat::csv, kSensor), FormatError);
    const std::vector<std::uint8_t> truncated(12, 0);
    CHECK_THROWS_AS(parse_events(std::span<const std::uint8_t>(truncated), EventFormat::binary, kSensor), FormatError);
  }

  TEST_CASE("binary records are 13 little-endian bytes") {
    const EventStream s(kSensor, {{0x0102030405060708ULL, 5, 4, -1}});
    const auto bytes = serialize_events(s, EventFormat::binary);
    REQUIRE(bytes.size() == 13);
    CHECK(bytes[0] == 0x08);
    CHECK(bytes[7] == 0x01);
    CHECK(bytes[8] == 5);
    CHECK(bytes[9] == 0);
    CHECK(bytes[10] == 4);
    CHECK(bytes[12] == 0xff);
    CHECK(serialize_events(EventStream(kSensor, {}), EventFormat::binary).empty());
    CHECK(serialize_events(EventStream(kSensor, {}), EventFormat::csv).empty());
  }

  TEST_CASE("serialize then parse is the identity for random streams") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const EventStream s = random_stream(rng, rng() % 50, kSensor);
      for (EventFormat f : {EventFormat::csv, EventFormat::binary}) {
        const auto bytes = serialize_events(s, f);
        CHECK(parse_events(std::span<const std::uint8_t>(bytes), f, kSensor) == s);
      }
    }
  }

  TEST_CASE("slicing is half-open at the start") {
    const EventStream s(kSensor, {{10, 0, 0, 1}, {20, 0, 0, 1}, {30, 0, 0, 1}});
    CHECK(times(slice_events(s, 10, 30)) == std::vector<std::uint64_t>{20, 30});
    CHECK(slice_events(s, 0, 5).empty());
    CHECK_THROWS_AS(slice_events(s, 31, 30), ArgumentError);
  }

  TEST_CASE("slices over a partition concatenate to the whole slice") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const EventStream s = random_stream(rng, 80, kSensor);
      const std::uint64_t end = s.records().back().t;
      std::vector<std::uint64_t> cuts{0};
      for (int i = 0; i < 4; ++i) cuts.push_back(rng() % (end + 1));
      cuts.push_back(end);
      std::sort(cuts.begin(), cuts.end());
      std::vector<EventRecord> joined;
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const auto part = slice_events(s, cuts[i], cuts[i + 1]);
        joined.insert(joined.end(), part.records().begin(), part.records().end());
      }
      CHECK(joined == slice_events(s, 0, end).records());
      // Shrinking the window never adds records.
      CHECK(slice_events(s, cuts[1], cuts[3]).size() <= slice_events(s, cuts[0], cuts[4]).size());
    }
  }

  TEST_CASE("time reversal maps records, is an involution and flips the polarity sum") {
    const EventStream one(kSensor, {{10, 1, 1, 1}});
    CHECK(reverse_time(one, 100).records() == std::vector<EventRecord>{{90, 1, 1, -1}});
    CHECK(reverse_time(EventStream(kSensor, {}), 5).empty());
    CHECK_THROWS_AS(reverse_time(one, 5), ArgumentError);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const EventStream s = random_stream(rng, 60, kSensor);
      const std::uint64_t pivot = s.records().back().t + 3;
      const EventStream r = reverse_time(s, pivot);
      CHECK(r.size() == s.size());
      CHECK(r.signed_polarity_sum() == -s.signed_polarity_sum());
      CHECK(reverse_time(r, pivot) == s);
      CHECK(reverse_time(s, pivot, false).signed_polarity_sum() == s.signed_polarity_sum());
    }
  }

  TEST_CASE("event files round trip by extension") {
    const auto dir = std::filesystem::temp_directory_path() / "evdi_events_io";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(6);
    const EventStream s = random_stream(rng, 30, kSensor);
    for (const char* name : {"e.csv", "e.evb"}) {
      const auto p = (dir / name).string();
      write_events_file(p, s);
      CHECK(read_events_file(p, kSensor) == s);
    }
    CHECK_THROWS_AS(read_events_file((dir / "nope.evb").string(), kSensor), IoError);
  }
}
