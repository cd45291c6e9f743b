#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "evdi/config.hpp"
#include "evdi/errors.hpp"

using namespace evdi;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults round-trip through JSON") {
    RunConfig c;
    c.seed = 17;
    c.codec = CodecConfig{CodecKind::lossy_pool, 4, 2};
    c.sampling.orientation = WeightOrientation::literal;
    c.sampling.feather = true;
    c.model.hidden = 12;
    c.adapt.steps = 77;
    c.dataset.family = SceneFamily::ambiguous;
    c.dataset.events.contrast_threshold = 0.3;
    c.dataset_path = "data";
    const RunConfig back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.seed == 17);
    CHECK(back.codec.kind == CodecKind::lossy_pool);
    CHECK(back.sampling.orientation == WeightOrientation::literal);
    CHECK(back.model.hidden == 12);
    CHECK(back.adapt.steps == 77);
    CHECK(back.dataset.family == SceneFamily::ambiguous);
    CHECK(back.dataset.events.contrast_threshold == 0.3);
    CHECK(RunConfig::from_json(json::object()).to_json() == RunConfig{}.to_json());
  }

  TEST_CASE("derived model fields follow codec, stacker and frames") {
    RunConfig c;
    c.frames = 5;
    c.codec = CodecConfig{CodecKind::lossless_rearrange, 2, 1};
    c.stacker.stacks = 2;
    const ModelConfig m = c.resolved_model();
    CHECK(m.frames == 5);
    CHECK(m.latent_channels == 4);
    CHECK(m.event_in_channels == 4);
    CHECK(m.event_stride == 2);
  }

  TEST_CASE("unknown fields and bad values name the offending path") {
    CHECK(config_error({{"bogus", 1}}).find("bogus") != std::string::npos);
    CHECK(config_error({{"codec", {{"dd", 4}}}}).find("codec.dd") != std::string::npos);
    CHECK(config_error({{"sampling", {{"tiles", 4}}}}).find("sampling.tiles") != std::string::npos);
    CHECK(config_error({{"dataset", {{"events", {{"threshold", 0.1}}}}}}).find("dataset.events.threshold") !=
          std::string::npos);
    CHECK(config_error({{"codec", {{"d", "four"}}}}).find("codec.d") != std::string::npos);
    CHECK(config_error({{"codec", {{"kind", "jpeg"}}}}).find("codec.kind") != std::string::npos);
    CHECK(config_error({{"schedule", {{"beta_max", 1.5}}}}).find("schedule") != std::string::npos);
    CHECK(config_error({{"sampling", {{"overlap", 16}}}}).find("sampling.overlap") != std::string::npos);
    CHECK(config_error({{"adapt", {{"steps", -1}}}}).find("adapt") != std::string::npos);
  }

  TEST_CASE("config files load and report I/O problems") {
    const auto path = std::filesystem::temp_directory_path() / "evdi_config_test.json";
    {
      std::ofstream f(path);
      f << R"({"seed": 3, "frames": 5, "sampling": {"tile": 8, "overlap": 2}})";
    }
    const RunConfig c = load_run_config(path.string());
    CHECK(c.seed == 3);
    CHECK(c.sampling.tile == 8);
    {
      std::ofstream f(path);
      f << "{not json";
    }
    CHECK_THROWS_AS(load_run_config(path.string()), ConfigError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_run_config(path.string()), IoError);
  }
}
