#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "evdi/checkpoint.hpp"
#include "evdi/errors.hpp"
#include "helpers.hpp"

using namespace evdi;
using evdi::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.frames = 2;
  c.latent_channels = 2;
  c.hidden = 4;
  c.time_features = 4;
  c.event_in_channels = 2;
  c.event_channels = 3;
  c.event_hidden = 3;
  c.event_stride = 2;
  c.seed = 5;
  return c;
}

std::vector<TrainingClip> small_data(std::mt19937_64& rng) {
  std::vector<TrainingClip> out;
  for (int i = 0; i < 4; ++i) {
    TrainingClip c;
    c.x0 = random_tensor({2, 2, 8, 8}, rng);
    c.i_cond = random_tensor({2, 2, 8, 8}, rng);
    c.events = random_tensor({2, 2, 16, 16}, rng, 0, 1);
    out.push_back(std::move(c));
  }
  return out;
}

TrainConfig short_run(int steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch = 2;
  t.lr = 1e-2;
  t.seed = 9;
  t.log_every = 1;
  return t;
}

struct Interrupt {};

std::string scratch(const std::string& name) { return (fs::temp_directory_path() / ("evdi_ckpt_" + name)).string(); }

void flip_last_byte(const std::string& path) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(-1, std::ios::end);
  char c;
  f.get(c);
  f.seekp(-1, std::ios::end);
  f.put(static_cast<char>(c ^ 0x5a));
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("adapted checkpoints round-trip parameters and metadata") {
    std::mt19937_64 rng(1);
    AdaptedModel model{BaseDenoiser(small_config())};
    for (nn::Param* p : model.branch().params().all())
      for (double& v : p->value.values()) v = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    const std::string path = scratch("roundtrip.ckpt");
    save_checkpoint(path, model.base(), &model.branch(), {{"note", "x"}}, nullptr);
    LoadedCheckpoint ck = load_checkpoint(path);
    REQUIRE(ck.branch.has_value());
    CHECK(ck.meta.at("note") == "x");
    CHECK(ck.base.hash() == model.base().hash());
    CHECK(ck.branch->hash() == model.branch().hash());
    CHECK_FALSE(ck.state.has_value());
    const AdaptedModel back(std::move(ck.base), std::move(*ck.branch));
    const Tensor z = random_tensor({2, 2, 8, 8}, rng), ic = random_tensor({2, 2, 8, 8}, rng);
    const Tensor ev = random_tensor({2, 2, 16, 16}, rng, 0, 1);
    CHECK(back.predict_noise(z, 7, ic, back.encode_events(ev)) == model.predict_noise(z, 7, ic, model.encode_events(ev)));
    fs::remove(path);
  }

  TEST_CASE("corruption and missing files are reported by category") {
    const BaseDenoiser base(small_config());
    const std::string path = scratch("corrupt.ckpt");
    save_checkpoint(path, base, nullptr, {}, nullptr);
    CHECK_FALSE(load_checkpoint(path).branch.has_value());
    flip_last_byte(path);
    CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);
    {
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      f << "NOTACKPT0000000000000000";
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    fs::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }

  TEST_CASE("interrupted pre-training resumes to the uninterrupted result") {
    std::mt19937_64 rng(2);
    const auto data = small_data(rng);
    const NoiseSchedule sched = make_schedule();
    const TrainConfig cfg = short_run(6);

    BaseDenoiser straight(small_config());
    TrainState s1(straight.params(), cfg);
    pretrain_base(straight, data, cfg, sched, s1);

    BaseDenoiser first(small_config());
    TrainState s2(first.params(), cfg);
    CHECK_THROWS_AS(pretrain_base(first, data, cfg, sched, s2,
                                  [](int step, double) {
                                    if (step == 3) throw Interrupt{};
                                  }),
                    Interrupt);
    const std::string path = scratch("resume.ckpt");
    save_checkpoint(path, first, nullptr, {}, &s2);
    LoadedCheckpoint ck = load_checkpoint(path);
    REQUIRE(ck.state.has_value());
    CHECK(ck.stage == "pretrain");
    CHECK(ck.state->step == 3);
    pretrain_base(ck.base, data, cfg, sched, *ck.state);
    CHECK(ck.base.hash() == straight.hash());
    CHECK(ck.state->losses == s1.losses);
    fs::remove(path);
  }

  TEST_CASE("interrupted adapter training resumes to the uninterrupted result") {
    std::mt19937_64 rng(3);
    const auto data = small_data(rng);
    const NoiseSchedule sched = make_schedule();
    const TrainConfig cfg = short_run(5);

    AdaptedModel straight{BaseDenoiser(small_config())};
    TrainState s1(straight.branch().params(), cfg);
    train_adapter(straight, data, cfg, sched, s1);

    AdaptedModel first{BaseDenoiser(small_config())};
    TrainState s2(first.branch().params(), cfg);
    CHECK_THROWS_AS(train_adapter(first, data, cfg, sched, s2,
                                  [](int step, double) {
                                    if (step == 2) throw Interrupt{};
                                  }),
                    Interrupt);
    const std::string path = scratch("resume_adapt.ckpt");
    save_checkpoint(path, first.base(), &first.branch(), {}, &s2);
    LoadedCheckpoint ck = load_checkpoint(path);
    REQUIRE(ck.state.has_value());
    CHECK(ck.stage == "adapt");
    AdaptedModel resumed(std::move(ck.base), std::move(*ck.branch));
    train_adapter(resumed, data, cfg, sched, *ck.state);
    CHECK(resumed.branch().hash() == straight.branch().hash());
    CHECK(resumed.base().hash() == straight.base().hash());
    CHECK(ck.state->losses == s1.losses);
    fs::remove(path);
  }
}
