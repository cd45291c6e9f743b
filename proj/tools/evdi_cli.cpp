#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evdi/checkpoint.hpp"
#include "evdi/config.hpp"
#include "evdi/errors.hpp"
#include "evdi/experiment.hpp"
#include "evdi/fusion.hpp"
#include "evdi/image_io.hpp"
#include "evdi/metrics.hpp"
#include "evdi/parallel.hpp"
#include "evdi/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evdi;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::string resume;
  std::optional<int> steps;
  std::optional<int> clips;
  std::optional<int> frames;
  std::optional<int> u;
  std::optional<int> tile;
  std::optional<int> overlap;
  int clip = 0;
  int stop_after = 0;
  std::string pred;
  std::string gt;
  std::vector<int> indices;
  bool roundtrip = false;
};

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Config file first, then flags.
RunConfig resolve_config(const Options& o, const RunConfig& defaults = {}) {
  RunConfig c = o.config.empty() ? defaults : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.frames) c.frames = *o.frames;
  if (o.clips) c.dataset.clips = *o.clips;
  if (o.u) c.codec.u = *o.u;
  if (o.tile) c.sampling.tile = *o.tile;
  if (o.overlap) c.sampling.overlap = *o.overlap;
  if (o.steps) {
    c.pretrain.steps = *o.steps;
    c.adapt.steps = *o.steps;
  }
  if (!o.dataset.empty()) c.dataset_path = o.dataset;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  if (!o.out.empty()) c.out = o.out;
  if (o.threads) c.sampling.threads = resolve_threads(*o.threads);
  else if (c.sampling.threads <= 1) c.sampling.threads = resolve_threads(0);
  c.validate();
  return c;
}

fs::path out_dir(const RunConfig& c) {
  if (c.out.empty()) throw ArgumentError("no output directory (--out)");
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec || !fs::is_directory(c.out)) throw IoError("cannot create output directory", c.out);
  return c.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write", path.string());
  f << text;
  if (!f) throw IoError("write failed", path.string());
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c, json extra = json::object()) {
  json m = {{"command", command}, {"seed", c.seed}, {"config", c.to_json()}};
  m.update(extra);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::string loss_csv(const std::vector<double>& losses, int log_every) {
  std::string s = "step,loss,smoothed\n";
  const auto smooth = smooth_curve(losses);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const int step = static_cast<int>(i) + 1;
    if (step % log_every != 0 && i + 1 != losses.size()) continue;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g\n", step, losses[i], smooth[i]);
    s += buf;
  }
  return s;
}

std::vector<DatasetClip> load_dataset(const RunConfig& c) {
  if (c.dataset_path.empty()) throw ArgumentError("no dataset (--dataset)");
  return read_dataset(c.dataset_path);
}

void write_frames(const fs::path& dir, const Tensor& video) {
  for (int f = 0; f < video.dim(0); ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "%04d.%s", f, video.dim(1) == 1 ? "pgm" : "ppm");
    write_pnm((dir / name).string(), frame_image(video, f));
  }
}

// Numbered frames of a directory, or of its frames/ subdirectory for dataset clips.
Tensor read_frames(const fs::path& given) {
  fs::path dir = given;
  if (fs::is_directory(dir / "frames")) dir /= "frames";
  if (!fs::is_directory(dir)) throw ArgumentError("not a frame directory: " + given.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Tensor> frames;
  for (std::size_t i = 0; i < files.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu", i);
    if (files[i].stem().string() != name) {
      throw ArgumentError("missing frame file " + (dir / (std::string(name) + files[i].extension().string())).string());
    }
    frames.push_back(read_pnm(files[i].string()));
  }
  if (frames.empty()) throw ArgumentError("no frames in " + dir.string());
  return stack_frames(frames);
}

struct Stop {};

// Progress printer that can end training early at a logged step; the saved
// checkpoint then resumes to the uninterrupted result.
ProgressFn progress_printer(int stop_after) {
  return [stop_after](int step, double loss) {
    std::cout << "step " << step << " loss " << loss << "\n";
    if (stop_after > 0 && step >= stop_after) throw Stop{};
  };
}

LoadedCheckpoint load_required_checkpoint(const RunConfig& c, const char* command) {
  if (c.checkpoint.empty()) throw ArgumentError(std::string(command) + " requires a checkpoint (--checkpoint)");
  if (!fs::exists(c.checkpoint)) throw ArgumentError(std::string(command) + ": checkpoint not found: " + c.checkpoint);
  return load_checkpoint(c.checkpoint);
}

int cmd_simulate(const Options& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = out_dir(c);
  const auto clips = simulate_dataset(c.dataset, c.seed);
  write_dataset(dir.string(), clips);
  std::size_t events = 0;
  for (const auto& clip : clips) events += clip.events.size();
  write_manifest(dir, "simulate", c, {{"clips", clips.size()}, {"events", events}});
  std::cout << "clips " << clips.size() << " events " << events << "\n";
  return 0;
}

int cmd_pretrain(const Options& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = out_dir(c);
  const auto data = training_clips(load_dataset(c), c, true);
  std::optional<BaseDenoiser> base;
  TrainState state;
  if (!o.resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(o.resume);
    if (ck.stage != "pretrain" || !ck.state) throw ArgumentError("resume: " + o.resume + " holds no pre-training state");
    base.emplace(std::move(ck.base));
    state = std::move(*ck.state);
  } else {
    base.emplace(c.resolved_model());
    state = TrainState(base->params(), c.pretrain);
  }
  try {
    pretrain_base(*base, data, c.pretrain, c.schedule(), state, progress_printer(o.stop_after));
  } catch (const Stop&) {
    std::cout << "stopped at step " << state.step << "\n";
  }
  save_checkpoint((dir / "base.ckpt").string(), *base, nullptr, c.to_json(), &state);
  write_text(dir / "loss.csv", loss_csv(state.losses, c.pretrain.log_every));
  write_manifest(dir, "pretrain", c, {{"base_hash", hex(base->hash())}});
  std::cout << "base hash " << hex(base->hash()) << "\n";
  return 0;
}

int cmd_adapt(const Options& o) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = out_dir(c);
  std::optional<AdaptedModel> model;
  TrainState state;
  if (!o.resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(o.resume);
    if (ck.stage != "adapt" || !ck.state || !ck.branch) throw ArgumentError("resume: " + o.resume + " holds no adapter state");
    model.emplace(std::move(ck.base), std::move(*ck.branch));
    state = std::move(*ck.state);
  } else {
    LoadedCheckpoint ck = load_required_checkpoint(c, "adapt");
    if (ck.model.frames != c.frames) throw ArgumentError("adapt: checkpoint F differs from config frames");
    model.emplace(std::move(ck.base));
    state = TrainState(model->branch().params(), c.adapt);
  }
  const auto data = training_clips(load_dataset(c), c, true);
  const std::uint64_t before = model->base().hash();
  std::cout << "base hash before " << hex(before) << "\n";
  try {
    train_adapter(*model, data, c.adapt, c.schedule(), state, progress_printer(o.stop_after));
  } catch (const Stop&) {
    std::cout << "stopped at step " << state.step << "\n";
  }
  const std::uint64_t after = model->base().hash();
  std::cout << "base hash after " << hex(after) << "\n";
  save_checkpoint((dir / "adapted.ckpt").string(), model->base(), &model->branch(), c.to_json(), &state);
  write_text(dir / "loss.csv", loss_csv(state.losses, c.adapt.log_every));
  write_manifest(dir, "adapt", c,
                 {{"base_hash_before", hex(before)}, {"base_hash_after", hex(after)},
                  {"branch_hash", hex(model->branch().hash())}});
  return 0;
}

int cmd_sample(const Options& o, bool two_sided) {
  const char* name = two_sided ? "interpolate" : "generate";
  const RunConfig c = resolve_config(o);
  LoadedCheckpoint ck = load_required_checkpoint(c, name);
  if (ck.model.frames != c.frames) {
    throw ArgumentError(std::string(name) + ": checkpoint was trained for F=" + std::to_string(ck.model.frames) +
                        ", config asks for F=" + std::to_string(c.frames));
  }
  const auto clips = load_dataset(c);
  if (o.clip < 0 || o.clip >= static_cast<int>(clips.size())) throw ArgumentError("--clip out of range");
  const DatasetClip& clip = clips[static_cast<std::size_t>(o.clip)];
  if (static_cast<int>(clip.frame_times.size()) < c.frames) throw ArgumentError("clip shorter than F frames");
  const std::vector<std::uint64_t> times(clip.frame_times.begin(), clip.frame_times.begin() + c.frames);
  const Tensor start = frame_image(clip.ground_truth, 0);
  const fs::path dir = out_dir(c);

  std::optional<AdaptedModel> adapted;
  if (ck.branch) adapted.emplace(std::move(ck.base), std::move(*ck.branch));
  const Denoiser& model = adapted ? static_cast<const Denoiser&>(*adapted) : ck.base;
  const Pipeline p = make_pipeline(model, adapted ? &adapted->branch() : nullptr, c);
  const Tensor video = two_sided ? interpolate(p, start, frame_image(clip.ground_truth, c.frames - 1), clip.events, times)
                                 : generate(p, start, clip.events, times);
  write_frames(dir, video);
  write_manifest(dir, name, c,
                 {{"clip", o.clip}, {"frames", video.dim(0)}, {"checkpoint", c.checkpoint},
                  {"base_hash", hex(adapted ? adapted->base().hash() : ck.base.hash())}});
  std::cout << "wrote " << video.dim(0) << " frames to " << dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  const RunConfig c = resolve_config(o);
  if (o.pred.empty() || o.gt.empty()) throw ArgumentError("evaluate requires --pred and --gt");
  const fs::path dir = out_dir(c);
  // Dataset-style roots (clip_NNNN subdirectories) are compared clip by clip.
  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
  if (fs::is_directory(o.pred)) {
    for (const auto& e : fs::directory_iterator(o.pred)) {
      const std::string n = e.path().filename().string();
      if (e.is_directory() && n.rfind("clip_", 0) == 0) pairs.push_back({n, {e.path(), fs::path(o.gt) / n}});
    }
  }
  std::sort(pairs.begin(), pairs.end());
  if (pairs.empty()) pairs.push_back({fs::path(o.pred).filename().string(), {o.pred, o.gt}});

  std::vector<std::pair<std::string, EvalReport>> reports;
  for (const auto& [name, paths] : pairs) {
    const Tensor pred = read_frames(paths.first), gt = read_frames(paths.second);
    if (pred.dim(0) != gt.dim(0)) {
      throw ArgumentError("frame count mismatch for " + name + ": " + std::to_string(pred.dim(0)) + " predicted vs " +
                          std::to_string(gt.dim(0)) + " ground truth");
    }
    std::vector<int> idx = o.indices;
    if (idx.empty())
      for (int f = 1; f + 1 < pred.dim(0); ++f) idx.push_back(f);
    if (idx.empty()) idx.push_back(0);
    EvalReport r = evaluate_clip(pred, gt, idx, c.codec, o.roundtrip);
    write_text(dir / (name + ".json"), r.to_json().dump(2) + "\n");
    reports.push_back({name, std::move(r)});
  }
  const std::string csv = summary_csv(reports);
  write_text(dir / "summary.csv", csv);
  write_manifest(dir, "evaluate", c, {{"pred", o.pred}, {"gt", o.gt}, {"roundtrip", o.roundtrip}});
  std::cout << csv;
  return 0;
}

int cmd_reproduce(const Options& o) {
  const RunConfig c = resolve_config(o, control_experiment_config());
  const fs::path dir = out_dir(c);
  std::optional<AdaptedModel> model;
  const ControlExperiment r = run_control_experiment(c, [](const std::string& s) { std::cout << s << std::endl; }, &model);
  save_checkpoint((dir / "adapted.ckpt").string(), model->base(), &model->branch(), c.to_json(), nullptr);
  write_text(dir / "pretrain_loss.csv", loss_csv(r.pretrain_losses, c.pretrain.log_every));
  write_text(dir / "adapt_loss.csv", loss_csv(r.adapt_losses, c.adapt.log_every));
  write_text(dir / "results.json", r.to_json().dump(2) + "\n");
  for (std::size_t i = 0; i < r.suite.names.size(); ++i) {
    for (const auto& [tag, video] : {std::pair<const char*, const Tensor*>{"events", &r.suite.outputs_events[i]},
                                     {"zero", &r.suite.outputs_zero[i]},
                                     {"blend", &r.suite.outputs_blend[i]}}) {
      const fs::path sub = dir / r.suite.names[i] / tag;
      fs::create_directories(sub);
      write_frames(sub, *video);
    }
  }
  write_manifest(dir, "reproduce", c);
  std::printf("psnr events %.3f zeroed %.3f blend %.3f | centroid events %.3f px zeroed %.3f px\n",
              r.suite.mean_psnr_events, r.suite.mean_psnr_zero, r.suite.mean_psnr_blend,
              r.suite.mean_centroid_events, r.suite.mean_centroid_zero);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evdi: event-conditioned latent video diffusion toolkit"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--seed", o.seed, "Override the run seed");
    sub->add_option("--threads", o.threads, "Worker threads (falls back to EVDI_THREADS)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--frames", o.frames, "Frames per clip F");
    sub->add_option("--u", o.u, "Pre-encode upsampling factor");
    sub->add_option("--tile", o.tile, "Latent tile size");
    sub->add_option("--overlap", o.overlap, "Latent tile overlap");
  };
  auto* simulate = app.add_subcommand("simulate", "Render a synthetic event dataset");
  common(simulate);
  simulate->add_option("--clips", o.clips, "Number of clips");
  auto* pretrain = app.add_subcommand("pretrain", "Pre-train the base denoiser");
  auto* adapt = app.add_subcommand("adapt", "Train the event-control branch on a frozen base");
  for (auto* sub : {pretrain, adapt}) {
    common(sub);
    sub->add_option("--dataset", o.dataset, "Dataset directory");
    sub->add_option("--steps", o.steps, "Training steps");
    sub->add_option("--resume", o.resume, "Continue from a checkpoint with optimizer state");
    sub->add_option("--stop-after", o.stop_after, "End after this many steps (checked at logged steps)");
  }
  adapt->add_option("--checkpoint", o.checkpoint, "Base checkpoint");
  auto* generate_cmd = app.add_subcommand("generate", "Generate frames from a start frame and events");
  auto* interpolate_cmd = app.add_subcommand("interpolate", "Interpolate between two keyframes with events");
  for (auto* sub : {generate_cmd, interpolate_cmd}) {
    common(sub);
    sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
    sub->add_option("--dataset", o.dataset, "Dataset directory");
    sub->add_option("--clip", o.clip, "Clip index");
  }
  auto* evaluate = app.add_subcommand("evaluate", "Score predicted frames against ground truth");
  common(evaluate);
  evaluate->add_option("--pred", o.pred, "Predicted frames (or dataset-style root)");
  evaluate->add_option("--gt", o.gt, "Ground-truth frames (or dataset root)");
  evaluate->add_option("--indices", o.indices, "Frame indices to score (default: hidden frames)");
  evaluate->add_flag("--roundtrip", o.roundtrip, "Pass both sides through the codec first");
  auto* reproduce = app.add_subcommand("reproduce", "Run the event-control experiment end to end");
  common(reproduce);
  reproduce->add_option("--steps", o.steps, "Training steps per stage");
  reproduce->add_option("--clips", o.clips, "Training clips");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*pretrain) return cmd_pretrain(o);
    if (*adapt) return cmd_adapt(o);
    if (*generate_cmd) return cmd_sample(o, false);
    if (*interpolate_cmd) return cmd_sample(o, true);
    if (*evaluate) return cmd_evaluate(o);
    if (*reproduce) return cmd_reproduce(o);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
