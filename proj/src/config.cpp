#include "evdi/config.hpp"

#include <fstream>
#include <set>

#include "evdi/errors.hpp"

namespace evdi {

using nlohmann::json;

namespace {

// Reads fields out of a JSON object, rejecting unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      j_.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config field " + path(item.key().c_str()));
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename Fn>
void rethrow_as(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.rfind(where, 0) == 0 ? msg : where + ": " + msg);
  } catch (const ArgumentError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

const char* family_name(SceneFamily f) {
  switch (f) {
    case SceneFamily::random: return "random";
    case SceneFamily::ambiguous: return "ambiguous";
    case SceneFamily::still: return "still";
  }
  return "random";
}

}  // namespace

json event_model_to_json(const EventModelConfig& c) {
  return {{"contrast_threshold", c.contrast_threshold},
          {"eps", c.eps},
          {"timestamp_jitter", c.timestamp_jitter},
          {"jitter_fraction", c.jitter_fraction},
          {"seed", c.seed}};
}

EventModelConfig event_model_from_json(const json& j, const std::string& where) {
  EventModelConfig c;
  Reader r(j, where);
  r.get("contrast_threshold", c.contrast_threshold);
  r.get("eps", c.eps);
  r.get("timestamp_jitter", c.timestamp_jitter);
  r.get("jitter_fraction", c.jitter_fraction);
  r.get("seed", c.seed);
  r.finish();
  if (!(c.contrast_threshold > 0.0)) throw ConfigError(r.path("contrast_threshold") + " must be positive");
  if (!(c.eps > 0.0)) throw ConfigError(r.path("eps") + " must be positive");
  if (!(c.jitter_fraction >= 0.0 && c.jitter_fraction <= 1.0)) {
    throw ConfigError(r.path("jitter_fraction") + " must lie in [0, 1]");
  }
  return c;
}

NoiseSchedule RunConfig::schedule() const {
  NoiseSchedule s;
  rethrow_as("schedule", [&] { s = make_schedule(steps, beta_min, beta_max); });
  return s;
}

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.frames = frames;
  m.latent_channels = codec.latent_channels(dataset.channels);
  m.event_in_channels = 2 * stacker.stacks;
  m.event_stride = codec.d;
  return m;
}

void RunConfig::validate() const {
  if (frames < 1) throw ConfigError("frames must be >= 1");
  schedule();
  rethrow_as("codec", [&] { evdi::validate(codec); });
  if (stacker.stacks < 1) throw ConfigError("stacker.stacks must be >= 1");
  rethrow_as("model", [&] { resolved_model().validate(); });
  rethrow_as("pretrain", [&] { pretrain.validate(); });
  rethrow_as("adapt", [&] { adapt.validate(); });
  const DatasetConfig& d = dataset;
  if (d.clips < 1) throw ConfigError("dataset.clips must be >= 1");
  if (d.skip < 0) throw ConfigError("dataset.skip must be >= 0");
  if (d.keyframes < 2) throw ConfigError("dataset.keyframes must be >= 2");
  if (d.height < 1 || d.width < 1) throw ConfigError("dataset.height/width must be >= 1");
  if (d.channels != 1 && d.channels != 3) throw ConfigError("dataset.channels must be 1 or 3");
  if (d.frame_interval_us < 1) throw ConfigError("dataset.frame_interval_us must be >= 1");
  if (d.video_stride < 1) throw ConfigError("dataset.video_stride must be >= 1");
  if (!(d.speed_min >= 0.0 && d.speed_min <= d.speed_max)) throw ConfigError("dataset.speed_min/speed_max out of order");
  if (!(d.object_size > 0.0)) throw ConfigError("dataset.object_size must be positive");
  if (d.directions < 1) throw ConfigError("dataset.directions must be >= 1");
  if (d.speed_max / d.video_stride >= 1.0) {
    throw ConfigError("dataset.video_stride too small: motion per render step must stay below 1 px");
  }
  if (sampling.tile < 1) throw ConfigError("sampling.tile must be >= 1");
  if (sampling.overlap < 0 || sampling.overlap >= sampling.tile) throw ConfigError("sampling.overlap must lie in [0, tile)");
  if (!sampling.forward_weights.empty() && static_cast<int>(sampling.forward_weights.size()) != frames) {
    throw ConfigError("sampling.forward_weights must have one entry per frame");
  }
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["frames"] = frames;
  j["schedule"] = {{"steps", steps}, {"beta_min", beta_min}, {"beta_max", beta_max}};
  j["codec"] = {{"kind", codec.kind == CodecKind::lossless_rearrange ? "lossless" : "lossy"},
                {"d", codec.d},
                {"u", codec.u}};
  j["stacker"] = {{"stacks", stacker.stacks},
                  {"normalization",
                   stacker.normalization == StackNormalization::per_stack_max ? "per_stack_max" : "global_max"}};
  j["sampling"] = sampling.to_json();
  json m = model.to_json();
  for (const char* derived : {"frames", "latent_channels", "event_in_channels", "event_stride"}) m.erase(derived);
  j["model"] = m;
  j["pretrain"] = pretrain.to_json();
  j["adapt"] = adapt.to_json();
  const DatasetConfig& d = dataset;
  j["dataset"] = {{"family", family_name(d.family)},
                  {"clips", d.clips},
                  {"skip", d.skip},
                  {"keyframes", d.keyframes},
                  {"height", d.height},
                  {"width", d.width},
                  {"channels", d.channels},
                  {"frame_interval_us", d.frame_interval_us},
                  {"video_stride", d.video_stride},
                  {"speed_min", d.speed_min},
                  {"speed_max", d.speed_max},
                  {"object_size", d.object_size},
                  {"background", d.background},
                  {"intensity", d.intensity},
                  {"directions", d.directions},
                  {"events", event_model_to_json(d.events)}};
  j["paths"] = {{"dataset", dataset_path}, {"checkpoint", checkpoint}, {"out", out}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("frames", c.frames);
  if (const json* s = r.child("schedule")) {
    Reader rs(*s, "schedule");
    rs.get("steps", c.steps);
    rs.get("beta_min", c.beta_min);
    rs.get("beta_max", c.beta_max);
    rs.finish();
  }
  if (const json* s = r.child("codec")) {
    Reader rc(*s, "codec");
    std::string kind = c.codec.kind == CodecKind::lossless_rearrange ? "lossless" : "lossy";
    rc.get("kind", kind);
    if (kind == "lossless") c.codec.kind = CodecKind::lossless_rearrange;
    else if (kind == "lossy") c.codec.kind = CodecKind::lossy_pool;
    else throw ConfigError("codec.kind must be \"lossless\" or \"lossy\"");
    rc.get("d", c.codec.d);
    rc.get("u", c.codec.u);
    rc.finish();
  }
  if (const json* s = r.child("stacker")) {
    Reader rs(*s, "stacker");
    std::string norm = "per_stack_max";
    rs.get("stacks", c.stacker.stacks);
    rs.get("normalization", norm);
    if (norm == "per_stack_max") c.stacker.normalization = StackNormalization::per_stack_max;
    else if (norm == "global_max") c.stacker.normalization = StackNormalization::global_max;
    else throw ConfigError("stacker.normalization must be \"per_stack_max\" or \"global_max\"");
    rs.finish();
  }
  if (const json* s = r.child("sampling")) {
    Reader rs(*s, "sampling");
    for (const char* key : {"tile", "overlap", "grid_offset", "feather", "orientation", "forward_weights",
                            "anchor_first_frame", "negate_backward_polarity", "zero_events", "seed", "threads"}) {
      rs.child(key);
    }
    rs.finish();
    c.sampling = SamplingConfig::from_json(*s);
  }
  if (const json* s = r.child("model")) {
    Reader rm(*s, "model");
    for (const char* key : {"hidden", "blocks", "copied_blocks", "time_features", "event_channels", "event_hidden",
                            "seed"}) {
      rm.child(key);
    }
    rm.finish();
    json m = c.model.to_json();
    m.update(*s);
    rethrow_as("model", [&] {
      const ModelConfig parsed = ModelConfig::from_json(m);
      c.model.hidden = parsed.hidden;
      c.model.blocks = parsed.blocks;
      c.model.copied_blocks = parsed.copied_blocks;
      c.model.time_features = parsed.time_features;
      c.model.event_channels = parsed.event_channels;
      c.model.event_hidden = parsed.event_hidden;
      c.model.seed = parsed.seed;
    });
  }
  for (auto [key, target] : {std::pair<const char*, TrainConfig*>{"pretrain", &c.pretrain}, {"adapt", &c.adapt}}) {
    if (const json* s = r.child(key)) {
      Reader rt(*s, key);
      for (const char* k : {"lr", "steps", "batch", "accumulation", "seed", "grad_clip", "crop", "cosine_decay",
                            "log_every"}) {
        rt.child(k);
      }
      rt.finish();
      json t = target->to_json();
      t.update(*s);
      rethrow_as(key, [&] { *target = TrainConfig::from_json(t); });
    }
  }
  if (const json* s = r.child("dataset")) {
    Reader rd(*s, "dataset");
    DatasetConfig& d = c.dataset;
    std::string family = family_name(d.family);
    rd.get("family", family);
    if (family == "random") d.family = SceneFamily::random;
    else if (family == "ambiguous") d.family = SceneFamily::ambiguous;
    else if (family == "still") d.family = SceneFamily::still;
    else throw ConfigError("dataset.family must be \"random\", \"ambiguous\" or \"still\"");
    rd.get("clips", d.clips);
    rd.get("skip", d.skip);
    rd.get("keyframes", d.keyframes);
    rd.get("height", d.height);
    rd.get("width", d.width);
    rd.get("channels", d.channels);
    rd.get("frame_interval_us", d.frame_interval_us);
    rd.get("video_stride", d.video_stride);
    rd.get("speed_min", d.speed_min);
    rd.get("speed_max", d.speed_max);
    rd.get("object_size", d.object_size);
    rd.get("background", d.background);
    rd.get("intensity", d.intensity);
    rd.get("directions", d.directions);
    if (const json* e = rd.child("events")) d.events = event_model_from_json(*e, "dataset.events");
    rd.finish();
  }
  if (const json* s = r.child("paths")) {
    Reader rp(*s, "paths");
    rp.get("dataset", c.dataset_path);
    rp.get("checkpoint", c.checkpoint);
    rp.get("out", c.out);
    rp.finish();
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config", path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace evdi
