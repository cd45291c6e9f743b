#include "evdi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "evdi/errors.hpp"

namespace evdi {

namespace {

constexpr char kMagic[8] = {'E', 'V', 'D', 'I', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Entry {
  std::string name;
  const Tensor* tensor;
};

void collect(std::vector<Entry>& out, const nn::ParamSet& params, const std::string& prefix = "") {
  for (const nn::Param* p : params.all()) out.push_back({prefix + p->name, &p->value});
}

void restore(nn::ParamSet& params, const std::map<std::string, Tensor>& tensors, const std::string& prefix = "") {
  for (nn::Param* p : params.all()) {
    auto it = tensors.find(prefix + p->name);
    if (it == tensors.end()) throw FormatError("checkpoint is missing tensor " + prefix + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw FormatError("checkpoint tensor " + prefix + p->name + " has shape " + it->second.shape_string() +
                        ", model expects " + p->value.shape_string());
    }
    p->value = it->second;
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const BaseDenoiser& base, const ControlBranch* branch,
                     const nlohmann::json& meta, const TrainState* state) {
  std::vector<Entry> entries;
  collect(entries, base.params());
  if (branch) collect(entries, branch->params());

  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["kind"] = branch ? "adapted" : "base";
  manifest["model"] = base.config().to_json();
  manifest["meta"] = meta;
  manifest["base_hash"] = hex64(base.hash());
  if (branch) manifest["branch_hash"] = hex64(branch->hash());

  if (state) {
    const nn::ParamSet& trained = branch ? branch->params() : base.params();
    const auto all = trained.all();
    if (state->adam.first_moments().size() != all.size()) throw ArgumentError("save_checkpoint: optimizer/parameter mismatch");
    for (std::size_t i = 0; i < all.size(); ++i) {
      entries.push_back({"adam.m." + all[i]->name, &state->adam.first_moments()[i]});
      entries.push_back({"adam.v." + all[i]->name, &state->adam.second_moments()[i]});
    }
    std::ostringstream rng;
    rng << state->rng;
    manifest["state"] = {{"stage", branch ? "adapt" : "pretrain"},
                         {"step", state->step},
                         {"adam_steps", state->adam.steps_taken()},
                         {"adam", {{"lr", state->adam.config().lr},
                                   {"beta1", state->adam.config().beta1},
                                   {"beta2", state->adam.config().beta2},
                                   {"eps", state->adam.config().eps},
                                   {"grad_clip", state->adam.config().grad_clip}}},
                         {"rng", rng.str()},
                         {"losses", state->losses}};
  }

  nlohmann::json list = nlohmann::json::array();
  for (const Entry& e : entries) {
    list.push_back({{"name", e.name}, {"shape", e.tensor->shape()}, {"hash", hex64(content_hash(e.tensor->values()))}});
  }
  manifest["tensors"] = list;

  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing", path);
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t size = text.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Entry& e : entries) {
    out.write(reinterpret_cast<const char*>(e.tensor->data()),
              static_cast<std::streamsize>(e.tensor->size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint", path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint", path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError(path + ": not a checkpoint file");
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&size), sizeof size);
  if (!in) throw FormatError(path + ": truncated header");
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (size > (1ULL << 30)) throw FormatError(path + ": implausible manifest size");
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw FormatError(path + ": truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad manifest: " + e.what());
  }

  std::map<std::string, Tensor> tensors;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    Tensor value(t.at("shape").get<std::vector<int>>());
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!in) throw FormatError(path + ": truncated tensor data at " + name);
    if (hex64(content_hash(value.values())) != t.at("hash").get<std::string>()) {
      throw IntegrityError(path + ": hash mismatch for tensor " + name);
    }
    tensors.emplace(name, std::move(value));
  }

  LoadedCheckpoint ck(ModelConfig::from_json(manifest.at("model")));
  ck.manifest = manifest;
  ck.meta = manifest.value("meta", nlohmann::json::object());
  restore(ck.base.params(), tensors);
  const bool adapted = manifest.at("kind").get<std::string>() == "adapted";
  if (adapted) {
    ck.branch.emplace(ck.model, ck.base);
    restore(ck.branch->params(), tensors);
  }
  if (manifest.contains("state")) {
    const auto& s = manifest.at("state");
    ck.stage = s.at("stage").get<std::string>();
    nn::ParamSet& trained = adapted ? ck.branch->params() : ck.base.params();
    const auto& a = s.at("adam");
    TrainState st;
    st.adam = nn::Adam(trained, nn::AdamConfig{a.at("lr").get<double>(), a.at("beta1").get<double>(),
                                                a.at("beta2").get<double>(), a.at("eps").get<double>(),
                                                a.at("grad_clip").get<double>()});
    st.adam.set_steps_taken(s.at("adam_steps").get<long>());
    const auto all = trained.all();
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto m = tensors.find("adam.m." + all[i]->name);
      auto v = tensors.find("adam.v." + all[i]->name);
      if (m == tensors.end() || v == tensors.end()) throw FormatError(path + ": missing optimizer state for " + all[i]->name);
      st.adam.first_moments()[i] = m->second;
      st.adam.second_moments()[i] = v->second;
    }
    std::istringstream rng(s.at("rng").get<std::string>());
    rng >> st.rng;
    st.step = s.at("step").get<int>();
    st.losses = s.at("losses").get<std::vector<double>>();
    ck.state = std::move(st);
  }
  return ck;
}

}  // namespace evdi
