// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "avj/errors.hpp"

namespace avj {

namespace {

constexpr std::array<char, 8> kCheckpointMagic{'A', 'V', 'J', 'C', 'K', 'P', 'T', '\0'};
constexpr std::array<char, 8> kDatasetMagic{'A', 'V', 'J', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxDims = 8;

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b{};
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), b.size());
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) throw DataError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_i32(std::ostream& os, std::int32_t v) { put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v)); }
std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_le<std::uint32_t>(is)); }

std::string read_bytes(std::istream& is, std::size_t n) {
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("unexpected end of file");
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
  return is;
}

void check_magic(std::istream& is, const std::array<char, 8>& magic, const std::filesystem::path& path, const char* what) {
  std::array<char, 8> got{};
  if (!is.read(got.data(), got.size()) || got != magic) {
    throw IncompatibleError("'" + path.string() + "' is not a " + what + " file");
  }
}

void finish_write(std::ofstream& os, const std::filesystem::path& tmp, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("failed writing '" + tmp.string() + "'");
  os.close();
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
  for (int d : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
}

std::pair<std::string, Tensor> read_tensor(std::istream& is) {
  const auto name_len = get_le<std::uint32_t>(is);
  if (name_len > kMaxNameLen) throw DataError("tensor name length " + std::to_string(name_len) + " is implausible");
  std::string name = read_bytes(is, name_len);
  const auto ndim = get_le<std::uint32_t>(is);
  if (ndim == 0 || ndim > kMaxDims) throw DataError("tensor '" + name + "' has invalid rank " + std::to_string(ndim));
  Shape shape;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = get_le<std::uint32_t>(is);
    if (d == 0 || d > (1u << 24)) throw DataError("tensor '" + name + "' has invalid dimension");
    shape.push_back(static_cast<int>(d));
  }
  std::vector<float> values(shape_numel(shape));
  for (float& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(is));
  return {std::move(name), Tensor::from(std::move(shape), std::move(values))};
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  auto os = open_out(tmp);
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_le<std::uint32_t>(os, kCheckpointVersion);
  const std::string header = ckpt.header.dump();
  put_le<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_le<std::uint64_t>(os, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) write_tensor(os, name, t);
  finish_write(os, tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path);
  check_magic(is, kCheckpointMagic, path, "checkpoint");
  try {
    const auto version = get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
      throw IncompatibleError("checkpoint '" + path.string() + "' has format version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion));
    }
    Checkpoint ckpt;
    const auto header_len = get_le<std::uint64_t>(is);
    if (header_len > (1u << 24)) throw DataError("header too large");
    ckpt.header = nlohmann::json::parse(read_bytes(is, header_len));
    const auto count = get_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) ckpt.tensors.push_back(read_tensor(is));
    return ckpt;
  } catch (const DataError& e) {
    throw DataError("checkpoint '" + path.string() + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "': bad header: " + e.what());
  }
}

// ---- model config ---------------------------------------------------------

namespace {

nlohmann::json branch_to_json(const BranchConfig& b) {
  return {{"frames", b.frames}, {"dim", b.dim}, {"hidden_dim", b.hidden_dim}, {"n_layers", b.n_layers},
          {"n_inject_sites", b.n_inject_sites}};
}

BranchConfig branch_from_json(const nlohmann::json& j, Modality m) {
  BranchConfig b;
  b.modality = m;
  b.frames = j.at("frames").get<int>();
  b.dim = j.at("dim").get<int>();
  b.hidden_dim = j.at("hidden_dim").get<int>();
  b.n_layers = j.at("n_layers").get<int>();
  b.n_inject_sites = j.at("n_inject_sites").get<int>();
  return b;
}

nlohmann::json schedule_to_json(const ScheduleConfig& s) {
  return {{"kind", to_string(s.kind)}, {"T_max", s.t_max}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

ScheduleConfig schedule_from_json(const nlohmann::json& j) {
  return {parse_schedule_kind(j.at("kind").get<std::string>()), j.at("T_max").get<int>(),
          j.at("beta_start").get<double>(), j.at("beta_end").get<double>()};
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"video", branch_to_json(c.video)},
          {"audio", branch_to_json(c.audio)},
          {"video_schedule", schedule_to_json(c.video_schedule)},
          {"audio_schedule", schedule_to_json(c.audio_schedule)},
          {"inject_mode", to_string(c.inject_mode)},
          {"n_classes", c.n_classes},
          {"time_features", c.time_features},
          {"connector_radius", c.connector_radius},
          {"self_cond_clip", c.self_cond_clip},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.video = branch_from_json(j.at("video"), Modality::video);
    c.audio = branch_from_json(j.at("audio"), Modality::audio);
    c.video_schedule = schedule_from_json(j.at("video_schedule"));
    c.audio_schedule = schedule_from_json(j.at("audio_schedule"));
    c.inject_mode = parse_inject_mode(j.at("inject_mode").get<std::string>());
    c.n_classes = j.at("n_classes").get<int>();
    c.time_features = j.at("time_features").get<int>();
    c.connector_radius = j.at("connector_radius").get<int>();
    c.self_cond_clip = j.at("self_cond_clip").get<float>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleError(std::string("model config in checkpoint is incomplete: ") + e.what());
  }
}

Checkpoint make_checkpoint(const JointModel& model, const TrainState* state, const nlohmann::json& extra) {
  Checkpoint ck;
  ck.header = {{"model", model_config_to_json(model.config())}, {"parameter_count", model.parameter_count()}};
  ck.header["epochs_done"] = state ? state->epochs_done : 0;
  ck.header["adam_steps"] = state ? state->adam.steps() : 0;
  ck.header["has_optimizer"] = state != nullptr;
  if (extra.is_object()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) ck.header[it.key()] = it.value();
  }
  for (const auto& p : model.params().items()) ck.tensors.emplace_back(p.name, p.value.detach());
  if (state != nullptr) {
    auto& adam = const_cast<TrainState*>(state)->adam;
    const auto& items = model.params().items();
    for (std::size_t i = 0; i < items.size() && i < adam.first_moments().size(); ++i) {
      ck.tensors.emplace_back("adam.m." + items[i].name, adam.first_moments()[i].detach());
      ck.tensors.emplace_back("adam.v." + items[i].name, adam.second_moments()[i].detach());
    }
  }
  return ck;
}

JointModel model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("model")) throw IncompatibleError("checkpoint has no model config");
  JointModel model(model_config_from_json(ckpt.header.at("model")));
  for (auto& p : model.params().items()) {
    const Tensor* t = ckpt.find(p.name);
    if (t == nullptr) throw IncompatibleError("checkpoint is missing parameter '" + p.name + "'");
    if (t->shape() != p.value.shape()) {
      throw IncompatibleError("parameter '" + p.name + "' has shape " + shape_str(t->shape()) + ", model expects " +
                              shape_str(p.value.shape()));
    }
    std::copy(t->data().begin(), t->data().end(), p.value.mutable_data().begin());
  }
  return model;
}

TrainState train_state_from_checkpoint(const Checkpoint& ckpt, const JointModel& model, double lr) {
  Adam::Options ao;
  ao.lr = lr;
  TrainState st;
  st.adam = Adam(model.params(), ao);
  st.epochs_done = ckpt.header.value("epochs_done", 0);
  if (!ckpt.header.value("has_optimizer", false)) return st;
  st.adam.set_steps(ckpt.header.value("adam_steps", 0LL));
  const auto& items = model.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Tensor* m = ckpt.find("adam.m." + items[i].name);
    const Tensor* v = ckpt.find("adam.v." + items[i].name);
    if (m == nullptr || v == nullptr) throw IncompatibleError("checkpoint optimizer state misses '" + items[i].name + "'");
    std::copy(m->data().begin(), m->data().end(), st.adam.first_moments()[i].mutable_data().begin());
    std::copy(v->data().begin(), v->data().end(), st.adam.second_moments()[i].mutable_data().begin());
  }
  return st;
}

// ---- dataset --------------------------------------------------------------

void save_dataset(const std::filesystem::path& path, const DatasetFile& ds) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  auto os = open_out(tmp);
  os.write(kDatasetMagic.data(), kDatasetMagic.size());
  put_le<std::uint32_t>(os, kDatasetVersion);
  nlohmann::json header = ds.header;
  header["n_samples"] = ds.samples.size();
  const std::string line = header.dump() + "\n";
  os.write(line.data(), static_cast<std::streamsize>(line.size()));
  for (const Sample& s : ds.samples) {
    put_i32(os, s.label);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.event_times.size()));
    for (int e : s.event_times) put_i32(os, e);
    write_tensor(os, "video", s.video);
    write_tensor(os, "audio", s.audio);
  }
  finish_write(os, tmp, path);
}

DatasetFile load_dataset(const std::filesystem::path& path) {
  auto is = open_in(path);
  check_magic(is, kDatasetMagic, path, "dataset");
  try {
    const auto version = get_le<std::uint32_t>(is);
    if (version != kDatasetVersion) {
      throw IncompatibleError("dataset '" + path.string() + "' has format version " + std::to_string(version));
    }
    std::string line;
    if (!std::getline(is, line)) throw DataError("missing header line");
    DatasetFile ds;
    ds.header = nlohmann::json::parse(line);
    const auto n = ds.header.at("n_samples").get<std::size_t>();
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.label = get_i32(is);
      const auto n_events = get_le<std::uint32_t>(is);
      if (n_events > (1u << 20)) throw DataError("implausible event count");
      for (std::uint32_t k = 0; k < n_events; ++k) s.event_times.push_back(get_i32(is));
      auto [vn, video] = read_tensor(is);
      auto [an, audio] = read_tensor(is);
      if (vn != "video" || an != "audio") throw DataError("sample " + std::to_string(i) + " has unexpected tensor names");
      s.video = std::move(video);
      s.audio = std::move(audio);
      ds.samples.push_back(std::move(s));
    }
    return ds;
  } catch (const DataError& e) {
    throw DataError("dataset '" + path.string() + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset '" + path.string() + "': bad header: " + e.what());
  }
}

}  // namespace avj
