// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/commands.hpp"

#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "avj/errors.hpp"
#include "avj/loss_profile.hpp"
#include "avj/serialize.hpp"

namespace avj {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_parent(const fs::path& p) {
  const fs::path dir = p.parent_path();
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " '" + p.string() + "' does not exist");
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os << text;
    if (!os) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + p.string() + "': " + ec.message());
}

json data_header(const RunConfig& c) {
  return {{"n_frames", c.data.n_frames},   {"video_dim", c.data.video_dim}, {"audio_frames", c.data.audio_frames},
          {"audio_dim", c.data.audio_dim}, {"n_events", c.data.n_events},   {"jitter", c.data.jitter},
          {"n_classes", c.data.n_classes}, {"seed", c.data_seed()}};
}

json timesteps_json(const TimestepMap& m) {
  return {{"T", m.T}, {"T_v", m.T_v}, {"T_a", m.T_a}, {"gamma", m.gamma}};
}

// Dataset shape must agree with the model it feeds.
void check_dataset_fits(const DatasetFile& ds, const ModelConfig& mc, const fs::path& path) {
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    if (s.video.shape() != Shape{mc.video.frames, mc.video.dim} || s.audio.shape() != Shape{mc.audio.frames, mc.audio.dim}) {
      throw IncompatibleError("dataset '" + path.string() + "' sample " + std::to_string(i) + " has shapes " +
                              shape_str(s.video.shape()) + "/" + shape_str(s.audio.shape()) +
                              " which do not match the model");
    }
    if (s.label < 0 || s.label >= mc.n_classes) {
      throw IncompatibleError("dataset '" + path.string() + "' sample " + std::to_string(i) + " has label " +
                              std::to_string(s.label) + " outside the model's classes");
    }
  }
}

JointModel load_model(const fs::path& path) {
  require_file(path, "checkpoint");
  return model_from_checkpoint(load_checkpoint(path));
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// ---- make-data ------------------------------------------------------------

json cmd_make_data(const RunConfig& c, std::ostream* log) {
  const fs::path out = c.paths.dataset;
  DatasetFile ds;
  ds.header = data_header(c);
  ds.samples = make_samples(c.pair_spec(), c.data.n_samples);
  ensure_parent(out);
  save_dataset(out, ds);
  if (log) *log << "wrote " << ds.samples.size() << " pairs to " << out.string() << "\n";
  json summary = ds.header;
  summary["n_samples"] = ds.samples.size();
  summary["path"] = out.string();
  return summary;
}

// ---- train ----------------------------------------------------------------

json cmd_train(const RunConfig& c, std::ostream* log) {
  const fs::path data_path = c.paths.dataset;
  const fs::path ckpt_path = c.paths.checkpoint;
  const fs::path csv_path = c.paths.loss_csv;
  require_file(data_path, "dataset");
  const bool resume = c.train.resume && fs::exists(ckpt_path);
  const DatasetFile ds = load_dataset(data_path);
  if (ds.samples.empty()) throw DataError("dataset '" + data_path.string() + "' has no samples");

  const ModelConfig mc = c.model_config();
  std::optional<JointModel> model;
  TrainState state;
  if (resume) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    model.emplace(model_from_checkpoint(ck));
    if (model_config_to_json(model->config()) != model_config_to_json(mc)) {
      throw IncompatibleError("checkpoint '" + ckpt_path.string() + "' was trained with a different model config");
    }
    state = train_state_from_checkpoint(ck, *model, c.train.lr);
  } else {
    model.emplace(mc);
    state = make_train_state(*model, c.train_options());
  }
  check_dataset_fits(ds, mc, data_path);

  ensure_parent(ckpt_path);
  ensure_parent(csv_path);
  const json extra = {{"timesteps", timesteps_json(c.timesteps)}, {"train_seed", c.train_seed()}};
  {
    std::ofstream csv(csv_path, resume ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot open '" + csv_path.string() + "' for writing");
    if (!resume) csv << "epoch,loss\n";
  }

  const int start = state.epochs_done;
  auto on_epoch = [&](int epoch, double loss) {
    std::ofstream csv(csv_path, std::ios::app);
    csv << epoch << "," << fmt_double(loss) << "\n";
    if (!csv) throw IoError("failed appending to '" + csv_path.string() + "'");
    if (log) *log << "epoch " << epoch << " loss " << loss << "\n" << std::flush;
    if ((epoch - start) % c.train.save_every == 0) save_checkpoint(ckpt_path, make_checkpoint(*model, &state, extra));
  };
  const TrainReport report = train(*model, ds.samples, c.train_options(), state, on_epoch);
  save_checkpoint(ckpt_path, make_checkpoint(*model, &state, extra));

  json summary = {{"checkpoint", ckpt_path.string()},
                  {"loss_csv", csv_path.string()},
                  {"first_epoch", report.first_epoch},
                  {"epochs_done", state.epochs_done},
                  {"parameter_count", model->parameter_count()},
                  {"epoch_loss", report.epoch_loss}};
  return summary;
}

// ---- generate / eval ------------------------------------------------------

AlignReport score_pair(const Sample& s, const MetricsSection& m, int audio_per_video) {
  const PeakSet a = detect_onsets_relative(s.audio, audio_per_video, m.threshold_ratio);
  const PeakSet v = detect_motion_peaks_relative(s.video, m.threshold_ratio);
  return av_align(a, v, m.window);
}

json evaluate_samples(std::span<const Sample> samples, const MetricsSection& m, std::span<const Sample> reference) {
  if (samples.empty()) throw DataError("evaluate: no samples");
  json pairs = json::array();
  double sp = 0, sr = 0, smod = 0, soff = 0;
  for (const Sample& s : samples) {
    const int ratio = s.audio.rows() / s.video.rows();
    if (ratio < 1 || s.audio.rows() % s.video.rows() != 0) {
      throw DataError("evaluate: audio frames must be a multiple of video frames");
    }
    const AlignReport r = score_pair(s, m, ratio);
    pairs.push_back({{"p", r.p}, {"r", r.r}, {"score_modified", r.score_modified}, {"score_official", r.score_official}});
    sp += r.p;
    sr += r.r;
    smod += r.score_modified;
    soff += r.score_official;
  }
  const double n = static_cast<double>(samples.size());
  json out = {{"n", samples.size()},
              {"window", m.window},
              {"threshold_ratio", m.threshold_ratio},
              {"mean", {{"p", sp / n}, {"r", sr / n}, {"score_modified", smod / n}, {"score_official", soff / n}}},
              {"pairs", pairs}};
  if (!reference.empty()) {
    std::vector<Tensor> gv, ga, rv, ra;
    for (const Sample& s : samples) {
      gv.push_back(s.video);
      ga.push_back(s.audio);
    }
    for (const Sample& s : reference) {
      rv.push_back(s.video);
      ra.push_back(s.audio);
    }
    if (gv.front().shape() == rv.front().shape() && ga.front().shape() == ra.front().shape()) {
      out["moment_distance"] = {{"video", moment_distance(gv, rv)}, {"audio", moment_distance(ga, ra)}};
    }
  }
  return out;
}

json cmd_generate(const RunConfig& c, std::ostream* log) {
  const fs::path ckpt_path = c.paths.checkpoint;
  const fs::path out_dir = c.paths.out_dir;
  const JointModel model = load_model(ckpt_path);
  const ModelConfig& mc = model.config();
  if (c.timesteps.T_v > mc.video_schedule.t_max || c.timesteps.T_a > mc.audio_schedule.t_max) {
    throw IncompatibleError("timesteps.T_v/T_a exceed the checkpoint's schedules");
  }
  std::optional<DatasetFile> reference;
  if (fs::is_regular_file(c.paths.dataset)) reference = load_dataset(c.paths.dataset);

  DatasetFile out;
  out.header = {{"generated", true},
                {"checkpoint", ckpt_path.string()},
                {"timesteps", timesteps_json(c.timesteps)},
                {"guidance", {{"w_v", c.guidance.w_v}, {"w_a", c.guidance.w_a}}},
                {"inject_mode", to_string(mc.inject_mode)},
                {"seed", c.generate_seed()}};
  for (int i = 0; i < c.generate_samples; ++i) {
    Rng rng(derive_seed(c.generate_seed(), static_cast<std::uint64_t>(i)));
    const int label = i % mc.n_classes;
    Generation g = joint_generate(model, c.timesteps, label, c.guidance, rng, c.timesteps.T);
    out.samples.push_back({g.video, g.audio, label, {}});
    if (log && (i + 1) % 16 == 0) *log << "generated " << (i + 1) << "/" << c.generate_samples << "\n" << std::flush;
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory '" + out_dir.string() + "': " + ec.message());
  save_dataset(out_dir / "samples.avjd", out);
  json metrics = evaluate_samples(out.samples, c.metrics,
                                  reference ? std::span<const Sample>(reference->samples) : std::span<const Sample>{});
  metrics["settings"] = out.header;
  write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
  json summary = {{"samples", (out_dir / "samples.avjd").string()},
                  {"metrics", (out_dir / "metrics.json").string()},
                  {"mean", metrics["mean"]}};
  if (metrics.contains("moment_distance")) summary["moment_distance"] = metrics["moment_distance"];
  return summary;
}

json cmd_eval(const RunConfig& c, const fs::path& samples, std::ostream* log) {
  fs::path file = samples;
  if (fs::is_directory(file)) file /= "samples.avjd";
  require_file(file, "samples file");
  const DatasetFile ds = load_dataset(file);
  std::optional<DatasetFile> reference;
  if (fs::is_regular_file(c.paths.dataset) && fs::absolute(c.paths.dataset) != fs::absolute(file)) {
    reference = load_dataset(c.paths.dataset);
  }
  json metrics = evaluate_samples(ds.samples, c.metrics,
                                  reference ? std::span<const Sample>(reference->samples) : std::span<const Sample>{});
  const fs::path out = file.parent_path() / "metrics.json";
  write_text(out, metrics.dump(2) + "\n");
  if (log) *log << "scored " << ds.samples.size() << " pairs from " << file.string() << "\n";
  json summary = {{"metrics", out.string()}, {"mean", metrics["mean"]}};
  if (metrics.contains("moment_distance")) summary["moment_distance"] = metrics["moment_distance"];
  return summary;
}

// ---- profile-loss ---------------------------------------------------------

json cmd_profile_loss(const RunConfig& c, std::ostream* log) {
  const fs::path data_path = c.paths.dataset;
  const fs::path csv_path = c.paths.profile_csv;
  require_file(data_path, "dataset");
  const JointModel model = load_model(c.paths.checkpoint);
  const DatasetFile ds = load_dataset(data_path);
  if (ds.samples.empty()) throw DataError("dataset '" + data_path.string() + "' has no samples");
  check_dataset_fits(ds, model.config(), data_path);

  TimestepMap map = c.timesteps;
  map.T = c.profile.T;
  Rng rng(c.profile_seed());
  const LossProfile prof = profile_loss(model, ds.samples, map, c.profile.n_bins, c.profile.samples_per_bin, rng);
  write_text(csv_path, prof.to_csv());
  if (log) *log << "gamma " << c.timesteps.gamma << " curve distance " << prof.curve_distance() << "\n";
  return {{"profile_csv", csv_path.string()},
          {"gamma", c.timesteps.gamma},
          {"T", map.T},
          {"curve_distance", prof.curve_distance()},
          {"bins", prof.bins},
          {"loss_v", prof.loss_v},
          {"loss_a", prof.loss_a}};
}

}  // namespace avj
