// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. The trained-model criteria (3, 4, 5) share one
// working directory: a CMC-PE model and a cross-attention baseline trained
// from the shipped toy config.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "avj/commands.hpp"
#include "avj/config.hpp"
#include "avj/datagen.hpp"
#include "avj/diffusion.hpp"
#include "avj/jointmodel.hpp"
#include "avj/metrics.hpp"
#include "avj/schedule.hpp"
#include "avj/serialize.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace avj;
using avj::testing::bitwise_equal;
using avj::testing::check_gradients;
using avj::testing::max_abs_diff;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- diffusion identities -------------------------------------------------

Outcome diffusion_identities(const RunConfig& c) {
  const Schedule sv(c.video_schedule), sa(c.audio_schedule);
  Rng rng(101);

  double inv_err = 0.0;
  for (const Schedule* s : {&sv, &sa}) {
    for (int t = 1; t <= s->t_max(); ++t) {
      const Tensor x0 = rng.randn({4, 8}), eps = rng.randn({4, 8});
      inv_err = std::max(inv_err, max_abs_diff(predict_x0(q_sample(x0, t, eps, *s), eps, t, *s), x0));
    }
  }

  // Joint DDIM over every step with a denoiser that knows the data.
  const Tensor x0_v = rng.randn({16, 8}), x0_a = rng.randn({64, 8});
  const avj::testing::OracleDenoiser oracle(x0_v, x0_a, c.video_schedule, c.audio_schedule);
  const TimestepMap full{c.video_schedule.t_max, c.video_schedule.t_max, c.audio_schedule.t_max, 1.0};
  Rng gen_rng(102);
  const Generation g = joint_generate(oracle, full, 0, Guidance{1.0f, 1.0f}, gen_rng, full.T, x0_v.shape(), x0_a.shape());
  const double recon_err = std::max(max_abs_diff(g.video, x0_v), max_abs_diff(g.audio, x0_a));

  // Forward-process marginals at a few steps, n = 1e5 each.
  const int n = 100000;
  double worst_z = 0.0;
  for (const Schedule* s : {&sv, &sa}) {
    for (int t : {1, 250, 700, s->t_max()}) {
      const Tensor x0 = Tensor::full({1, 1}, 0.8f);
      double sum = 0.0, sum2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = q_sample(x0, t, rng.randn({1, 1}), *s).item();
        sum += x;
        sum2 += x * x;
      }
      const double mean = sum / n, var = sum2 / n - mean * mean;
      const double target_var = 1.0 - s->alpha_bar(t);
      const double z_mean = std::abs(mean - std::sqrt(s->alpha_bar(t)) * 0.8) / std::sqrt(target_var / n);
      const double z_var = std::abs(var - target_var) / (target_var * std::sqrt(2.0 / n));
      worst_z = std::max({worst_z, z_mean, z_var});
    }
  }
  return {inv_err < 1e-4 && recon_err < 1e-3 && worst_z < 3.0,
          fmt("inverse max err %.2e (<1e-4), oracle DDIM max err %.2e (<1e-3), marginal worst z %.2f (<3)", inv_err,
              recon_err, worst_z)};
}

// ---- timestep map ---------------------------------------------------------

Outcome timestep_map() {
  const double gammas[] = {1.0, 1.25, 1.5, 1.75, 2.0};
  double prop_err = 0.0;
  long checked = 0;
  bool ends = true, mono = true, identity = true;
  for (int T = 1; T <= 1000; ++T) {
    for (double g : gammas) {
      const TimestepMap map{T, 1000, 1000, g};
      ends = ends && map_timesteps(map, T) == LocalSteps{1000, 1000} && map_timesteps(map, 0) == LocalSteps{0, 0};
      LocalSteps prev{0, 0};
      for (int t = 1; t <= T; ++t) {
        const auto [mv, ma] = map_timesteps_unrounded(map, t);
        prop_err = std::max(prop_err, std::abs(mv / map.T_v - std::pow(ma / map.T_a, g)));
        const LocalSteps s = map_timesteps(map, t);
        mono = mono && s.video >= prev.video && s.audio >= prev.audio;
        if (g == 1.0 && T == 1000) identity = identity && s.video == t && s.audio == t;
        prev = s;
        ++checked;
      }
    }
  }
  const LocalSteps spot = map_timesteps({25, 1000, 1000, 1.5}, 10);
  const bool spot_ok = spot.video == 326 && spot.audio == 473;
  return {prop_err <= 1e-12 && ends && mono && identity && spot_ok,
          fmt("%ld steps checked, proportionality err %.1e (<=1e-12), endpoints %s, monotone %s, identity %s, "
              "spot (%d, %d) vs (326, 473)",
              checked, prop_err, ends ? "ok" : "BAD", mono ? "ok" : "BAD", identity ? "ok" : "BAD", spot.video,
              spot.audio)};
}

// ---- trained-model criteria -----------------------------------------------

struct Workspace {
  RunConfig base;
  fs::path dir;
  bool verbose = false;

  RunConfig variant(const std::string& name, InjectMode mode) const {
    RunConfig c = base;
    c.model.inject_mode = mode;
    c.paths.dataset = (dir / "train.avjd").string();
    c.paths.checkpoint = (dir / (name + ".avjc")).string();
    c.paths.loss_csv = (dir / (name + "_loss.csv")).string();
    c.paths.out_dir = (dir / name).string();
    c.paths.profile_csv = (dir / (name + "_profile.csv")).string();
    return c;
  }
  std::ostream* log() const { return verbose ? &std::cerr : nullptr; }
};

std::vector<double> train_model(const Workspace& ws, const RunConfig& c) {
  const nlohmann::json r = cmd_train(c, ws.log());
  return r.at("epoch_loss").get<std::vector<double>>();
}

Outcome trainability(const Workspace& ws, const std::vector<double>& loss, double train_secs) {
  if (loss.size() < 2) return {false, "fewer than two epochs recorded"};
  const double first = loss.front(), last = loss.back();
  const double drop = 1.0 - last / first;
  return {drop >= 0.5, fmt("%d pairs, %zu epochs in %.0fs: loss %.4f -> %.4f, drop %.1f%% (>=50%%)",
                           ws.base.data.n_samples, loss.size(), train_secs, first, last, 100.0 * drop)};
}

Outcome loss_curves(const RunConfig& cmc) {
  double dist[2] = {0.0, 0.0};
  const double gammas[2] = {1.0, 1.5};
  for (int i = 0; i < 2; ++i) {
    RunConfig c = cmc;
    c.timesteps.gamma = gammas[i];
    c.paths.profile_csv = fs::path(cmc.paths.profile_csv).replace_extension(fmt("g%.2f.csv", gammas[i])).string();
    dist[i] = cmd_profile_loss(c).at("curve_distance").get<double>();
  }
  const double margin = 1.0 - dist[1] / dist[0];
  return {margin >= 0.05, fmt("curve distance gamma=1: %.4f, gamma=1.5: %.4f, relative margin %.1f%% (>=5%%)", dist[0],
                              dist[1], 100.0 * margin)};
}

double mean_alignment(RunConfig c, double gamma, const std::string& tag) {
  c.timesteps.gamma = gamma;
  c.paths.out_dir = (fs::path(c.paths.out_dir) / tag).string();
  return cmd_generate(c).at("mean").at("score_modified").get<double>();
}

Outcome alignment_ordering(const RunConfig& cmc, const RunConfig& xattn) {
  const double a = mean_alignment(cmc, 1.5, "g1.50");
  const double b = mean_alignment(cmc, 1.0, "g1.00");
  const double x = mean_alignment(xattn, 1.0, "g1.00");
  const bool ordered = a >= b && b >= x && (a > b || b > x);
  return {ordered, fmt("%d generations each: CMC-PE gamma=1.5 %.4f, CMC-PE gamma=1 %.4f, cross-attention gamma=1 %.4f; "
                       "margins %+.4f, %+.4f",
                       cmc.generate_samples, a, b, x, a - b, b - x)};
}

// ---- AV-Align -------------------------------------------------------------

Outcome av_align_checks(const RunConfig& c) {
  using avj::testing::brute_force;
  const auto sets = avj::testing::subsets_up_to(8, 4);
  long exhaustive = 0, mismatches = 0;
  for (const auto& a : sets) {
    for (const auto& v : sets) {
      const auto o = brute_force(a, v, 1);
      const AlignReport r = av_align({a, PeakSource::audio}, {v, PeakSource::video}, 1);
      mismatches += r.p != o.p.value() || r.r != o.r.value() || r.score_modified != o.modified.value() ||
                    r.score_official != o.official.value();
      ++exhaustive;
    }
  }

  const AlignReport path = av_align({{4, 5, 6}, PeakSource::audio}, {{5}, PeakSource::video}, 1);
  const bool pathology = path.score_official == 3.0 && path.score_modified == 1.0;

  // One-to-one by construction: peaks on a stride-3 lattice, window 1.
  Rng rng(201);
  long iou_bad = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> a, v;
    for (int k = 0; k < 8; ++k) {
      if (rng.uniform() < 0.5) a.push_back(3 * k + 1);
      if (rng.uniform() < 0.5) v.push_back(3 * k + 1 + static_cast<int>(rng.uniform_int(-1, 1)));
    }
    if (a.empty() || v.empty()) continue;
    long inter = 0;
    for (int x : a) {
      for (int y : v) inter += std::abs(x - y) <= 1;
    }
    const double iou = static_cast<double>(inter) / static_cast<double>(a.size() + v.size() - inter);
    const AlignReport r = av_align({a, PeakSource::audio}, {v, PeakSource::video}, 1);
    iou_bad += r.score_modified != iou || r.score_official != iou;
  }

  long out_of_bounds = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<int> a, v;
    const int grid = static_cast<int>(rng.uniform_int(1, 64));
    for (int i = 0; i < grid; ++i) {
      if (rng.uniform() < 0.2) a.push_back(i);
      if (rng.uniform() < 0.2) v.push_back(i);
    }
    const double s = av_align_modified({a, PeakSource::audio}, {v, PeakSource::video}, 1).score_modified;
    out_of_bounds += !(s >= 0.0 && s <= 1.0);
  }

  // Detectors recover ground truth on clean pairs.
  PairSpec spec = c.pair_spec();
  spec.jitter = 0.0;
  long detect_bad = 0;
  for (int i = 0; i < 200; ++i) {
    spec.seed = derive_seed(202, static_cast<std::uint64_t>(i));
    spec.label = i % spec.n_classes;
    const Sample s = make_pair(spec);
    detect_bad += detect_onsets_relative(s.audio, spec.audio_per_video(), c.metrics.threshold_ratio).times != s.event_times ||
                  detect_motion_peaks_relative(s.video, c.metrics.threshold_ratio).times != s.event_times;
  }

  const bool ok = mismatches == 0 && pathology && iou_bad == 0 && out_of_bounds == 0 && detect_bad == 0;
  return {ok, fmt("%ld exhaustive pairs, %ld mismatches; pathology official %.1f modified %.1f; IoU mismatches %ld; "
                  "bounds violations %ld/10000; detector misses %ld/200",
                  exhaustive, mismatches, path.score_official, path.score_modified, iou_bad, out_of_bounds, detect_bad)};
}

// ---- gradients ------------------------------------------------------------

Outcome gradient_checks() {
  constexpr int kProbes = 10;
  constexpr double kTol = 1e-2;
  std::vector<std::pair<std::string, double>> worst;
  auto run = [&](const std::string& name, const std::function<double(Rng&)>& probe) {
    double w = 0.0;
    for (int p = 0; p < kProbes; ++p) {
      Rng rng(derive_seed(301, static_cast<std::uint64_t>(p) + 1000 * worst.size()));
      w = std::max(w, probe(rng));
    }
    worst.emplace_back(name, w);
  };

  run("linear", [](Rng& rng) {
    ParamSet ps;
    const Linear lin = make_linear(ps, "l", 5, 4, rng, false);
    avj::testing::randomize(ps, rng, 0.5);
    Tensor x = rng.randn({6, 5});
    auto leaves = avj::testing::values_of(ps);
    leaves.push_back(x);
    return check_gradients([&] { return lin(x); }, leaves, rng).rel_error;
  });
  run("norm", [](Rng& rng) {
    ParamSet ps;
    const Norm n = make_norm(ps, "n", 6, false);
    avj::testing::randomize(ps, rng, 0.5);
    Tensor x = rng.randn({5, 6});
    auto leaves = avj::testing::values_of(ps);
    leaves.push_back(x);
    return check_gradients([&] { return n(x); }, leaves, rng).rel_error;
  });
  run("attention", [](Rng& rng) {
    ParamSet ps;
    const Attention a = make_attention(ps, "a", 6, 4, rng, false, Init::scaled);
    avj::testing::randomize(ps, rng, 0.4);
    Tensor q = rng.randn({5, 6}), kv = rng.randn({3, 4});
    auto leaves = avj::testing::values_of(ps);
    leaves.push_back(q);
    leaves.push_back(kv);
    return check_gradients([&] { return a(q, kv); }, leaves, rng).rel_error;
  });
  run("feed_forward", [](Rng& rng) {
    ParamSet ps;
    const FeedForward f = make_feed_forward(ps, "f", 6, 12, rng, false, Init::scaled);
    avj::testing::randomize(ps, rng, 0.4);
    Tensor x = rng.randn({5, 6});
    auto leaves = avj::testing::values_of(ps);
    leaves.push_back(x);
    return check_gradients([&] { return f(x); }, leaves, rng).rel_error;
  });
  run("connector", [](Rng& rng) {
    ParamSet ps;
    const Connector conn = make_connector(ps, "c", 3, 6, 1, rng);
    avj::testing::randomize(ps, rng, 0.4);
    Tensor x = rng.randn({7, 3}), s = rng.randn({7, 3});
    auto leaves = avj::testing::values_of(ps);
    leaves.push_back(x);
    leaves.push_back(s);
    return check_gradients([&] { return connector_encode(conn, x, s); }, leaves, rng).rel_error;
  });
  for (InjectMode mode : {InjectMode::cmc_pe, InjectMode::cross_attention}) {
    run(to_string(mode) + "_inject", [mode](Rng& rng) {
      ParamSet ps;
      const InjectBlock b = make_inject_block(ps, "b", mode, 6, 5, rng);
      avj::testing::randomize(ps, rng, 0.3);
      Tensor target = rng.randn({8, 6}), cond = rng.randn({3, 5});
      auto leaves = avj::testing::values_of(ps);
      leaves.push_back(target);
      leaves.push_back(cond);
      return check_gradients(
                 [&] { return mode == InjectMode::cmc_pe ? cmc_pe_inject(target, cond, b) : cross_attn_inject(target, cond, b); },
                 leaves, rng)
          .rel_error;
    });
  }
  for (InjectMode mode : {InjectMode::cmc_pe, InjectMode::cross_attention}) {
    run("joint_model_" + to_string(mode), [mode](Rng& rng) {
      ModelConfig mc;
      mc.video = {Modality::video, 8, 3, 12, 2, 2};
      mc.audio = {Modality::audio, 16, 2, 12, 2, 2};
      mc.video_schedule.t_max = 100;
      mc.audio_schedule.t_max = 100;
      mc.video_schedule.beta_end = 0.1;
      mc.audio_schedule.beta_end = 0.1;
      mc.inject_mode = mode;
      mc.n_classes = 3;
      mc.time_features = 8;
      JointModel m(mc);
      avj::testing::randomize(m.params(), rng, 0.25);
      JointInput in;
      in.x_v = rng.randn({8, 3});
      in.x_a = rng.randn({16, 2});
      in.t_v = static_cast<int>(rng.uniform_int(1, 100));
      in.t_a = static_cast<int>(rng.uniform_int(1, 100));
      in.label = static_cast<int>(rng.uniform_int(0, 3));
      in.self_cond = std::make_pair(rng.randn(in.x_v.shape()), rng.randn(in.x_a.shape()));
      const Tensor ev = rng.randn(in.x_v.shape()), ea = rng.randn(in.x_a.shape());
      const auto leaves = avj::testing::values_of(m.params());
      const auto coords = avj::testing::sample_coords(leaves, 3, rng);
      return check_gradients(
                 [&] {
                   const NoisePair p = m.predict_noise(in);
                   return add(noise_loss(p.video, ev), noise_loss(p.audio, ea));
                 },
                 leaves, rng, 1e-2, coords)
          .rel_error;
    });
  }

  bool ok = true;
  std::ostringstream os;
  os << kProbes << " probes per block, worst relative error:";
  for (const auto& [name, w] : worst) {
    ok = ok && w < kTol;
    os << " " << name << " " << fmt("%.1e", w);
  }
  os << " (<1e-2)";
  return {ok, os.str()};
}

// ---- determinism and persistence -------------------------------------------

Outcome determinism(const RunConfig& cmc, const fs::path& dir) {
  const JointModel model = model_from_checkpoint(load_checkpoint(cmc.paths.checkpoint));
  bool gen_same = true;
  for (int i = 0; i < 4; ++i) {
    Rng r1(derive_seed(401, i)), r2(derive_seed(401, i));
    const Generation a = joint_generate(model, cmc.timesteps, i % 4, cmc.guidance, r1, cmc.timesteps.T);
    const Generation b = joint_generate(model, cmc.timesteps, i % 4, cmc.guidance, r2, cmc.timesteps.T);
    gen_same = gen_same && bitwise_equal(a.video, b.video) && bitwise_equal(a.audio, b.audio);
  }

  // Generate command output files are byte-identical across runs.
  RunConfig c = cmc;
  c.generate_samples = 4;
  auto read_bytes = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  c.paths.out_dir = (dir / "det_a").string();
  cmd_generate(c);
  c.paths.out_dir = (dir / "det_b").string();
  cmd_generate(c);
  const bool files_same = read_bytes(dir / "det_a" / "samples.avjd") == read_bytes(dir / "det_b" / "samples.avjd");

  // Checkpoint round trip, including optimizer moments.
  const Checkpoint ck = load_checkpoint(cmc.paths.checkpoint);
  const fs::path copy = dir / "roundtrip.avjc";
  save_checkpoint(copy, ck);
  const Checkpoint back = load_checkpoint(copy);
  bool ckpt_same = back.header == ck.header && back.tensors.size() == ck.tensors.size();
  for (std::size_t i = 0; ckpt_same && i < ck.tensors.size(); ++i) {
    ckpt_same = back.tensors[i].first == ck.tensors[i].first && bitwise_equal(back.tensors[i].second, ck.tensors[i].second);
  }
  const JointModel reloaded = model_from_checkpoint(back);
  for (std::size_t i = 0; ckpt_same && i < model.params().items().size(); ++i) {
    ckpt_same = bitwise_equal(model.params().items()[i].value, reloaded.params().items()[i].value);
  }

  const DatasetFile ds = load_dataset(cmc.paths.dataset);
  const fs::path dcopy = dir / "roundtrip.avjd";
  save_dataset(dcopy, ds);
  const DatasetFile dback = load_dataset(dcopy);
  bool data_same = dback.samples.size() == ds.samples.size() && read_bytes(dcopy) == read_bytes(cmc.paths.dataset);
  for (std::size_t i = 0; data_same && i < ds.samples.size(); ++i) {
    const Sample &a = ds.samples[i], &b = dback.samples[i];
    data_same = a.label == b.label && a.event_times == b.event_times && bitwise_equal(a.video, b.video) &&
                bitwise_equal(a.audio, b.audio);
  }
  return {gen_same && files_same && ckpt_same && data_same,
          fmt("repeat generation %s, sample files %s, checkpoint (%zu tensors) %s, dataset (%zu pairs) %s",
              gen_same ? "bitwise equal" : "DIFFER", files_same ? "byte-identical" : "DIFFER", ck.tensors.size(),
              ckpt_same ? "bitwise equal" : "DIFFER", ds.samples.size(), data_same ? "bitwise equal" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avjoint acceptance run"};
  std::string config_path = AVJ_SOURCE_DIR "/configs/toy.json";
  std::string work_dir = "acceptance_work";
  std::vector<int> only;
  bool verbose = false;
  app.add_option("-c,--config", config_path, "Run config the trained-model criteria start from");
  app.add_option("-w,--work-dir", work_dir, "Scratch directory for datasets, checkpoints and samples");
  app.add_option("--only", only, "Run only these criterion numbers")->check(CLI::Range(1, 8));
  app.add_flag("-v,--verbose", verbose, "Print training progress to stderr");
  CLI11_PARSE(app, argc, argv);

  RunConfig base;
  try {
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot open '" + config_path + "'");
    base = parse_config(nlohmann::json::parse(f));
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return 2;
  }

  Workspace ws{base, fs::path(work_dir), verbose};
  fs::remove_all(ws.dir);
  fs::create_directories(ws.dir);
  const RunConfig cmc = ws.variant("cmc_pe", InjectMode::cmc_pe);
  const RunConfig xattn = ws.variant("cross_attention", InjectMode::cross_attention);

  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int k) { return wanted.empty() || wanted.count(k) > 0; };
  const bool need_cmc = want(3) || want(4) || want(5) || want(8);

  int failures = 0;
  auto report = [&](int k, const std::string& name, const std::function<Outcome()>& f) {
    if (!want(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << "AC-" << k << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
              << fmt(" [%.1fs]", secs) << std::endl;
  };

  std::vector<double> cmc_loss;
  double cmc_secs = 0.0;
  try {
    if (need_cmc) {
      cmd_make_data(cmc, ws.log());
      const auto t0 = std::chrono::steady_clock::now();
      cmc_loss = train_model(ws, cmc);
      cmc_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    if (want(5)) train_model(ws, xattn);
  } catch (const std::exception& e) {
    std::cerr << "training failed: " << e.what() << "\n";
  }

  report(1, "diffusion identities", [&] { return diffusion_identities(base); });
  report(2, "timestep map", [&] { return timestep_map(); });
  report(3, "trainability", [&] { return trainability(ws, cmc_loss, cmc_secs); });
  report(4, "loss-curve alignment", [&] { return loss_curves(cmc); });
  report(5, "alignment ordering", [&] { return alignment_ordering(cmc, xattn); });
  report(6, "AV-Align correctness", [&] { return av_align_checks(base); });
  report(7, "gradient correctness", [&] { return gradient_checks(); });
  report(8, "determinism and persistence", [&] { return determinism(cmc, ws.dir); });
  return failures == 0 ? 0 : 1;
}
