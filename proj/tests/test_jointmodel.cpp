// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "avj/datagen.hpp"
#include "avj/errors.hpp"
#include "avj/jointmodel.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace avj;
using avj::testing::bitwise_equal;
using avj::testing::check_gradients;
using avj::testing::max_abs_diff;
using avj::testing::OracleDenoiser;

namespace {

ModelConfig small_config(InjectMode mode = InjectMode::cmc_pe) {
  ModelConfig c;
  c.video = {Modality::video, 8, 3, 12, 2, 2};
  c.audio = {Modality::audio, 16, 2, 12, 2, 2};
  c.video_schedule.t_max = 100;
  c.audio_schedule.t_max = 100;
  c.video_schedule.beta_end = 0.1;
  c.audio_schedule.beta_end = 0.1;
  c.inject_mode = mode;
  c.n_classes = 3;
  c.time_features = 8;
  c.init_seed = 5;
  return c;
}

JointInput random_input(const ModelConfig& c, Rng& rng) {
  JointInput in;
  in.x_v = rng.randn({c.video.frames, c.video.dim});
  in.x_a = rng.randn({c.audio.frames, c.audio.dim});
  in.t_v = 37;
  in.t_a = 81;
  in.label = 1;
  return in;
}

}  // namespace

TEST_CASE("output shapes equal input shapes for every mode") {
  for (auto mode : {InjectMode::cmc_pe, InjectMode::cross_attention, InjectMode::none}) {
    const JointModel m(small_config(mode));
    Rng rng(1);
    const JointInput in = random_input(m.config(), rng);
    const NoisePair out = m.predict_noise(in);
    CHECK(out.video.shape() == in.x_v.shape());
    CHECK(out.audio.shape() == in.x_a.shape());
    CHECK(m.parameter_count() > 0);
  }
}

TEST_CASE("predict_noise validates its inputs") {
  const JointModel m(small_config());
  Rng rng(2);
  JointInput in = random_input(m.config(), rng);
  in.t_v = 101;
  CHECK_THROWS_AS(m.predict_noise(in), ContractError);
  in = random_input(m.config(), rng);
  in.label = 4;
  CHECK_THROWS_AS(m.predict_noise(in), ContractError);
  in = random_input(m.config(), rng);
  in.x_a = rng.randn({15, 2});
  CHECK_THROWS_AS(m.predict_noise(in), DimensionError);
}

TEST_CASE("a fresh model's noise estimate is its noisy input") {
  // Zero-initialized output projections leave only the identity skip path.
  JointModel m(small_config());
  Rng rng(21);
  JointInput in = random_input(m.config(), rng);
  const NoisePair p = m.predict_noise(in);
  CHECK(bitwise_equal(p.video, in.x_v));
  CHECK(bitwise_equal(p.audio, in.x_a));
}

TEST_CASE("connector examples") {
  ParamSet ps;
  Rng rng(3);
  const Connector conn = make_connector(ps, "c", 3, 6, 1, rng);
  {
    ParamSet zero;
    Rng r2(3);
    Connector z = make_connector(zero, "z", 3, 6, 1, r2);
    for (auto& p : zero.items()) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0.0f);
    const Tensor f = connector_encode(z, Tensor::zeros({5, 3}), Tensor::zeros({5, 3}));
    for (float v : f.data()) CHECK(v == 0.0f);
  }
  const Tensor x = rng.randn({9, 3}), s = rng.randn({9, 3});
  const Tensor base = connector_encode(conn, x, s);
  CHECK(base.shape() == Shape{9, 6});
  CHECK_THROWS_AS(connector_encode(conn, x, rng.randn({8, 3})), DimensionError);
  for (int i = 0; i < 9; ++i) {
    Tensor xp = x.clone();
    for (int d = 0; d < 3; ++d) xp.mutable_data()[static_cast<std::size_t>(i) * 3 + d] += 1.0f;
    const Tensor moved = connector_encode(conn, xp, s);
    for (int f = 0; f < 9; ++f) {
      bool changed = false;
      for (int c = 0; c < 6; ++c) changed |= moved.at(f, c) != base.at(f, c);
      if (std::abs(f - i) > conn.receptive_radius()) REQUIRE_FALSE(changed);
      if (f == i) CHECK(changed);
    }
  }
}

TEST_CASE("cmc_pe_inject with zero cond at init is the identity") {
  ParamSet ps;
  Rng rng(4);
  const InjectBlock b = make_inject_block(ps, "b", InjectMode::cmc_pe, 6, 5, rng);
  const Tensor target = rng.randn({8, 6});
  CHECK(bitwise_equal(cmc_pe_inject(target, Tensor::zeros({32, 5}), b), target));
  CHECK_THROWS_AS(cross_attn_inject(target, Tensor::zeros({32, 5}), b), ContractError);
}

TEST_CASE("cmc_pe additive term: identity interpolation and shift equivariance") {
  ParamSet ps;
  Rng rng(5);
  const InjectBlock b = make_inject_block(ps, "b", InjectMode::cmc_pe, 4, 3, rng);
  const Tensor cond = rng.randn({8, 3});
  CHECK(bitwise_equal(cmc_pe_term(cond, b, 8), b.cond_proj(cond)));

  // Impulses through a zero-bias projection. 33 -> 9 frames is an exact 4:1
  // align-corners ratio, so a shift of k source frames moves the term by
  // k * (F_t - 1) / (F_c - 1) target frames.
  for (auto& p : ps.items()) {
    if (p.name == "b.cond_proj.bias") std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0.0f);
  }
  const int fc = 33, ft = 9;
  auto impulse = [&](int j) {
    Tensor x = Tensor::zeros({fc, 3});
    for (int c = 0; c < 3; ++c) x.mutable_data()[static_cast<std::size_t>(j) * 3 + c] = 1.0f;
    return cmc_pe_term(x, b, ft);
  };
  auto peak = [](const Tensor& t) {
    int best = 0;
    double bv = -1.0;
    for (int f = 0; f < t.rows(); ++f) {
      double e = 0.0;
      for (int c = 0; c < t.cols(); ++c) e += static_cast<double>(t.at(f, c)) * t.at(f, c);
      if (e > bv) bv = e, best = f;
    }
    return best;
  };
  const Tensor base = impulse(4);
  CHECK(peak(base) == 1);
  for (int k : {4, 8, 12, 16, 20, 24}) {
    const Tensor shifted = impulse(4 + k);
    const int s = static_cast<int>(std::lround(static_cast<double>(k) * (ft - 1) / (fc - 1)));
    CHECK(peak(shifted) == peak(base) + s);
    for (int f = 0; f + s < ft; ++f) {
      for (int c = 0; c < 4; ++c) CHECK(shifted.at(f + s, c) == doctest::Approx(base.at(f, c)).epsilon(1e-6));
    }
  }
}

TEST_CASE("cross-attention pooling ignores cond frame order and zero values give identity") {
  ParamSet ps;
  Rng rng(6);
  InjectBlock b = make_inject_block(ps, "b", InjectMode::cross_attention, 6, 5, rng);
  avj::testing::randomize(ps, rng, 0.4);
  const Tensor target = rng.randn({7, 6});
  const Tensor cond = rng.randn({12, 5});
  Tensor reversed = Tensor::zeros({12, 5});
  for (int f = 0; f < 12; ++f) {
    for (int c = 0; c < 5; ++c) reversed.mutable_data()[static_cast<std::size_t>(f) * 5 + c] = cond.at(11 - f, c);
  }
  CHECK(max_abs_diff(cross_attn_inject(target, cond, b), cross_attn_inject(target, reversed, b)) < 1e-6);
  CHECK(cross_attn_inject(target, cond, b).shape() == target.shape());

  ParamSet fresh;
  Rng r2(7);
  InjectBlock z = make_inject_block(fresh, "z", InjectMode::cross_attention, 6, 5, r2);
  std::fill(z.attn.value.weight.mutable_data().begin(), z.attn.value.weight.mutable_data().end(), 0.0f);
  CHECK(bitwise_equal(cross_attn_inject(target, cond, z), target));
  CHECK_THROWS_AS(cmc_pe_inject(target, cond, z), ContractError);
}

TEST_CASE("without inject blocks the model factorizes") {
  JointModel m(small_config(InjectMode::none));
  Rng rng(8);
  avj::testing::randomize(m.params(), rng);
  const JointInput in = random_input(m.config(), rng);
  const NoisePair base = m.predict_noise(in);
  JointInput pa = in;
  pa.x_a = rng.randn(in.x_a.shape());
  CHECK(bitwise_equal(m.predict_noise(pa).video, base.video));
  JointInput pv = in;
  pv.x_v = rng.randn(in.x_v.shape());
  CHECK(bitwise_equal(m.predict_noise(pv).audio, base.audio));
}

TEST_CASE("with CMC-PE active the branches are coupled") {
  for (auto mode : {InjectMode::cmc_pe, InjectMode::cross_attention}) {
    JointModel m(small_config(mode));
    Rng rng(9);
    avj::testing::randomize(m.params(), rng);
    const JointInput in = random_input(m.config(), rng);
    const NoisePair base = m.predict_noise(in);
    JointInput pa = in;
    pa.x_a = rng.randn(in.x_a.shape());
    CHECK(max_abs_diff(m.predict_noise(pa).video, base.video) > 1e-4);
    JointInput pv = in;
    pv.x_v = rng.randn(in.x_v.shape());
    CHECK(max_abs_diff(m.predict_noise(pv).audio, base.audio) > 1e-4);
  }
}

TEST_CASE("full-model gradients match finite differences") {
  for (auto mode : {InjectMode::cmc_pe, InjectMode::cross_attention}) {
    JointModel m(small_config(mode));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(derive_seed(10, seed));
      avj::testing::randomize(m.params(), rng, 0.25);
      JointInput in = random_input(m.config(), rng);
      in.self_cond = std::make_pair(rng.randn(in.x_v.shape()), rng.randn(in.x_a.shape()));
      const Tensor ev = rng.randn(in.x_v.shape()), ea = rng.randn(in.x_a.shape());
      const auto leaves = avj::testing::values_of(m.params());
      const auto coords = avj::testing::sample_coords(leaves, 3, rng);
      const auto r = check_gradients(
          [&] {
            const NoisePair p = m.predict_noise(in);
            return add(noise_loss(p.video, ev), noise_loss(p.audio, ea));
          },
          leaves, rng, 1e-2, coords);
      INFO(to_string(mode) << " seed " << seed << " rel " << r.rel_error);
      CHECK(r.rel_error < 1e-2);
    }
  }
}

TEST_CASE("joint_loss: oracle gives zero, model gives finite positive") {
  const ModelConfig c = small_config();
  Rng rng(11);
  Sample s{rng.randn({8, 3}), rng.randn({16, 2}), 0, {}};
  const OracleDenoiser oracle(s.video, s.audio, c.video_schedule, c.audio_schedule);
  const Sample* batch[] = {&s};
  JointLossOptions no_self;
  no_self.self_cond_prob = 0.0;
  CHECK(joint_loss(oracle, batch, rng, no_self).item() < 1e-8);
  CHECK_THROWS_AS(joint_loss(oracle, std::span<const Sample* const>{}, rng), DataError);

  JointModel m(c);
  for (int i = 0; i < 100; ++i) {
    const float l = joint_loss(m, batch, rng).item();
    REQUIRE(std::isfinite(l));
    REQUIRE(l > 0.0f);
  }
}

TEST_CASE("joint_loss draws local timesteps uniformly and independently") {
  const int tv = 10, ta = 10, n = 100000;
  Rng rng(12);
  std::vector<int> counts(tv * ta, 0);
  for (int i = 0; i < n; ++i) {
    const LocalDraw d = draw_local_timesteps(rng, tv, ta);
    REQUIRE(d.t_v >= 1);
    REQUIRE(d.t_a <= ta);
    ++counts[static_cast<std::size_t>((d.t_v - 1) * ta + d.t_a - 1)];
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(n) / (tv * ta);
  for (int k : counts) chi2 += (k - expect) * (k - expect) / expect;
  CHECK(chi2 < 134.64);  // chi-square, 99 dof, p = 0.01
}

TEST_CASE("joint_loss self-conditioning and label dropout rates") {
  const ModelConfig c = small_config();
  JointModel m(c);
  Rng rng(13);
  Sample s{rng.randn({8, 3}), rng.randn({16, 2}), 2, {}};
  std::vector<const Sample*> batch(400, &s);
  JointLossTrace trace;
  NoGradGuard g;
  joint_loss(m, batch, rng, {}, &trace);
  const auto frac = [](const std::vector<bool>& v) {
    return static_cast<double>(std::count(v.begin(), v.end(), true)) / static_cast<double>(v.size());
  };
  CHECK(std::abs(frac(trace.self_conditioned) - 0.5) < 3 * std::sqrt(0.25 / 400));
  CHECK(std::abs(frac(trace.label_dropped) - 0.1) < 3 * std::sqrt(0.09 / 400));
  CHECK(trace.draws.size() == 400);
}

TEST_CASE("training is deterministic, lr 0 is a no-op, and frozen cores stay fixed") {
  PairSpec ps;
  ps.n_frames = 8;
  ps.video_dim = 3;
  ps.audio_frames = 16;
  ps.audio_dim = 2;
  ps.n_events = 2;
  ps.n_classes = 3;
  const auto data = make_samples(ps, 12);
  TrainOptions o;
  o.lr = 1e-3;
  o.batch_size = 4;
  o.epochs = 2;
  o.seed = 3;

  JointModel a(small_config()), b(small_config());
  auto sa = make_train_state(a, o), sb = make_train_state(b, o);
  const auto ra = train(a, data, o, sa);
  const auto rb = train(b, data, o, sb);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  for (std::size_t i = 0; i < a.params().items().size(); ++i) {
    REQUIRE(bitwise_equal(a.params().items()[i].value, b.params().items()[i].value));
  }
  CHECK(sa.epochs_done == 2);
  CHECK(ra.first_epoch == 1);

  // Two runs of one epoch equal one run of two.
  JointModel c(small_config());
  auto sc = make_train_state(c, o);
  TrainOptions one = o;
  one.epochs = 1;
  train(c, data, one, sc);
  const auto rc = train(c, data, one, sc);
  CHECK(rc.first_epoch == 2);
  for (std::size_t i = 0; i < a.params().items().size(); ++i) {
    REQUIRE(bitwise_equal(a.params().items()[i].value, c.params().items()[i].value));
  }

  JointModel z(small_config());
  const JointModel z0(small_config());
  TrainOptions zero = o;
  zero.lr = 0.0;
  auto sz = make_train_state(z, zero);
  train(z, data, zero, sz);
  for (std::size_t i = 0; i < z.params().items().size(); ++i) {
    REQUIRE(bitwise_equal(z.params().items()[i].value, z0.params().items()[i].value));
  }

  // Freeze after a one-epoch warm start: the zero-initialized output head
  // must move first or nothing upstream receives gradient.
  JointModel f(small_config());
  TrainOptions freeze = o;
  freeze.epochs = 1;
  freeze.freeze_cores_after = 1;
  auto sf = make_train_state(f, freeze);
  train(f, data, freeze, sf);
  std::vector<Tensor> warm;
  for (const auto& p : f.params().items()) warm.push_back(p.value.clone());
  train(f, data, freeze, sf);
  bool extra_moved = false;
  for (std::size_t i = 0; i < f.params().items().size(); ++i) {
    const auto& p = f.params().items()[i];
    if (p.core) {
      REQUIRE(bitwise_equal(p.value, warm[i]));
    } else {
      extra_moved |= !bitwise_equal(p.value, warm[i]);
    }
  }
  CHECK(extra_moved);
  CHECK_THROWS_AS(train(f, std::span<const Sample>{}, o, sf), DataError);
}

TEST_CASE("generation with gamma 1 and equal maxima follows the global steps") {
  ModelConfig c = small_config();
  c.video_schedule.t_max = 25;
  c.audio_schedule.t_max = 25;
  c.video_schedule.beta_end = 0.4;
  c.audio_schedule.beta_end = 0.4;
  const JointModel m(c);
  Rng rng(14);
  const Generation g = joint_generate(m, {25, 25, 25, 1.0}, 0, {}, rng, 25);
  REQUIRE(g.steps.size() == 25);
  for (const auto& s : g.steps) {
    CHECK(s.from == LocalSteps{s.global, s.global});
    CHECK(s.to == LocalSteps{s.global - 1, s.global - 1});
  }
}

TEST_CASE("generation with an oracle denoiser reconstructs the data") {
  const ModelConfig c = small_config();
  Rng rng(15);
  const Tensor x0v = rng.randn({8, 3}), x0a = rng.randn({16, 2});
  for (double gamma : {1.0, 1.5}) {
    const OracleDenoiser oracle(x0v, x0a, c.video_schedule, c.audio_schedule);
    Rng gen(16);
    const Generation g = joint_generate(oracle, {25, 100, 100, gamma}, 0, {7.5f, 2.5f}, gen, 25, {8, 3}, {16, 2});
    CHECK(max_abs_diff(g.video, x0v) < 1e-3);
    CHECK(max_abs_diff(g.audio, x0a) < 1e-3);
  }
}

TEST_CASE("generation is bitwise reproducible and skips duplicate local steps") {
  const JointModel m(small_config());
  Rng r1(17), r2(17);
  const Generation a = joint_generate(m, {25, 100, 100, 1.5}, 1, {}, r1, 25);
  const Generation b = joint_generate(m, {25, 100, 100, 1.5}, 1, {}, r2, 25);
  CHECK(bitwise_equal(a.video, b.video));
  CHECK(bitwise_equal(a.audio, b.audio));

  // T=25 over T_v=10 forces repeated video local steps.
  const ModelConfig c = small_config();
  Rng rng(18);
  const OracleDenoiser oracle(rng.randn({8, 3}), rng.randn({16, 2}), c.video_schedule, c.audio_schedule);
  Rng gen(19);
  const Generation g = joint_generate(oracle, {25, 10, 100, 1.0}, oracle.null_label(), {}, gen, 25, {8, 3}, {16, 2});
  int repeats = 0;
  for (const auto& s : g.steps) repeats += s.to.video == s.from.video;
  CHECK(repeats > 0);
  CHECK(oracle.calls == 25);  // audio moves every step; unguided: one pass each
  CHECK_THROWS_AS(joint_generate(m, {25, 100, 100, 1.5}, 1, {}, r1, 0), ContractError);
}

TEST_CASE("non-finite parameters abort generation") {
  JointModel m(small_config());
  m.params().items().front().value.mutable_data()[0] = std::nanf("");
  Rng rng(20);
  CHECK_THROWS_AS(joint_generate(m, {25, 100, 100, 1.5}, 0, {}, rng, 25), NumericError);
}
