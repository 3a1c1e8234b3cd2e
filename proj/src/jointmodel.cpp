// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/jointmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avj/errors.hpp"

namespace avj {

InjectMode parse_inject_mode(const std::string& name) {
  if (name == "cmc_pe") return InjectMode::cmc_pe;
  if (name == "cross_attention") return InjectMode::cross_attention;
  if (name == "none") return InjectMode::none;
  throw ConfigError("unknown inject mode '" + name + "' (expected cmc_pe, cross_attention or none)");
}

std::string to_string(InjectMode mode) {
  switch (mode) {
    case InjectMode::cmc_pe:
      return "cmc_pe";
    case InjectMode::cross_attention:
      return "cross_attention";
    case InjectMode::none:
      break;
  }
  return "none";
}

std::string to_string(Modality m) { return m == Modality::video ? "video" : "audio"; }

void BranchConfig::validate() const {
  const std::string who = to_string(modality);
  if (frames < 1 || dim < 1 || hidden_dim < 1) throw ConfigError(who + " branch: frames, dim and hidden_dim must be >= 1");
  if (n_layers < 1) throw ConfigError(who + " branch: n_layers must be >= 1");
  if (n_inject_sites < 1) throw ConfigError(who + " branch: n_inject_sites must be >= 1");
}

void ModelConfig::validate() const {
  video.validate();
  audio.validate();
  if (video.modality != Modality::video || audio.modality != Modality::audio) {
    throw ConfigError("branch modalities must be video and audio");
  }
  if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
  if (time_features < 2 || time_features % 2 != 0) throw ConfigError("time_features must be a positive even number");
  if (connector_radius < 0) throw ConfigError("connector_radius must be >= 0");
  if (!(self_cond_clip > 0.0f)) throw ConfigError("self_cond_clip must be > 0");
  Schedule check_v(video_schedule);
  Schedule check_a(audio_schedule);
}

// ---- connector ------------------------------------------------------------

Connector make_connector(ParamSet& params, const std::string& name, int dim, int hidden, int radius, Rng& rng) {
  Connector c;
  c.radius = radius;
  c.in = make_linear(params, name + ".in", 2 * dim * (2 * radius + 1), hidden, rng, false);
  c.out = make_linear(params, name + ".out", hidden, hidden, rng, false);
  return c;
}

Tensor connector_encode(const Connector& conn, const Tensor& x_noisy, const Tensor& x0_self) {
  if (x_noisy.shape() != x0_self.shape()) {
    throw DimensionError("connector_encode: self-conditioning input " + shape_str(x0_self.shape()) +
                         " does not match latents " + shape_str(x_noisy.shape()));
  }
  return conn.out(silu(conn.in(temporal_context(concat_cols(x_noisy, x0_self), conn.radius))));
}

// ---- inject blocks --------------------------------------------------------

InjectBlock make_inject_block(ParamSet& params, const std::string& name, InjectMode mode, int width, int cond_width,
                              Rng& rng) {
  if (mode == InjectMode::none) throw ContractError("make_inject_block: mode none has no block");
  InjectBlock b;
  b.mode = mode;
  b.cond_proj = make_linear(params, name + ".cond_proj", cond_width, width, rng, false);
  b.norm1 = make_norm(params, name + ".norm1", width, false);
  b.attn = make_attention(params, name + ".attn", width, width, rng, false, Init::zero);
  b.norm2 = make_norm(params, name + ".norm2", width, false);
  b.ff = make_feed_forward(params, name + ".ff", width, 2 * width, rng, false, Init::zero);
  return b;
}

Tensor cmc_pe_term(const Tensor& cond, const InjectBlock& block, int target_frames) {
  return interp_time(block.cond_proj(cond), target_frames);
}

Tensor cmc_pe_inject(const Tensor& target, const Tensor& cond, const InjectBlock& block) {
  if (block.mode != InjectMode::cmc_pe) throw ContractError("cmc_pe_inject: block mode is " + to_string(block.mode));
  Tensor h = add(target, cmc_pe_term(cond, block, target.rows()));
  const Tensor a = block.norm1(h);
  h = add(h, block.attn(a, a));
  return add(h, block.ff(block.norm2(h)));
}

Tensor cross_attn_inject(const Tensor& target, const Tensor& cond, const InjectBlock& block) {
  if (block.mode != InjectMode::cross_attention) {
    throw ContractError("cross_attn_inject: block mode is " + to_string(block.mode));
  }
  const Tensor kv = block.cond_proj(block.pool_cond ? mean_rows(cond) : cond);
  Tensor h = add(target, block.attn(block.norm1(target), kv));
  return add(h, block.ff(block.norm2(h)));
}

// ---- model ----------------------------------------------------------------

Tensor timestep_features(int t, int t_max, int n) {
  const int half = n / 2;
  std::vector<float> f(static_cast<std::size_t>(n));
  const double s = 1000.0 * t / t_max;
  for (int k = 0; k < half; ++k) {
    const double w = std::exp(-std::log(10000.0) * k / half);
    f[k] = static_cast<float>(std::sin(s * w));
    f[half + k] = static_cast<float>(std::cos(s * w));
  }
  return Tensor::from({1, n}, std::move(f));
}

namespace {

Branch make_branch(ParamSet& params, const ModelConfig& mc, const BranchConfig& bc, int other_hidden, Rng& rng) {
  const std::string p = to_string(bc.modality);
  const int h = bc.hidden_dim;
  Branch b;
  b.config = bc;
  b.in_proj = make_linear(params, p + ".in_proj", 2 * bc.dim * 3, h, rng, true);
  for (int l = 0; l < bc.n_layers; ++l) {
    const std::string bp = p + ".block" + std::to_string(l);
    CoreBlock blk;
    blk.norm1 = make_norm(params, bp + ".norm1", h, true);
    blk.attn = make_attention(params, bp + ".attn", h, h, rng, true, Init::scaled);
    blk.norm2 = make_norm(params, bp + ".norm2", h, true);
    blk.ff = make_feed_forward(params, bp + ".ff", h, 2 * h, rng, true, Init::scaled);
    b.blocks.push_back(std::move(blk));
  }
  if (mc.inject_mode != InjectMode::none) {
    for (int s = 0; s < bc.n_inject_sites; ++s) {
      b.sites.push_back(make_inject_block(params, p + ".site" + std::to_string(s), mc.inject_mode, h, other_hidden, rng));
      b.site_after_block.push_back(s * bc.n_layers / bc.n_inject_sites);
    }
  }
  b.out_norm = make_norm(params, p + ".out_norm", h, true);
  b.out_proj = make_linear(params, p + ".out_proj", h, bc.dim, rng, true, Init::zero);
  b.skip = make_linear(params, p + ".skip", bc.dim, bc.dim, rng, true, Init::identity);
  b.time_in = make_linear(params, p + ".time_in", 2 * mc.time_features, h, rng, true);
  b.time_out = make_linear(params, p + ".time_out", h, h, rng, true);
  Tensor table = Tensor::zeros({mc.n_classes + 1, h});
  for (float& v : table.mutable_data()) v = static_cast<float>(0.5 * rng.normal());
  b.label_table = params.add(p + ".label_table", table, true);
  return b;
}

Tensor clipped(const Tensor& x, float c) {
  Tensor out = x.detach();
  for (float& v : out.mutable_data()) v = std::clamp(v, -c, c);
  return out;
}

}  // namespace

JointModel::JointModel(ModelConfig config)
    : config_(std::move(config)), sched_v_(config_.video_schedule), sched_a_(config_.audio_schedule) {
  config_.validate();
  Rng rng(config_.init_seed);
  conn_v_ = make_connector(params_, "conn_v", config_.video.dim, config_.video.hidden_dim, config_.connector_radius, rng);
  conn_a_ = make_connector(params_, "conn_a", config_.audio.dim, config_.audio.hidden_dim, config_.connector_radius, rng);
  video_ = make_branch(params_, config_, config_.video, config_.audio.hidden_dim, rng);
  audio_ = make_branch(params_, config_, config_.audio, config_.video.hidden_dim, rng);
}

Tensor JointModel::time_row(const Branch& b, int t_v, int t_a, int label) const {
  const Tensor feats = concat_cols(timestep_features(t_v, sched_v_.t_max(), config_.time_features),
                                   timestep_features(t_a, sched_a_.t_max(), config_.time_features));
  return add(b.time_out(silu(b.time_in(feats))), embedding_row(b.label_table, label));
}

Tensor JointModel::run_branch(const Branch& b, const Tensor& x, const Tensor& self, const Tensor& cond_row,
                              const Tensor* other_features) const {
  Tensor h = add_row(b.in_proj(temporal_context(concat_cols(x, self), 1)), cond_row);
  std::size_t site = 0;
  for (std::size_t l = 0; l < b.blocks.size(); ++l) {
    const CoreBlock& blk = b.blocks[l];
    if (l > 0) h = add_row(h, cond_row);
    const Tensor a = blk.norm1(h);
    h = add(h, blk.attn(a, a));
    h = add(h, blk.ff(blk.norm2(h)));
    while (other_features != nullptr && site < b.sites.size() &&
           b.site_after_block[site] == static_cast<int>(l)) {
      const InjectBlock& ib = b.sites[site++];
      h = ib.mode == InjectMode::cmc_pe ? cmc_pe_inject(h, *other_features, ib) : cross_attn_inject(h, *other_features, ib);
    }
  }
  return add(b.out_proj(b.out_norm(h)), b.skip(x));
}

NoisePair JointModel::predict_noise(const JointInput& in) const {
  const Shape vs{config_.video.frames, config_.video.dim};
  const Shape as{config_.audio.frames, config_.audio.dim};
  if (in.x_v.shape() != vs) throw DimensionError("video latents must be " + shape_str(vs) + ", got " + shape_str(in.x_v.shape()));
  if (in.x_a.shape() != as) throw DimensionError("audio latents must be " + shape_str(as) + ", got " + shape_str(in.x_a.shape()));
  if (in.t_v < 0 || in.t_v > sched_v_.t_max()) throw ContractError("video timestep " + std::to_string(in.t_v) + " out of range");
  if (in.t_a < 0 || in.t_a > sched_a_.t_max()) throw ContractError("audio timestep " + std::to_string(in.t_a) + " out of range");
  if (in.label < 0 || in.label > config_.n_classes) throw ContractError("label " + std::to_string(in.label) + " out of range");

  const Tensor s_v = in.self_cond ? in.self_cond->first : Tensor::zeros(vs);
  const Tensor s_a = in.self_cond ? in.self_cond->second : Tensor::zeros(as);
  const bool coupled = config_.inject_mode != InjectMode::none;
  Tensor f_v, f_a;
  if (coupled) {
    f_v = connector_encode(conn_v_, in.x_v, s_v);
    f_a = connector_encode(conn_a_, in.x_a, s_a);
  }
  NoisePair out;
  out.video = run_branch(video_, in.x_v, s_v, time_row(video_, in.t_v, in.t_a, in.label), coupled ? &f_a : nullptr);
  out.audio = run_branch(audio_, in.x_a, s_a, time_row(audio_, in.t_v, in.t_a, in.label), coupled ? &f_v : nullptr);
  return out;
}

void JointModel::check_finite() const {
  for (const auto& p : params_.items()) {
    for (float v : p.value.data()) {
      if (!std::isfinite(v)) throw NumericError("parameter '" + p.name + "' is not finite");
    }
  }
}

NoisePair joint_predict_noise(const JointDenoiser& model, const JointInput& in) { return model.predict_noise(in); }

// ---- training -------------------------------------------------------------

LocalDraw draw_local_timesteps(Rng& rng, int t_v_max, int t_a_max) {
  LocalDraw d;
  d.t_v = static_cast<int>(rng.uniform_int(1, t_v_max));
  d.t_a = static_cast<int>(rng.uniform_int(1, t_a_max));
  return d;
}

Tensor joint_loss(const JointDenoiser& model, std::span<const Sample* const> batch, Rng& rng,
                  const JointLossOptions& options, JointLossTrace* trace) {
  if (batch.empty()) throw DataError("joint_loss: empty batch");
  const Schedule& sv = model.video_schedule();
  const Schedule& sa = model.audio_schedule();
  Tensor total;
  for (const Sample* s : batch) {
    const LocalDraw d = draw_local_timesteps(rng, sv.t_max(), sa.t_max());
    const Tensor eps_v = rng.randn(s->video.shape());
    const Tensor eps_a = rng.randn(s->audio.shape());
    const bool drop = rng.uniform() < options.label_dropout;
    const bool self_cond = rng.uniform() < options.self_cond_prob;
    if (trace != nullptr) {
      trace->draws.push_back(d);
      trace->label_dropped.push_back(drop);
      trace->self_conditioned.push_back(self_cond);
    }

    JointInput in;
    in.x_v = q_sample(s->video, d.t_v, eps_v, sv);
    in.x_a = q_sample(s->audio, d.t_a, eps_a, sa);
    in.t_v = d.t_v;
    in.t_a = d.t_a;
    in.label = drop ? model.null_label() : s->label;
    if (self_cond) {
      NoGradGuard no_grad;
      const NoisePair first = model.predict_noise(in);
      in.self_cond = std::make_pair(clipped(predict_x0(in.x_v, first.video, d.t_v, sv), model.self_cond_clip()),
                                    clipped(predict_x0(in.x_a, first.audio, d.t_a, sa), model.self_cond_clip()));
    }
    const NoisePair pred = model.predict_noise(in);
    const Tensor l = add(noise_loss(pred.video, eps_v), noise_loss(pred.audio, eps_a));
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0f / static_cast<float>(batch.size()));
}

TrainState make_train_state(const JointModel& model, const TrainOptions& options) {
  TrainState st;
  Adam::Options ao;
  ao.lr = options.lr;
  st.adam = Adam(model.params(), ao);
  return st;
}

TrainReport train(JointModel& model, std::span<const Sample> dataset, const TrainOptions& options, TrainState& state,
                  const EpochCallback& on_epoch) {
  if (dataset.empty()) throw DataError("train: dataset is empty");
  if (options.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (options.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(options.lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
  state.adam.set_lr(options.lr);

  TrainReport report;
  report.first_epoch = state.epochs_done + 1;
  std::vector<std::size_t> order(dataset.size());
  std::vector<const Sample*> batch;
  for (int run = 0; run < options.epochs; ++run) {
    const int epoch = state.epochs_done;
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    const bool frozen = options.freeze_cores_after >= 0 && epoch >= options.freeze_cores_after;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset[order[i]]);
      model.params().zero_grad();
      Tensor loss;
      try {
        loss = joint_loss(model, batch, rng, options.loss);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + ": loss is not finite (" + e.what() + ")");
      }
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
      backward(loss);
      state.adam.step(model.params(), [frozen](const NamedParam& p) { return frozen && p.core; });
    }
    const double epoch_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) throw NumericError("epoch " + std::to_string(epoch + 1) + ": loss is not finite");
    state.epochs_done = epoch + 1;
    report.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(state.epochs_done, epoch_loss);
  }
  return report;
}

// ---- generation -----------------------------------------------------------

Generation joint_generate(const JointDenoiser& model, const TimestepMap& map_in, int label, const Guidance& guidance,
                          Rng& rng, int t_steps, const Shape& video_shape, const Shape& audio_shape) {
  if (t_steps < 1) throw ContractError("joint_generate: T_steps must be >= 1");
  TimestepMap map = map_in;
  map.T = t_steps;
  map.validate();
  const Schedule& sv = model.video_schedule();
  const Schedule& sa = model.audio_schedule();
  if (map.T_v > sv.t_max() || map.T_a > sa.t_max()) {
    throw ContractError("joint_generate: timestep map exceeds the model's schedules");
  }
  NoGradGuard no_grad;
  Generation g;
  g.video = rng.randn(video_shape);
  g.audio = rng.randn(audio_shape);
  Tensor self_v = Tensor::zeros(video_shape);
  Tensor self_a = Tensor::zeros(audio_shape);
  const float clip = model.self_cond_clip();
  const bool guided = label != model.null_label() && (guidance.w_v != 1.0f || guidance.w_a != 1.0f);

  for (int t = t_steps; t >= 1; --t) {
    const LocalSteps cur = map_timesteps(map, t);
    const LocalSteps next = map_timesteps(map, t - 1);
    g.steps.push_back({t, cur, next});
    const bool move_v = next.video < cur.video;
    const bool move_a = next.audio < cur.audio;
    if (!move_v && !move_a) continue;

    JointInput in;
    in.x_v = g.video;
    in.x_a = g.audio;
    in.t_v = cur.video;
    in.t_a = cur.audio;
    in.label = label;
    in.self_cond = std::make_pair(self_v, self_a);
    NoisePair eps = model.predict_noise(in);
    if (guided) {
      in.label = model.null_label();
      const NoisePair uncond = model.predict_noise(in);
      eps.video = cfg_combine(eps.video, uncond.video, guidance.w_v);
      eps.audio = cfg_combine(eps.audio, uncond.audio, guidance.w_a);
    }
    if (move_v) {
      self_v = clipped(predict_x0(g.video, eps.video, cur.video, sv), clip);
      g.video = ddim_step(g.video, eps.video, cur.video, next.video, sv);
    }
    if (move_a) {
      self_a = clipped(predict_x0(g.audio, eps.audio, cur.audio, sa), clip);
      g.audio = ddim_step(g.audio, eps.audio, cur.audio, next.audio, sa);
    }
  }
  return g;
}

Generation joint_generate(const JointModel& model, const TimestepMap& map, int label, const Guidance& guidance, Rng& rng,
                          int t_steps) {
  const auto& c = model.config();
  model.check_finite();
  return joint_generate(model, map, label, guidance, rng, t_steps, {c.video.frames, c.video.dim},
                        {c.audio.frames, c.audio.dim});
}

}  // namespace avj
