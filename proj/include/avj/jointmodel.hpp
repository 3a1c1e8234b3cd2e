// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Two-branch joint denoiser for paired video/audio latents.
//
// Each branch is a toy stand-in for a pretrained single-modality denoiser:
// a per-frame input projection with a small temporal context, a stack of
// temporal self-attention blocks, and a per-frame output head. Cross-modal
// information enters only through the inject sites, which receive the other
// modality's connector features. Inject sites come in two flavours:
//
//   cmc_pe           cond features are projected, linearly interpolated to
//                    the target frame count, added to the target like a
//                    positional embedding, then self-attended over time.
//   cross_attention  cond features are mean-pooled to one vector and used as
//                    the keys/values of a cross-attention (baseline).
//
// InjectMode::none drops the inject sites, which factorizes the model.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "avj/diffusion.hpp"
#include "avj/nn.hpp"
#include "avj/schedule.hpp"

namespace avj {

enum class InjectMode { cmc_pe, cross_attention, none };

InjectMode parse_inject_mode(const std::string& name);
std::string to_string(InjectMode mode);
std::string to_string(Modality m);

struct BranchConfig {
  Modality modality = Modality::video;
  int frames = 16;
  int dim = 8;
  int hidden_dim = 32;
  int n_layers = 2;
  int n_inject_sites = 4;

  void validate() const;
};

struct ModelConfig {
  BranchConfig video{Modality::video, 16, 8, 32, 2, 4};
  BranchConfig audio{Modality::audio, 64, 8, 32, 2, 4};
  ScheduleConfig video_schedule{ScheduleKind::scaled_linear, 1000, 8.5e-4, 1.2e-2};
  ScheduleConfig audio_schedule{ScheduleKind::linear, 1000, 1.5e-3, 1.95e-2};
  InjectMode inject_mode = InjectMode::cmc_pe;
  int n_classes = 4;
  int time_features = 16;  // sinusoidal features per modality timestep
  int connector_radius = 1;
  float self_cond_clip = 5.0f;
  std::uint64_t init_seed = 0;

  void validate() const;
};

// ---- connector ------------------------------------------------------------

// Per-frame encoder of (noisy latents ++ self-conditioning estimate). Output
// frame i depends only on input frames within radius() of i.
struct Connector {
  Linear in;
  Linear out;
  int radius = 1;

  int receptive_radius() const { return radius; }
};

Connector make_connector(ParamSet& params, const std::string& name, int dim, int hidden, int radius, Rng& rng);

Tensor connector_encode(const Connector& conn, const Tensor& x_noisy, const Tensor& x0_self);

// ---- inject blocks --------------------------------------------------------

struct InjectBlock {
  InjectMode mode = InjectMode::cmc_pe;
  Linear cond_proj;  // cond width -> target width
  Norm norm1;
  Attention attn;
  Norm norm2;
  FeedForward ff;
  bool pool_cond = true;  // cross-attention baseline pools cond to one vector
};

InjectBlock make_inject_block(ParamSet& params, const std::string& name, InjectMode mode, int width, int cond_width,
                              Rng& rng);

// The term CMC-PE adds to the target: interp_time(cond_proj(cond), F_t).
Tensor cmc_pe_term(const Tensor& cond, const InjectBlock& block, int target_frames);
Tensor cmc_pe_inject(const Tensor& target, const Tensor& cond, const InjectBlock& block);
Tensor cross_attn_inject(const Tensor& target, const Tensor& cond, const InjectBlock& block);

// ---- branches and the joint model ----------------------------------------

struct CoreBlock {
  Norm norm1;
  Attention attn;
  Norm norm2;
  FeedForward ff;
};

struct Branch {
  BranchConfig config;
  Linear in_proj;
  std::vector<CoreBlock> blocks;
  std::vector<InjectBlock> sites;
  std::vector<int> site_after_block;  // core block index each site follows
  Norm out_norm;
  Linear out_proj;
  // Direct path from the noisy latent to the noise estimate, starting at the
  // identity (the right answer at high noise). The final norm discards each
  // frame's scale, so the main path alone cannot express it.
  Linear skip;
  Linear time_in;
  Linear time_out;
  Tensor label_table;  // [n_classes + 1, hidden]; last row is the null label
};

struct JointInput {
  Tensor x_v;
  Tensor x_a;
  int t_v = 0;
  int t_a = 0;
  int label = 0;
  // Self-conditioning estimates of x0; zeros when absent.
  std::optional<std::pair<Tensor, Tensor>> self_cond;
};

struct NoisePair {
  Tensor video;
  Tensor audio;
};

// Anything that predicts both modalities' noise jointly. The learned model
// implements it; tests plug in analytic oracles.
class JointDenoiser {
 public:
  virtual ~JointDenoiser() = default;
  virtual NoisePair predict_noise(const JointInput& in) const = 0;
  virtual const Schedule& video_schedule() const = 0;
  virtual const Schedule& audio_schedule() const = 0;
  virtual int null_label() const = 0;
  virtual float self_cond_clip() const { return 5.0f; }
};

class JointModel final : public JointDenoiser {
 public:
  explicit JointModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  NoisePair predict_noise(const JointInput& in) const override;
  const Schedule& video_schedule() const override { return sched_v_; }
  const Schedule& audio_schedule() const override { return sched_a_; }
  int null_label() const override { return config_.n_classes; }
  float self_cond_clip() const override { return config_.self_cond_clip; }

  const Connector& video_connector() const { return conn_v_; }
  const Connector& audio_connector() const { return conn_a_; }
  const Branch& video_branch() const { return video_; }
  const Branch& audio_branch() const { return audio_; }

  // Checks every parameter is finite; throws NumericError otherwise.
  void check_finite() const;

 private:
  Tensor run_branch(const Branch& b, const Tensor& x, const Tensor& self, const Tensor& cond_row,
                    const Tensor* other_features) const;
  Tensor time_row(const Branch& b, int t_v, int t_a, int label) const;

  ModelConfig config_;
  Schedule sched_v_;
  Schedule sched_a_;
  ParamSet params_;
  Connector conn_v_;
  Connector conn_a_;
  Branch video_;
  Branch audio_;
};

NoisePair joint_predict_noise(const JointDenoiser& model, const JointInput& in);

// Sinusoidal features of a local timestep scaled by its own T_max: [1, n].
Tensor timestep_features(int t, int t_max, int n);

// ---- training -------------------------------------------------------------

struct Sample {
  Tensor video;  // [F, D_v]
  Tensor audio;  // [tau, D_a]
  int label = 0;
  std::vector<int> event_times;
};

struct LocalDraw {
  int t_v = 0;
  int t_a = 0;
};

// Independent uniform local timesteps on [1, T_v] x [1, T_a].
LocalDraw draw_local_timesteps(Rng& rng, int t_v_max, int t_a_max);

struct JointLossOptions {
  double self_cond_prob = 0.5;
  double label_dropout = 0.1;
};

struct JointLossTrace {
  std::vector<LocalDraw> draws;
  std::vector<bool> self_conditioned;
  std::vector<bool> label_dropped;
};

// Mean over the batch of L_v + L_a with independently drawn local timesteps.
Tensor joint_loss(const JointDenoiser& model, std::span<const Sample* const> batch, Rng& rng,
                  const JointLossOptions& options = {}, JointLossTrace* trace = nullptr);

struct TrainOptions {
  double lr = 1e-4;
  int batch_size = 4;
  int epochs = 50;
  std::uint64_t seed = 0;
  // Epoch index (0-based) after which branch cores stop updating; -1 never.
  int freeze_cores_after = -1;
  JointLossOptions loss;
};

struct TrainState {
  Adam adam;
  int epochs_done = 0;
};

struct TrainReport {
  int first_epoch = 0;  // 1-based index of the first epoch run here
  std::vector<double> epoch_loss;
};

// Called after each epoch with (1-based epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

TrainState make_train_state(const JointModel& model, const TrainOptions& options);

TrainReport train(JointModel& model, std::span<const Sample> dataset, const TrainOptions& options, TrainState& state,
                  const EpochCallback& on_epoch = {});

// ---- generation -----------------------------------------------------------

struct Guidance {
  float w_v = 7.5f;
  float w_a = 2.5f;
};

struct GenerationStep {
  int global = 0;
  LocalSteps from;
  LocalSteps to;
};

struct Generation {
  Tensor video;
  Tensor audio;
  std::vector<GenerationStep> steps;
};

// Joint DDIM over global steps T..1 with per-modality local steps from the
// timestep map. The map's T is replaced by t_steps. Both latents start from
// Gaussian noise (video drawn first). A modality whose local step does not
// change between consecutive global steps is left untouched.
Generation joint_generate(const JointDenoiser& model, const TimestepMap& map, int label, const Guidance& guidance,
                          Rng& rng, int t_steps, const Shape& video_shape, const Shape& audio_shape);

Generation joint_generate(const JointModel& model, const TimestepMap& map, int label, const Guidance& guidance, Rng& rng,
                          int t_steps);

}  // namespace avj
