// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Reads a JSON run config, applies flag overrides,
// and hands the result to the library's C interface.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "avjoint.h"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<std::string> inject_mode;
  std::optional<double> guidance_v;
  std::optional<double> guidance_a;
  std::optional<int> n_samples;
  std::optional<int> epochs;
  std::optional<int> steps;
  std::optional<int> n_bins;
  std::optional<int> profile_steps;
  bool resume = false;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::optional<std::string> out_dir;
  std::optional<std::string> loss_csv;
  std::optional<std::string> profile_csv;
};

int exit_code(avj_status s) {
  switch (s) {
    case AVJ_OK:
      return 0;
    case AVJ_ERR_VALIDATION:
      return 2;
    case AVJ_ERR_INCOMPATIBLE:
      return 3;
    default:
      return 1;
  }
}

template <typename T>
void set_if(nlohmann::json& j, const char* section, const char* key, const std::optional<T>& v) {
  if (v) j[section][key] = *v;
}

// n_samples means pairs to synthesize for make-data and pairs to draw for
// generate.
void apply(nlohmann::json& j, const Overrides& o, const std::string& command) {
  if (o.seed) j["seed"] = *o.seed;
  set_if(j, "timesteps", "gamma", o.gamma);
  set_if(j, "timesteps", "T", o.steps);
  set_if(j, "model", "inject_mode", o.inject_mode);
  set_if(j, "guidance", "w_v", o.guidance_v);
  set_if(j, "guidance", "w_a", o.guidance_a);
  set_if(j, command == "make-data" ? "data" : "generate", "n_samples", o.n_samples);
  set_if(j, "train", "epochs", o.epochs);
  set_if(j, "profile", "n_bins", o.n_bins);
  set_if(j, "profile", "T", o.profile_steps);
  if (o.resume) j["train"]["resume"] = true;
  set_if(j, "paths", "dataset", o.dataset);
  set_if(j, "paths", "checkpoint", o.checkpoint);
  set_if(j, "paths", "out_dir", o.out_dir);
  set_if(j, "paths", "loss_csv", o.loss_csv);
  set_if(j, "paths", "profile_csv", o.profile_csv);
}

int run(const std::string& command, const std::string& config_path, const Overrides& o, const std::string& arg,
        bool quiet) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot read config '" << config_path << "'\n";
    return 2;
  }
  std::stringstream text;
  text << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "error: config '" << config_path << "' is not valid JSON: " << e.what() << "\n";
    return 2;
  }
  if (!j.is_object()) {
    std::cerr << "error: config '" << config_path << "' must be a JSON object\n";
    return 2;
  }
  apply(j, o, command);

  char* result = nullptr;
  const avj_status s = avj_run(command.c_str(), j.dump().c_str(), arg.empty() ? nullptr : arg.c_str(), quiet ? 0 : 1,
                               &result);
  if (s != AVJ_OK) {
    std::cerr << "error: " << avj_last_error() << "\n";
    return exit_code(s);
  }
  std::cout << result << "\n";
  avj_free_string(result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint audio-video diffusion toolkit"};
  app.set_version_flag("--version", std::string(avj_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string samples_path;
  bool quiet = false;
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run config (JSON)")->required();
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--gamma", o.gamma, "Timestep adjustment exponent");
    sub->add_option("--inject-mode", o.inject_mode, "cmc_pe | cross_attention | none");
    sub->add_option("--guidance-v", o.guidance_v, "Video guidance weight");
    sub->add_option("--guidance-a", o.guidance_a, "Audio guidance weight");
    sub->add_option("--dataset", o.dataset, "Dataset path");
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
    sub->add_flag("-q,--quiet", quiet, "Suppress progress output");
  };

  auto* make_data = app.add_subcommand("make-data", "Synthesize the paired dataset");
  common(make_data);
  make_data->add_option("--n-samples", o.n_samples, "Number of pairs");

  auto* train = app.add_subcommand("train", "Train the joint model");
  common(train);
  train->add_option("--epochs", o.epochs, "Epochs to run in this invocation");
  train->add_option("--loss-csv", o.loss_csv, "Per-epoch loss CSV");
  train->add_flag("--resume", o.resume, "Continue from the checkpoint if it exists");

  auto* generate = app.add_subcommand("generate", "Generate pairs and score them");
  common(generate);
  generate->add_option("--n-samples", o.n_samples, "Number of pairs");
  generate->add_option("--steps", o.steps, "Global denoising steps");
  generate->add_option("--out-dir", o.out_dir, "Output directory");

  auto* profile = app.add_subcommand("profile-loss", "Per-modality loss over global timesteps");
  common(profile);
  profile->add_option("--n-bins", o.n_bins, "Number of timestep bins");
  profile->add_option("--steps", o.profile_steps, "Global step count of the profile axis");
  profile->add_option("--out", o.profile_csv, "Output CSV");

  auto* eval = app.add_subcommand("eval", "Score an existing samples file or directory");
  common(eval);
  eval->add_option("samples", samples_path, "Samples file or directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (CLI::App* sub : {make_data, train, generate, profile, eval}) {
    if (sub->parsed()) return run(sub->get_name(), config_path, o, samples_path, quiet);
  }
  return 2;
}
