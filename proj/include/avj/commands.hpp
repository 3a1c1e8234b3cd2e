// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// The five experiment commands. Each validates its inputs before touching
// the filesystem and returns a JSON summary.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include <json.hpp>

#include "avj/config.hpp"
#include "avj/metrics.hpp"

namespace avj {

// Progress lines (one per epoch, etc.) go to `log` when non-null.
nlohmann::json cmd_make_data(const RunConfig& c, std::ostream* log = nullptr);
nlohmann::json cmd_train(const RunConfig& c, std::ostream* log = nullptr);
nlohmann::json cmd_generate(const RunConfig& c, std::ostream* log = nullptr);
nlohmann::json cmd_profile_loss(const RunConfig& c, std::ostream* log = nullptr);
// Scores the pairs in `samples` (a dataset-format file); writes metrics.json
// next to it.
nlohmann::json cmd_eval(const RunConfig& c, const std::filesystem::path& samples, std::ostream* log = nullptr);

// Per-pair AV-Align of video/audio latents with the configured detector.
AlignReport score_pair(const Sample& s, const MetricsSection& m, int audio_per_video);
nlohmann::json evaluate_samples(std::span<const Sample> samples, const MetricsSection& m,
                                std::span<const Sample> reference = {});

}  // namespace avj
