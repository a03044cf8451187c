#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eventsr/dataset.hpp"
#include "eventsr/losses.hpp"

namespace eventsr
{

enum class AdvMode { Standard, Relativistic };

/// Everything one training phase needs. defaults(k) carries the published
/// per-phase constants; the rest are desk-scale choices.
struct PhaseConfig
{
  int phase = 1;
  losses::LossWeights weights;
  AdvMode adv_mode = AdvMode::Standard;
  losses::GeneratorMode gen_mode = losses::GeneratorMode::NonSaturating;

  int iterations = 200;
  double lr = 2e-4;
  std::vector<double> lr_decay_points{0.5, 0.75};  // fractions of `iterations`
  double lr_gamma = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  std::uint64_t seed = 0;
  int batch = 1;
  bool augment = true;
  std::vector<std::string> data;  // manifest paths

  std::size_t events_per_frame = 10000;
  int stack_frames = 3;
  std::size_t stack_stride = 0;  // 0 -> n * N_e
  double render_clip = 3.0;
  bool cumulative = false;
  double focus_min_variance = 0.0;

  int scale = 4;
  int channels = 16;
  int gen_blocks = 4;
  int feedback_blocks = 3;
  int feature_layer = 2;
  std::uint64_t feature_seed = 19;

  // Ablation switches: disable the phase's feedback / discriminator losses.
  bool use_feedback = true;
  bool use_discriminator = true;

  static PhaseConfig defaults(int phase);
  /// Step-decayed learning rate in effect at a 0-based step.
  double lr_at(std::int64_t step) const;
  void validate() const;
};

/// Flat key=value configuration covering training, stacking and simulation.
struct Config
{
  PhaseConfig train;
  data::DatasetOptions dataset;
  std::int64_t frame_dt_us = 1000;

  /// Keys accepted in config files and --set overrides.
  static const std::vector<std::string> & documented_keys();

  /// Starts from PhaseConfig::defaults(phase) when the text names a phase.
  static Config parse(const std::string & text, const std::vector<std::string> & overrides = {});
  static Config load(const std::filesystem::path & path, const std::vector<std::string> & overrides = {});

  /// Applies one key=value pair; UsageError for unknown keys or bad values.
  void set(const std::string & key, const std::string & value);
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
};

}  // namespace eventsr
