#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "eventsr/event_core.hpp"
#include "eventsr/tensor.hpp"

namespace eventsr::sim
{

/// Grayscale frames (each 1x1xHxW, values in [0,1]) with strictly
/// increasing microsecond timestamps.
struct VideoSequence
{
  std::vector<Tensor> frames;
  std::vector<std::int64_t> timestamps;

  int height() const { return frames.front().h(); }
  int width() const { return frames.front().w(); }
  /// Throws DataError unless there are >= 2 same-shape frames with
  /// strictly increasing timestamps.
  void validate() const;
};

struct SimConfig
{
  double contrast_threshold = 0.15;  // log-intensity units
  double log_eps = 1e-3;
  std::uint64_t seed = 0;
  /// Relative per-pixel threshold jitter (0 disables).
  double threshold_noise = 0.0;
  /// Minimum spacing between events at one pixel (0 disables).
  std::int64_t refractory_us = 0;

  void validate() const;
};

/// Threshold crossings closer than this (log units) to a level count as hits.
inline constexpr double kCrossingTolerance = 1e-9;

/// Per-pixel threshold-crossing event generation with log intensity
/// linear in time between frames. Output is sorted by (t, y, x, p).
/// Honors EVENTSR_THREADS for pixel-parallel simulation.
EventStream simulate_events(const VideoSequence & video, const SimConfig & cfg);

/// Cubic-convolution (a = -0.5) resampling at output pixel centers, edge-clamped.
Tensor downsample_bicubic(const Tensor & image, int factor);

/// Separable Gaussian blur (edge-clamped) followed by seeded additive
/// Gaussian noise, clipped to [0,1].
Tensor degrade_aps(const Tensor & image, double blur_sigma, double noise_sigma, std::uint64_t seed);

/// Procedural textured scene translating across the frame; frames are
/// deterministic in (size, count, seed). Used for demos and tests.
VideoSequence synth_video(int width, int height, int frames, std::int64_t frame_dt_us, std::uint64_t seed);

/// PNG frames sorted by file name; timestamps from timestamps.txt (one per
/// line) when present, else k * frame_dt_us.
VideoSequence load_video_dir(const std::filesystem::path & dir, std::int64_t frame_dt_us = 1000);
void save_video_dir(const std::filesystem::path & dir, const VideoSequence & video);

}  // namespace eventsr::sim
