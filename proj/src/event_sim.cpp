#include "eventsr/event_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"

namespace eventsr::sim
{

namespace fs = std::filesystem;

void VideoSequence::validate() const
{
  if (frames.size() < 2) throw DataError("video needs at least 2 frames");
  if (timestamps.size() != frames.size()) throw DataError("video: one timestamp per frame required");
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].shape != frames[0].shape || frames[k].rank() != 4 || frames[k].c() != 1)
      throw DataError("video: frame " + std::to_string(k) + " shape mismatch");
    if (k > 0 && timestamps[k] <= timestamps[k - 1])
      throw DataError("video: timestamps must be strictly increasing (frame " + std::to_string(k) + ")");
  }
}

void SimConfig::validate() const
{
  if (!(contrast_threshold > 0.0)) throw DataError("contrast threshold must be positive");
  if (!(log_eps > 0.0)) throw DataError("log_eps must be positive");
  if (threshold_noise < 0.0 || refractory_us < 0) throw DataError("noise/refractory must be >= 0");
}

namespace
{

int thread_count()
{
  if (const char * env = std::getenv("EVENTSR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

double pixel_threshold(const SimConfig & cfg, std::size_t pixel)
{
  if (cfg.threshold_noise <= 0.0) return cfg.contrast_threshold;
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + pixel);
  std::normal_distribution<double> n01(0.0, 1.0);
  const double c = cfg.contrast_threshold * (1.0 + cfg.threshold_noise * n01(rng));
  return std::max(c, 0.01 * cfg.contrast_threshold);
}

void simulate_rows(const VideoSequence & video, const SimConfig & cfg, int row_begin, int row_end,
                   std::vector<Event> & out)
{
  const int w = video.width();
  const std::size_t frames = video.frames.size();
  for (int y = row_begin; y < row_end; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pixel = static_cast<std::size_t>(y) * w + x;
      const double c = pixel_threshold(cfg, pixel);
      double level = std::log(video.frames[0].data[pixel] + cfg.log_eps);
      std::int64_t last_t = -1;
      for (std::size_t k = 0; k + 1 < frames; ++k) {
        const double la = std::log(video.frames[k].data[pixel] + cfg.log_eps);
        const double lb = std::log(video.frames[k + 1].data[pixel] + cfg.log_eps);
        const std::int64_t ta = video.timestamps[k];
        const std::int64_t tb = video.timestamps[k + 1];
        if (la == lb) continue;
        const int p = lb > la ? 1 : -1;
        while (p * (lb - (level + p * c)) >= -kCrossingTolerance) {
          const double target = level + p * c;
          double frac = (target - la) / (lb - la);
          frac = std::clamp(frac, 0.0, 1.0);
          const auto t = ta + std::llround(frac * static_cast<double>(tb - ta));
          level = target;
          if (cfg.refractory_us > 0 && last_t >= 0 && t - last_t < cfg.refractory_us) continue;
          out.push_back(Event{t, x, y, p});
          last_t = t;
        }
      }
    }
  }
}

}  // namespace

EventStream simulate_events(const VideoSequence & video, const SimConfig & cfg)
{
  video.validate();
  cfg.validate();
  const int h = video.height();
  const int threads = std::min(thread_count(), h);
  std::vector<std::vector<Event>> parts(static_cast<std::size_t>(threads));
  if (threads <= 1) {
    simulate_rows(video, cfg, 0, h, parts[0]);
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) {
      const int b = h * i / threads;
      const int e = h * (i + 1) / threads;
      pool.emplace_back([&, i, b, e] { simulate_rows(video, cfg, b, e, parts[static_cast<std::size_t>(i)]); });
    }
    for (auto & t : pool) t.join();
  }
  std::vector<Event> events;
  for (auto & part : parts) events.insert(events.end(), part.begin(), part.end());
  std::sort(events.begin(), events.end(), [](const Event & a, const Event & b) {
    return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
  });
  return EventStream{std::move(events), video.width(), h};
}

namespace
{

double cubic_weight(double d)
{
  constexpr double a = -0.5;
  d = std::abs(d);
  if (d <= 1.0) return ((a + 2.0) * d - (a + 3.0)) * d * d + 1.0;
  if (d < 2.0) return ((a * d - 5.0 * a) * d + 8.0 * a) * d - 4.0 * a;
  return 0.0;
}

}  // namespace

Tensor downsample_bicubic(const Tensor & image, int factor)
{
  if (factor < 2) throw std::invalid_argument("downsample factor must be >= 2");
  if (image.rank() != 4 || image.n() != 1 || image.c() != 1)
    throw std::invalid_argument("downsample_bicubic expects a 1x1xHxW image");
  const int h = image.h(), w = image.w();
  if (h % factor != 0 || w % factor != 0)
    throw DataError("image " + std::to_string(w) + "x" + std::to_string(h) + " not divisible by " +
                    std::to_string(factor));
  const int oh = h / factor, ow = w / factor;

  // Separable: rows first into an h x ow buffer, then columns.
  auto taps = [factor](int o, int limit) {
    const double src = (o + 0.5) * factor - 0.5;
    const int base = static_cast<int>(std::floor(src));
    std::array<std::pair<int, double>, 4> t{};
    for (int k = 0; k < 4; ++k) {
      const int idx = base - 1 + k;
      t[static_cast<std::size_t>(k)] = {std::clamp(idx, 0, limit - 1), cubic_weight(src - idx)};
    }
    return t;
  };
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int ox = 0; ox < ow; ++ox) {
    const auto t = taps(ox, w);
    for (int y = 0; y < h; ++y) {
      double s = 0.0;
      for (const auto & [idx, wt] : t) s += wt * image.at(0, 0, y, idx);
      tmp[static_cast<std::size_t>(y) * ow + ox] = s;
    }
  }
  Tensor out = Tensor::image(oh, ow);
  for (int oy = 0; oy < oh; ++oy) {
    const auto t = taps(oy, h);
    for (int ox = 0; ox < ow; ++ox) {
      double s = 0.0;
      for (const auto & [idx, wt] : t) s += wt * tmp[static_cast<std::size_t>(idx) * ow + ox];
      out.at(0, 0, oy, ox) = s;
    }
  }
  return out;
}

Tensor degrade_aps(const Tensor & image, double blur_sigma, double noise_sigma, std::uint64_t seed)
{
  if (blur_sigma < 0.0 || noise_sigma < 0.0) throw std::invalid_argument("sigmas must be >= 0");
  if (image.rank() != 4) throw std::invalid_argument("degrade_aps expects an NCHW image");
  Tensor out = image;
  if (blur_sigma > 0.0) {
    const int radius = static_cast<int>(std::ceil(3.0 * blur_sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (blur_sigma * blur_sigma));
      total += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (double & k : kernel) k /= total;
    const int h = image.h(), w = image.w();
    Tensor tmp = out;
    for (int n = 0; n < image.n(); ++n)
      for (int c = 0; c < image.c(); ++c) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
              s += kernel[static_cast<std::size_t>(i + radius)] * out.at(n, c, y, std::clamp(x + i, 0, w - 1));
            tmp.at(n, c, y, x) = s;
          }
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
              s += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(n, c, std::clamp(y + i, 0, h - 1), x);
            out.at(n, c, y, x) = s;
          }
      }
  }
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (double & v : out.data) v += noise(rng);
  }
  if (blur_sigma > 0.0 || noise_sigma > 0.0)
    for (double & v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

VideoSequence synth_video(int width, int height, int frames, std::int64_t frame_dt_us, std::uint64_t seed)
{
  if (width < 1 || height < 1 || frames < 2 || frame_dt_us < 1) throw DataError("synth_video: bad arguments");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  struct Blob
  {
    double cx, cy, radius, amp;
  };
  struct Wave
  {
    double kx, ky, phase, amp;
  };
  std::vector<Blob> blobs(6);
  for (auto & b : blobs) b = {u01(rng), u01(rng), 0.05 + 0.12 * u01(rng), u01(rng) < 0.5 ? -0.35 : 0.35};
  std::vector<Wave> waves(3);
  for (auto & wv : waves)
    wv = {2.0 + 6.0 * u01(rng), 2.0 + 6.0 * u01(rng), 6.283185307179586 * u01(rng), 0.06 + 0.06 * u01(rng)};
  // Translation in normalized units per frame.
  const double angle = 6.283185307179586 * u01(rng);
  const double speed = 0.02 + 0.02 * u01(rng);
  const double vx = speed * std::cos(angle), vy = speed * std::sin(angle);

  auto scene = [&](double sx, double sy) {
    double v = 0.5;
    for (const auto & b : blobs) {
      // Periodic distance keeps the texture wrapping as it translates.
      double dx = sx - b.cx - std::round(sx - b.cx);
      double dy = sy - b.cy - std::round(sy - b.cy);
      v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
    }
    for (const auto & wv : waves)
      v += wv.amp * std::sin(6.283185307179586 * (std::round(wv.kx) * sx + std::round(wv.ky) * sy) + wv.phase);
    return std::clamp(v, 0.05, 0.95);
  };

  VideoSequence video;
  for (int k = 0; k < frames; ++k) {
    Tensor f = Tensor::image(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double sx = (x + 0.5) / width - vx * k;
        const double sy = (y + 0.5) / height - vy * k;
        f.at(0, 0, y, x) = scene(sx, sy);
      }
    video.frames.push_back(std::move(f));
    video.timestamps.push_back(k * frame_dt_us);
  }
  return video;
}

VideoSequence load_video_dir(const fs::path & dir, std::int64_t frame_dt_us)
{
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto & entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  VideoSequence video;
  for (const auto & f : files) video.frames.push_back(io::read_png(f));
  const fs::path ts = dir / "timestamps.txt";
  if (fs::exists(ts)) {
    std::ifstream in(ts);
    std::int64_t t = 0;
    while (in >> t) video.timestamps.push_back(t);
  } else {
    for (std::size_t k = 0; k < files.size(); ++k) video.timestamps.push_back(static_cast<std::int64_t>(k) * frame_dt_us);
  }
  video.validate();
  return video;
}

void save_video_dir(const fs::path & dir, const VideoSequence & video)
{
  video.validate();
  fs::create_directories(dir);
  std::ostringstream ts;
  for (std::size_t k = 0; k < video.frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.png", k);
    io::write_png(dir / name, video.frames[k], 16);
    ts << video.timestamps[k] << '\n';
  }
  io::write_text_atomic(dir / "timestamps.txt", ts.str());
}

}  // namespace eventsr::sim
