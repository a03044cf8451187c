#pragma once

// Scalar reference implementations used as test oracles. They are written
// directly from the model definitions with plain loops and share no code
// with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "eventsr/event_core.hpp"
#include "eventsr/event_sim.hpp"
#include "eventsr/losses.hpp"
#include "eventsr/metrics.hpp"
#include "eventsr/tensor.hpp"

namespace oracle
{

using eventsr::Event;
using eventsr::Tensor;

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64 & rng, double lo = 0.0, double hi = 1.0)
{
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto & v : t.data) v = u(rng);
  return t;
}

/// Random sorted stream of `count` events on a w x h sensor.
inline eventsr::EventStream random_stream(std::mt19937_64 & rng, std::size_t count, int w, int h)
{
  std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1), up(0, 1);
  std::uniform_int_distribution<int> dt(0, 3);
  std::vector<Event> ev(count);
  std::int64_t t = 0;
  for (auto & e : ev) {
    t += dt(rng);
    e = Event{t, ux(rng), uy(rng), up(rng) ? 1 : -1};
  }
  return eventsr::EventStream{std::move(ev), w, h};
}

/// Frame index of every stream position consumed by a stack, -1 for the rest.
inline std::vector<int> assign_frames(std::size_t stream_size, std::size_t ne, int n, std::size_t start)
{
  std::vector<int> frame(stream_size, -1);
  for (std::size_t i = 0; i < stream_size; ++i) {
    if (i < start) continue;
    const std::size_t k = (i - start) / ne;
    if (k < static_cast<std::size_t>(n)) frame[i] = static_cast<int>(k);
  }
  return frame;
}

inline Tensor render(const std::vector<Event> & events, int w, int h, double clip)
{
  std::vector<int> sum(static_cast<std::size_t>(w * h), 0);
  for (const auto & e : events) sum[static_cast<std::size_t>(e.y * w + e.x)] += e.p;
  Tensor img = Tensor::image(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = sum[static_cast<std::size_t>(y * w + x)];
      if (s > clip) s = clip;
      if (s < -clip) s = -clip;
      img.at(0, 0, y, x) = 0.5 + s / (2.0 * clip);
    }
  return img;
}

using EventTuple = std::tuple<std::int64_t, int, int, int>;

/// Threshold-crossing simulation one pixel at a time: the reference log level
/// moves by +-C each time the linearly interpolated log intensity reaches the
/// next level; event time is the rounded crossing time.
inline std::multiset<EventTuple> simulate(const eventsr::sim::VideoSequence & video, double c, double eps)
{
  std::multiset<EventTuple> out;
  const int h = video.height(), w = video.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double ref = std::log(video.frames[0].at(0, 0, y, x) + eps);
      for (std::size_t k = 1; k < video.frames.size(); ++k) {
        const double a = std::log(video.frames[k - 1].at(0, 0, y, x) + eps);
        const double b = std::log(video.frames[k].at(0, 0, y, x) + eps);
        const double t0 = static_cast<double>(video.timestamps[k - 1]);
        const double span = static_cast<double>(video.timestamps[k] - video.timestamps[k - 1]);
        if (b > a) {
          while (b - (ref + c) >= -eventsr::sim::kCrossingTolerance) {
            ref += c;
            const double f = std::min(1.0, std::max(0.0, (ref - a) / (b - a)));
            out.insert({static_cast<std::int64_t>(t0) + std::llround(f * span), x, y, 1});
          }
        } else if (b < a) {
          while ((ref - c) - b >= -eventsr::sim::kCrossingTolerance) {
            ref -= c;
            const double f = std::min(1.0, std::max(0.0, (ref - a) / (b - a)));
            out.insert({static_cast<std::int64_t>(t0) + std::llround(f * span), x, y, -1});
          }
        }
      }
    }
  return out;
}

/// Plain 6-deep convolution loop with zero padding, followed by ReLU.
inline Tensor conv_relu(const Tensor & x, const Tensor & w, const Tensor & b, int stride)
{
  const int pad = w.dim(2) / 2;
  const int k = w.dim(2);
  const int oh = (x.h() + 2 * pad - k) / stride + 1;
  const int ow = (x.w() + 2 * pad - k) / stride + 1;
  Tensor out({x.n(), w.dim(0), oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < w.dim(0); ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double s = b.data[static_cast<std::size_t>(o)];
          for (int i = 0; i < x.c(); ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                s += w.data[((static_cast<std::size_t>(o) * x.c() + i) * k + ky) * k + kx] * x.at(n, i, iy, ix);
              }
          out.at(n, o, oy, ox) = s > 0.0 ? s : 0.0;
        }
  return out;
}

inline Tensor features(const Tensor & x, const eventsr::losses::FeatureExtractor & phi)
{
  Tensor h = x;
  for (int i = 0; i < phi.selected_layer(); ++i) {
    const auto & l = phi.layers()[static_cast<std::size_t>(i)];
    h = conv_relu(h, l.weight, l.bias, l.stride);
  }
  return h;
}

/// Mean over batch items of the root-sum-square of a - b.
inline double batch_rss(const Tensor & a, const Tensor & b)
{
  const std::size_t per = a.size() / static_cast<std::size_t>(a.n());
  double total = 0.0;
  for (int n = 0; n < a.n(); ++n) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = a.data[n * per + i] - b.data[n * per + i];
      s += d * d;
    }
    total += std::sqrt(s);
  }
  return total / a.n();
}

inline double event_similarity(const Tensor & a, const Tensor & b, double alpha,
                               const eventsr::losses::FeatureExtractor & phi)
{
  const double pixel = batch_rss(a, b);
  if (alpha == 1.0) return pixel;
  const Tensor fa = features(a, phi), fb = features(b, phi);
  const double chw = static_cast<double>(fa.c()) * fa.h() * fa.w();
  return alpha * pixel + (1.0 - alpha) * batch_rss(fa, fb) / chw;
}

inline double total_variation(const Tensor & img)
{
  double total = 0.0;
  for (int n = 0; n < img.n(); ++n) {
    double s = 0.0;
    for (int c = 0; c < img.c(); ++c)
      for (int y = 0; y < img.h(); ++y)
        for (int x = 0; x < img.w(); ++x) {
          const double gh = y + 1 < img.h() ? img.at(n, c, y + 1, x) - img.at(n, c, y, x) : 0.0;
          const double gw = x + 1 < img.w() ? img.at(n, c, y, x + 1) - img.at(n, c, y, x) : 0.0;
          s += (gh + gw) * (gh + gw);
        }
    total += std::sqrt(s);
  }
  return total / img.n();
}

inline double adversarial_generator_paper(const Tensor & d)
{
  double s = 0.0;
  for (double v : d.data) s += std::log(1.0 - v);
  return -s / static_cast<double>(d.size());
}

inline double adversarial_discriminator(const Tensor & real, const Tensor & fake)
{
  double a = 0.0, b = 0.0;
  for (double v : real.data) a += std::log(v);
  for (double v : fake.data) b += std::log(1.0 - v);
  return -a / static_cast<double>(real.size()) - b / static_cast<double>(fake.size());
}

/// {generator, discriminator} relativistic-average losses.
inline std::pair<double, double> relativistic(const Tensor & cr, const Tensor & cf)
{
  double mr = 0.0, mf = 0.0;
  for (double v : cr.data) mr += v;
  for (double v : cf.data) mf += v;
  mr /= static_cast<double>(cr.size());
  mf /= static_cast<double>(cf.size());
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  double d_real = 0.0, d_fake = 0.0, g_real = 0.0, g_fake = 0.0;
  for (double v : cr.data) {
    d_real += -std::log(sig(v - mf));
    g_real += -std::log(1.0 - sig(v - mf));
  }
  for (double v : cf.data) {
    d_fake += -std::log(1.0 - sig(v - mr));
    g_fake += -std::log(sig(v - mr));
  }
  const double nr = static_cast<double>(cr.size()), nf = static_cast<double>(cf.size());
  return {g_fake / nf + g_real / nr, d_real / nr + d_fake / nf};
}

/// SSIM averaged over every window x window patch, each evaluated directly.
inline double ssim(const Tensor & a, const Tensor & b, int win = 8, double k1 = 0.01, double k2 = 0.03)
{
  const double c1 = k1 * k1, c2 = k2 * k2;
  const int h = a.h(), w = a.w();
  double total = 0.0;
  int count = 0;
  for (int y0 = 0; y0 + win <= h; ++y0)
    for (int x0 = 0; x0 + win <= w; ++x0) {
      double ma = 0.0, mb = 0.0;
      for (int y = y0; y < y0 + win; ++y)
        for (int x = x0; x < x0 + win; ++x) {
          ma += a.at(0, 0, y, x);
          mb += b.at(0, 0, y, x);
        }
      const double m = win * win;
      ma /= m;
      mb /= m;
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int y = y0; y < y0 + win; ++y)
        for (int x = x0; x < x0 + win; ++x) {
          const double da = a.at(0, 0, y, x) - ma, db = b.at(0, 0, y, x) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= m;
      vb /= m;
      cov /= m;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

/// Index of the closest APS timestamp for each reconstruction, scanning
/// every candidate; the first minimum found (earliest frame) wins.
inline std::vector<std::size_t> match(const std::vector<std::int64_t> & recon, const std::vector<std::int64_t> & aps)
{
  std::vector<std::size_t> out;
  for (auto t : recon) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < aps.size(); ++j)
      if (std::llabs(aps[j] - t) < std::llabs(aps[best] - t)) best = j;
    out.push_back(best);
  }
  return out;
}

/// Largest relative error between an analytic gradient and central finite
/// differences of f at `coords` random coordinates of x.
inline double gradient_check(const std::function<double(const Tensor &)> & f, const Tensor & x,
                             const Tensor & analytic, std::mt19937_64 & rng, int coords = 20, double h = 1e-4)
{
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  double worst = 0.0;
  for (int i = 0; i < coords; ++i) {
    const std::size_t k = pick(rng);
    Tensor xp = x, xm = x;
    xp.data[k] += h;
    xm.data[k] -= h;
    const double numeric = (f(xp) - f(xm)) / (2.0 * h);
    const double a = analytic.data[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace oracle
