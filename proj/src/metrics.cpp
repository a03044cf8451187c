#include "eventsr/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"

namespace eventsr::metrics
{

namespace fs = std::filesystem;

namespace
{

void check_same(const Tensor & a, const Tensor & b, const char * what)
{
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape) + " vs " +
                                shape_string(b.shape));
}

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double psnr(const Tensor & a, const Tensor & b)
{
  check_same(a, b, "psnr");
  if (a.size() == 0) throw std::invalid_argument("psnr: empty images");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor & a, const Tensor & b, int window, double k1, double k2)
{
  check_same(a, b, "ssim");
  if (a.rank() != 4 || a.n() != 1 || a.c() != 1) throw std::invalid_argument("ssim expects 1x1xHxW images");
  const int h = a.h(), w = a.w();
  if (window < 1 || h < window || w < window) throw std::invalid_argument("ssim: image smaller than window");
  const double c1 = k1 * k1, c2 = k2 * k2;

  // Summed-area tables of x, y, x^2, y^2, xy.
  const int W1 = w + 1;
  std::vector<double> sx((h + 1) * W1), sy(sx.size()), sxx(sx.size()), syy(sx.size()), sxy(sx.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = a.at(0, 0, y, x), v = b.at(0, 0, y, x);
      const int i = (y + 1) * W1 + x + 1;
      const int up = y * W1 + x + 1, left = (y + 1) * W1 + x, diag = y * W1 + x;
      sx[i] = u + sx[up] + sx[left] - sx[diag];
      sy[i] = v + sy[up] + sy[left] - sy[diag];
      sxx[i] = u * u + sxx[up] + sxx[left] - sxx[diag];
      syy[i] = v * v + syy[up] + syy[left] - syy[diag];
      sxy[i] = u * v + sxy[up] + sxy[left] - sxy[diag];
    }
  auto box = [&](const std::vector<double> & s, int y, int x) {
    return s[(y + window) * W1 + x + window] - s[y * W1 + x + window] - s[(y + window) * W1 + x] + s[y * W1 + x];
  };
  const double n = static_cast<double>(window) * window;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + window <= h; ++y)
    for (int x = 0; x + window <= w; ++x) {
      const double mx = box(sx, y, x) / n, my = box(sy, y, x) / n;
      const double vx = box(sxx, y, x) / n - mx * mx;
      const double vy = box(syy, y, x) / n - my * my;
      const double cov = box(sxy, y, x) / n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

std::map<std::string, MetricFn> & metric_registry()
{
  static std::map<std::string, MetricFn> registry{
    {"psnr", [](const Tensor & a, const Tensor & b) { return psnr(a, b); }},
    {"ssim", [](const Tensor & a, const Tensor & b) { return ssim(a, b); }},
  };
  return registry;
}

std::vector<Pairing> match_by_timestamp(const std::vector<TimedImage> & recon, const std::vector<TimedImage> & aps)
{
  if (recon.empty() || aps.empty()) throw DataError("match_by_timestamp: empty list");
  std::vector<Pairing> out;
  out.reserve(recon.size());
  auto by_t = [](const TimedImage & a, std::int64_t t) { return a.t < t; };
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const std::int64_t t = recon[i].t;
    auto it = std::lower_bound(aps.begin(), aps.end(), t, by_t);
    std::size_t best;
    if (it == aps.end()) {
      best = aps.size() - 1;
    } else if (it == aps.begin()) {
      best = 0;
    } else {
      const auto hi = static_cast<std::size_t>(it - aps.begin());
      // Step back to the first of any run of equal timestamps above t.
      const std::size_t lo = hi - 1;
      best = (t - aps[lo].t) <= (aps[hi].t - t) ? lo : hi;
    }
    // Earliest frame among equal timestamps.
    while (best > 0 && aps[best - 1].t == aps[best].t) --best;
    out.push_back({i, best, std::llabs(t - aps[best].t)});
  }
  return out;
}

Summary summarize(const std::vector<double> & values)
{
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

void EvalReport::recompute_aggregates()
{
  aggregates.clear();
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_phase;
  for (const auto & r : rows) {
    by_phase[r.phase].first.push_back(r.psnr_db);
    by_phase[r.phase].second.push_back(r.ssim);
  }
  for (const auto & [phase, vals] : by_phase) {
    aggregates[phase]["psnr"] = summarize(vals.first);
    aggregates[phase]["ssim"] = summarize(vals.second);
  }
}

std::string EvalReport::to_csv() const
{
  std::string out = "phase,recon_id,aps_id,dt_us,psnr_db,ssim\n";
  for (const auto & r : rows)
    out += std::to_string(r.phase) + "," + r.recon_id + "," + r.aps_id + "," + std::to_string(r.dt_us) + "," +
           fmt(r.psnr_db) + "," + fmt(r.ssim) + "\n";
  return out;
}

std::string EvalReport::to_json() const
{
  nlohmann::json j = nlohmann::json::object();
  for (const auto & [phase, metrics] : aggregates) {
    nlohmann::json jp;
    for (const auto & [name, s] : metrics) jp[name] = {{"mean", s.mean}, {"std", s.std}};
    std::size_t pairs = 0;
    for (const auto & r : rows) pairs += r.phase == phase;
    jp["pairs"] = pairs;
    j["phase" + std::to_string(phase)] = jp;
  }
  return j.dump(2) + "\n";
}

EvalReport evaluate(const fs::path & run_dir, const data::DatasetManifest & manifest)
{
  if (!fs::is_directory(run_dir)) throw DataError("run directory missing: " + run_dir.string());
  EvalReport report;
  for (int phase = 1; phase <= 3; ++phase) {
    const fs::path dir = run_dir / ("phase" + std::to_string(phase));
    if (!fs::is_directory(dir)) continue;

    std::vector<std::pair<std::int64_t, fs::path>> recon_files;
    for (const auto & e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".png") continue;
      try {
        recon_files.emplace_back(std::stoll(e.path().stem().string()), e.path());
      } catch (const std::exception &) {
        throw DataError("output name is not a timestamp: " + e.path().string());
      }
    }
    if (recon_files.empty()) continue;
    std::sort(recon_files.begin(), recon_files.end());

    std::vector<const data::Asset *> refs;
    for (const auto & kind : phase == 3 ? std::vector<std::string>{"hr"} : std::vector<std::string>{"aps", "lr"})
      for (const auto * a : manifest.of_kind(kind))
        if (a->t_us) refs.push_back(a);
    if (refs.empty()) continue;
    std::stable_sort(refs.begin(), refs.end(), [](const auto * a, const auto * b) { return *a->t_us < *b->t_us; });

    std::vector<TimedImage> recon, aps;
    for (const auto & [t, p] : recon_files) recon.push_back({t, p.filename().string()});
    for (const auto * a : refs) aps.push_back({*a->t_us, a->path});
    for (const auto & pr : match_by_timestamp(recon, aps)) {
      const Tensor r = io::read_png(recon_files[pr.recon].second);
      const Tensor g = io::read_png(manifest.resolve(*refs[pr.aps]));
      if (!r.same_shape(g))
        throw DataError("phase " + std::to_string(phase) + " output " + recon[pr.recon].id + " is " +
                        shape_string(r.shape) + " but reference is " + shape_string(g.shape));
      report.rows.push_back({phase, recon[pr.recon].id, aps[pr.aps].id, pr.dt_us, psnr(r, g), ssim(r, g)});
    }
  }
  if (report.rows.empty()) throw DataError("no phase outputs to evaluate in " + run_dir.string());
  report.recompute_aggregates();
  io::write_text_atomic(run_dir / "report.csv", report.to_csv());
  io::write_text_atomic(run_dir / "report.json", report.to_json());
  return report;
}

}  // namespace eventsr::metrics
