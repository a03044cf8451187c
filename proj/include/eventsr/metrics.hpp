#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "eventsr/dataset.hpp"
#include "eventsr/tensor.hpp"

namespace eventsr::metrics
{

/// Reported for identical images.
inline constexpr double kPsnrCap = 99.0;

/// 10·log10(1/MSE) for images in [0,1].
double psnr(const Tensor & a, const Tensor & b);

/// Mean SSIM over all window x window uniform windows (stride 1), population
/// statistics, C1 = (k1)^2, C2 = (k2)^2 for unit dynamic range.
double ssim(const Tensor & a, const Tensor & b, int window = 8, double k1 = 0.01, double k2 = 0.03);

/// Pluggable full-reference metrics (name -> function). psnr and ssim are
/// registered by default; others may be added by callers.
using MetricFn = std::function<double(const Tensor &, const Tensor &)>;
std::map<std::string, MetricFn> & metric_registry();

struct TimedImage
{
  std::int64_t t = 0;
  std::string id;
};

struct Pairing
{
  std::size_t recon = 0;
  std::size_t aps = 0;
  std::int64_t dt_us = 0;  // |t_recon - t_aps|
};

/// Each reconstruction paired with the APS frame of smallest |dt|; ties go
/// to the earlier APS frame. Both lists must be sorted by t.
std::vector<Pairing> match_by_timestamp(const std::vector<TimedImage> & recon, const std::vector<TimedImage> & aps);

struct PairRow
{
  int phase = 0;
  std::string recon_id;
  std::string aps_id;
  std::int64_t dt_us = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct Summary
{
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

Summary summarize(const std::vector<double> & values);

struct EvalReport
{
  std::vector<PairRow> rows;
  /// phase -> metric -> summary; recomputable from rows.
  std::map<int, std::map<std::string, Summary>> aggregates;

  void recompute_aggregates();
  std::string to_csv() const;
  std::string to_json() const;
};

/// Pairs <run_dir>/phase{1,2,3}/<t_end>.png outputs with the manifest's
/// frames (aps/lr for phases 1-2, hr for phase 3) and writes report.csv and
/// report.json into run_dir.
EvalReport evaluate(const std::filesystem::path & run_dir, const data::DatasetManifest & manifest);

}  // namespace eventsr::metrics
