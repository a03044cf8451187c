#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"
#include "eventsr/metrics.hpp"
#include "oracles.hpp"

using namespace eventsr;
using namespace eventsr::metrics;
namespace fs = std::filesystem;

TEST_CASE("psnr")
{
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({1, 1, 16, 16}, rng, 0.0, 0.8);
  Tensor b = a;
  for (auto & v : b.data) v += 0.1;
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);
  CHECK(psnr(a, a) == kPsnrCap);

  double last = 1e9;
  for (double sigma : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    std::mt19937_64 nrng(7);
    std::normal_distribution<double> n01(0.0, 1.0);
    Tensor noisy = a;
    for (auto & v : noisy.data) v += sigma * n01(nrng);
    const double p = psnr(a, noisy);
    CHECK(p < last);
    last = p;
  }
  CHECK_THROWS(psnr(a, Tensor::image(4, 4)));
}

TEST_CASE("ssim")
{
  std::mt19937_64 rng(2);
  const Tensor a = oracle::random_tensor({1, 1, 20, 17}, rng);
  const Tensor b = oracle::random_tensor({1, 1, 20, 17}, rng);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);
  CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-8);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(std::abs(ssim(a, b)) <= 1.0);

  const double c1 = 1e-4;
  const double closed = (2 * 0.2 * 0.8 + c1) / (0.04 + 0.64 + c1);
  CHECK(ssim(Tensor::image(8, 8, 0.2), Tensor::image(8, 8, 0.8)) == doctest::Approx(closed).epsilon(1e-12));
  CHECK_THROWS(ssim(Tensor::image(4, 4), Tensor::image(4, 4)));
}

TEST_CASE("registry holds the built-in metrics and accepts new ones")
{
  auto & r = metric_registry();
  CHECK(r.count("psnr") == 1);
  CHECK(r.count("ssim") == 1);
  r["l1"] = [](const Tensor & a, const Tensor & b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.size());
  };
  CHECK(r.at("l1")(Tensor::image(2, 2, 0.0), Tensor::image(2, 2, 0.5)) == 0.5);
  r.erase("l1");
}

TEST_CASE("match_by_timestamp")
{
  const std::vector<TimedImage> aps{{0, "a"}, {12, "b"}};
  CHECK(match_by_timestamp({{10, "r"}}, aps)[0].aps == 1);
  CHECK(match_by_timestamp({{6, "r"}}, aps)[0].aps == 0);
  CHECK(match_by_timestamp({{6, "r"}}, aps)[0].dt_us == 6);
  CHECK_THROWS(match_by_timestamp({}, aps));
  CHECK_THROWS(match_by_timestamp({{1, "r"}}, {}));

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 20), val(0, 60);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::int64_t> rt(static_cast<std::size_t>(len(rng))), at(static_cast<std::size_t>(len(rng)));
    for (auto & t : rt) t = val(rng);
    for (auto & t : at) t = val(rng);
    std::sort(rt.begin(), rt.end());
    std::sort(at.begin(), at.end());
    std::vector<TimedImage> r, a;
    for (auto t : rt) r.push_back({t, ""});
    for (auto t : at) a.push_back({t, ""});
    const auto got = match_by_timestamp(r, a);
    const auto want = oracle::match(rt, at);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].aps == want[i]);
  }
}

TEST_CASE("summaries")
{
  const auto s = summarize({1.0, 3.0});
  CHECK(s.mean == 2.0);
  CHECK(s.std == 1.0);
  CHECK(summarize({5.0}).std == 0.0);
}

TEST_CASE("evaluate writes reports that recompute from rows")
{
  const fs::path root = fs::temp_directory_path() / "eventsr_test_eval";
  fs::remove_all(root);
  std::mt19937_64 rng(4);
  data::DatasetManifest m;
  m.role = data::Role::EsimData;
  m.width = m.height = 16;
  std::vector<Tensor> refs;
  for (int k = 0; k < 3; ++k) {
    refs.push_back(oracle::random_tensor({1, 1, 16, 16}, rng));
    const std::string rel = "aps/" + std::to_string(k) + ".png";
    io::write_png(root / "data" / rel, refs.back());
    m.assets.push_back({"aps", rel, k * 1000, 0});
  }
  data::save_manifest(root / "data" / "manifest.json", m);

  CHECK_THROWS_AS(evaluate(root / "run_empty", m), DataError);

  io::write_png(root / "run" / "phase1" / "000000000100.png", refs[0]);
  Tensor off = refs[2];
  for (auto & v : off.data) v = std::clamp(v + 0.05, 0.0, 1.0);
  io::write_png(root / "run" / "phase1" / "000000001900.png", off);
  const auto report = evaluate(root / "run", m);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].psnr_db == kPsnrCap);
  CHECK(report.rows[0].dt_us == 100);
  CHECK(report.rows[1].aps_id.find("2.png") != std::string::npos);

  EvalReport copy = report;
  copy.recompute_aggregates();
  const auto & agg = report.aggregates.at(1);
  CHECK(copy.aggregates.at(1).at("psnr").mean == agg.at("psnr").mean);
  const double m2 = (report.rows[0].psnr_db + report.rows[1].psnr_db) / 2;
  CHECK(agg.at("psnr").mean == doctest::Approx(m2).epsilon(1e-14));
  CHECK(agg.at("psnr").std == doctest::Approx(std::abs(report.rows[0].psnr_db - m2)).epsilon(1e-12));

  CHECK(fs::exists(root / "run" / "report.csv"));
  const auto j = nlohmann::json::parse(io::read_file(root / "run" / "report.json"));
  CHECK(j.at("phase1").at("psnr").at("mean").get<double>() == agg.at("psnr").mean);
  const auto b = io::read_file(root / "run" / "report.csv");
  const std::string csv(b.begin(), b.end());
  CHECK(csv.rfind("phase,recon_id,aps_id,dt_us,psnr_db,ssim\n", 0) == 0);
}
