#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eventsr/config.hpp"
#include "eventsr/event_sim.hpp"
#include "eventsr/io.hpp"
#include "eventsr/trainer.hpp"
#include "oracles.hpp"

using namespace eventsr;
namespace fs = std::filesystem;

namespace
{

const fs::path kRoot = fs::temp_directory_path() / "eventsr_test_cli";

struct Result
{
  int code = 0;
  std::string err;
};

Result run(const std::string & args)
{
  const fs::path log = kRoot / "stderr.txt";
  fs::create_directories(kRoot);
  const std::string cmd = std::string(EVENTSR_BIN) + " " + args + " > /dev/null 2> " + log.string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string p(const fs::path & path) { return path.string(); }

/// 16x16 synthetic videos simulated into ESIM-RW / ESIM-SR2 datasets.
void ensure_data()
{
  static bool done = false;
  if (done) return;
  fs::remove_all(kRoot);
  REQUIRE(run("synth --out " + p(kRoot / "v_rw") + " --width 16 --height 16 --frames 12 --seed 1").code == 0);
  REQUIRE(run("synth --out " + p(kRoot / "v_sr") + " --width 64 --height 64 --frames 12 --seed 2").code == 0);
  REQUIRE(run("simulate --video " + p(kRoot / "v_rw") + " --role ESIM-RW --out " + p(kRoot / "rw")).code == 0);
  REQUIRE(run("simulate --video " + p(kRoot / "v_sr") + " --role ESIM-SR2 --out " + p(kRoot / "sr2")).code == 0);
  done = true;
}

const std::string kSmall = " --set n_e=100 --set channels=4 --set gen_blocks=1 --set feedback_blocks=1 ";

}  // namespace

TEST_CASE("simulate: constant video gives a header-only EVT1")
{
  fs::create_directories(kRoot);
  sim::VideoSequence v{{Tensor::image(8, 8, 0.3), Tensor::image(8, 8, 0.3)}, {0, 1000}};
  sim::save_video_dir(kRoot / "v_const", v);
  REQUIRE(run("simulate --video " + p(kRoot / "v_const") + " --role ESIM-RW --out " + p(kRoot / "const")).code == 0);
  const auto bytes = io::read_file(kRoot / "const" / "events_000.evt1");
  CHECK(bytes.size() == 16);
  CHECK(fs::exists(kRoot / "const" / "config.effective.txt"));
}

TEST_CASE("simulate: ramp video count equals the oracle and reruns are identical")
{
  sim::VideoSequence v;
  for (int k = 0; k < 4; ++k) {
    Tensor f = Tensor::image(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) f.at(0, 0, y, x) = 0.05 + 0.1 * k + 0.01 * x + 0.005 * y;
    v.frames.push_back(f);
    v.timestamps.push_back(k * 1000);
  }
  sim::save_video_dir(kRoot / "v_ramp", v);
  // Frames pass through 16-bit PNG; the oracle sees the same quantized frames.
  const auto loaded = sim::load_video_dir(kRoot / "v_ramp");
  const auto want = oracle::simulate(loaded, 0.15, 1e-3);
  REQUIRE(run("simulate --video " + p(kRoot / "v_ramp") + " --seed 3 --role ESIM-RW --out " + p(kRoot / "ramp1")).code == 0);
  REQUIRE(run("simulate --video " + p(kRoot / "v_ramp") + " --seed 3 --role ESIM-RW --out " + p(kRoot / "ramp2")).code == 0);
  const auto s = io::read_evt1(kRoot / "ramp1" / "events_000.evt1");
  CHECK(s.size() == want.size());
  CHECK(s.size() > 0);
  for (const auto & e : fs::directory_iterator(kRoot / "ramp1"))
    if (e.path().filename() != "manifest.json")
      if (e.is_regular_file()) CHECK(io::read_file(e.path()) == io::read_file(kRoot / "ramp2" / e.path().filename()));
}

TEST_CASE("stack: dims, defaults and shortfall")
{
  ensure_data();
  const auto ev = p(kRoot / "rw" / "events_000.evt1");
  const auto r = run("stack --events " + ev + " --out " + p(kRoot / "stacks_default"));
  CHECK(r.code == 2);
  CHECK(r.err.find("short by") != std::string::npos);
  const Config frozen = Config::load(kRoot / "stacks_default" / "config.effective.txt");
  CHECK(frozen.train.events_per_frame == 10000);
  CHECK(frozen.train.stack_frames == 3);

  REQUIRE(run("stack --events " + ev + " --ne 100 --n 3 --out " + p(kRoot / "stacks")).code == 0);
  const auto stream = io::read_evt1(ev);
  std::size_t count = 0;
  for (const auto & e : fs::directory_iterator(kRoot / "stacks")) {
    if (e.path().extension() != ".tns") continue;
    ++count;
    CHECK(io::read_tns1(e.path()).shape == std::vector<int>{3, 16, 16});
  }
  CHECK(count == stream.size() / 300);
}

TEST_CASE("train, reconstruct, superresolve, eval")
{
  ensure_data();
  const std::string data = " --data " + p(kRoot / "rw" / "manifest.json") + " --data " + p(kRoot / "sr2" / "manifest.json");
  CHECK(run("train --phase 2" + kSmall + data + " --out " + p(kRoot / "bad")).code == 1);
  CHECK(run("train --set bogus=1 --out " + p(kRoot / "bad")).code == 1);

  REQUIRE(run("train --phase 1 --iters 0 --seed 4" + kSmall + data + " --out " + p(kRoot / "p0")).code == 0);
  const auto zero = train::load_checkpoint(kRoot / "p0");
  Config c = Config::load(kRoot / "p0" / "config.effective.txt");
  CHECK(c.train.weights.alpha == 0.6);
  CHECK(c.train.weights.lambda3 == 0.5);
  const auto init = train::init_state(c.train);
  for (const auto & [name, prm] : init.nets) CHECK(zero.net(name) == prm);

  REQUIRE(run("train --phase 1 --iters 3" + kSmall + data + " --out " + p(kRoot / "p1")).code == 0);
  CHECK(fs::exists(kRoot / "p1" / "loss_log.csv"));
  REQUIRE(run("train --phase 2 --iters 2" + kSmall + data + " --init " + p(kRoot / "p1") + " --out " + p(kRoot / "p2")).code == 0);
  REQUIRE(run("train --phase 3 --iters 2" + kSmall + data + " --init " + p(kRoot / "p2") + " --out " + p(kRoot / "p3")).code == 0);
  const Config c3 = Config::load(kRoot / "p3" / "config.effective.txt");
  CHECK(c3.train.adv_mode == AdvMode::Relativistic);
  CHECK(c3.train.weights.lambda3 == 3.0);

  const auto ev = p(kRoot / "sr2" / "events_000.evt1");
  const auto r = run("superresolve --checkpoint " + p(kRoot / "p1") + " --events " + ev + " --out " + p(kRoot / "run_bad"));
  CHECK(r.code == 1);
  CHECK(r.err.find("checkpoint lacks G_s") != std::string::npos);

  REQUIRE(run("reconstruct --checkpoint " + p(kRoot / "p3") + " --events " + ev + " --out " + p(kRoot / "run")).code == 0);
  REQUIRE(run("superresolve --checkpoint " + p(kRoot / "p3") + " --events " + ev + " --out " + p(kRoot / "run")).code == 0);
  const auto stream = io::read_evt1(ev);
  std::size_t n1 = 0, n3 = 0;
  for (const auto & e : fs::directory_iterator(kRoot / "run" / "phase1")) {
    ++n1;
    CHECK(io::read_png(e.path()).h() == 16);
  }
  for (const auto & e : fs::directory_iterator(kRoot / "run" / "phase3")) {
    ++n3;
    CHECK(io::read_png(e.path()).h() == 64);
  }
  CHECK(n1 == stream.size() / 300);
  CHECK(n3 == n1);

  REQUIRE(run("eval --run " + p(kRoot / "run") + " --manifest " + p(kRoot / "sr2" / "manifest.json")).code == 0);
  CHECK(fs::exists(kRoot / "run" / "report.csv"));
  CHECK(fs::exists(kRoot / "run" / "report.json"));
  fs::create_directories(kRoot / "empty_run");
  CHECK(run("eval --run " + p(kRoot / "empty_run") + " --manifest " + p(kRoot / "sr2" / "manifest.json")).code == 2);
}

TEST_CASE("usage errors")
{
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("--help").code == 0);
}
