// eventsr: simulate event data, build datasets, train the three phases,
// run inference and evaluate.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "eventsr/config.hpp"
#include "eventsr/dataset.hpp"
#include "eventsr/error.hpp"
#include "eventsr/event_core.hpp"
#include "eventsr/event_sim.hpp"
#include "eventsr/io.hpp"
#include "eventsr/metrics.hpp"
#include "eventsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace eventsr;

namespace
{

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Options shared by every subcommand.
struct Common
{
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App * cmd, Common & c, bool out_required = true)
{
  cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "random seed");
  auto * o = cmd->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
}

/// Config file, then --set overrides, then dedicated flags.
Config effective_config(const Common & c, std::vector<std::string> extra = {})
{
  std::vector<std::string> overrides = c.sets;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  if (c.config.empty()) return Config::parse("", overrides);
  return Config::load(c.config, overrides);
}

void freeze_config(const fs::path & out, const Config & cfg)
{
  fs::create_directories(out);
  io::write_text_atomic(out / "config.effective.txt", cfg.to_text());
}

std::string stamp_name(std::int64_t t, const char * ext)
{
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%012lld%s", static_cast<long long>(t), ext);
  return buf;
}

int cmd_synth(const Common & c, int width, int height, int frames)
{
  const Config cfg = effective_config(c);
  freeze_config(c.out, cfg);
  const auto video = sim::synth_video(width, height, frames, cfg.frame_dt_us, cfg.train.seed);
  sim::save_video_dir(c.out, video);
  return kOk;
}

int cmd_simulate(const Common & c, const std::vector<std::string> & videos, const std::string & role, bool csv)
{
  Config cfg = effective_config(c);
  cfg.dataset.write_csv = csv;
  freeze_config(c.out, cfg);
  std::vector<sim::VideoSequence> sources;
  for (const auto & v : videos) sources.push_back(sim::load_video_dir(v, cfg.frame_dt_us));
  const auto m = data::build_dataset(sources, data::parse_role(role), cfg.dataset, c.out);
  std::size_t events = 0;
  for (const auto * a : m.of_kind("events")) events += io::read_evt1(m.resolve(*a)).size();
  std::cout << "role " << role << ": " << m.assets.size() << " assets, " << events << " events\n";
  return kOk;
}

int cmd_stack(const Common & c, const std::string & events_path, std::optional<std::size_t> ne, std::optional<int> n,
              std::optional<std::int64_t> window_us, std::int64_t t0)
{
  std::vector<std::string> extra;
  if (ne) extra.push_back("n_e=" + std::to_string(*ne));
  if (n) extra.push_back("n_frames=" + std::to_string(*n));
  const Config cfg = effective_config(c, extra);
  freeze_config(c.out, cfg);
  const auto & t = cfg.train;
  const EventStream stream = io::read_evt1(events_path);
  std::vector<EventStack> stacks;
  if (window_us) {
    const std::int64_t end = stream.empty() ? t0 : stream.events.back().t;
    RenderOptions ro{t.render_clip};
    for (std::int64_t s = t0; s <= end; s += *window_us * t.stack_frames)
      stacks.push_back(stack_by_time(stream, *window_us, t.stack_frames, s, ro));
  } else {
    StackOptions so;
    so.render.clip = t.render_clip;
    so.cumulative = t.cumulative;
    const std::size_t needed = t.events_per_frame * static_cast<std::size_t>(t.stack_frames);
    if (stream.size() < needed) throw InsufficientEventsError(needed, stream.size());
    stacks = filter_by_focus(stack_all(stream, t.events_per_frame, t.stack_frames, t.stack_stride, so),
                             t.focus_min_variance);
  }
  fs::create_directories(c.out);
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    Tensor frames = stacks[i].frames;
    frames.shape = {stacks[i].n, stacks[i].height(), stacks[i].width()};
    char name[64];
    std::snprintf(name, sizeof(name), "stack_%05zu_%012lld.tns", i, static_cast<long long>(stacks[i].t_span.second));
    io::write_tns1(fs::path(c.out) / name, frames);
  }
  std::cout << stacks.size() << " stacks of shape (" << t.stack_frames << "," << stream.height << "," << stream.width
            << ")\n";
  return kOk;
}

int cmd_train(const Common & c, std::optional<int> phase, const std::vector<std::string> & data,
              const std::string & init, std::optional<int> iters, std::optional<int> scale)
{
  std::vector<std::string> extra;
  if (phase) extra.push_back("phase=" + std::to_string(*phase));
  if (iters) extra.push_back("iters=" + std::to_string(*iters));
  if (scale) extra.push_back("scale=" + std::to_string(*scale));
  if (!data.empty()) {
    std::string joined;
    for (const auto & d : data) joined += (joined.empty() ? "" : ",") + d;
    extra.push_back("data=" + joined);
  }
  const Config cfg = effective_config(c, extra);
  freeze_config(c.out, cfg);
  std::optional<fs::path> init_path;
  if (!init.empty()) init_path = init;
  train::train_phase(cfg, init_path, c.out, true);
  // The checkpoint replaces the directory wholesale.
  freeze_config(c.out, cfg);
  return kOk;
}

int cmd_clean_aps(const Common & c, const std::string & checkpoint, const std::string & manifest_path)
{
  const Config cfg = effective_config(c);
  freeze_config(c.out, cfg);
  const auto state = train::load_checkpoint(checkpoint);
  auto m = data::load_manifest(manifest_path);
  const auto aps = m.of_kind("aps");
  if (aps.empty()) throw DataError("manifest has no aps assets to clean");
  std::vector<Tensor> images;
  for (const auto * a : aps) images.push_back(io::read_png(m.resolve(*a)));
  const auto clean = train::clean_aps(images, state.net("G_r"));

  const fs::path out(c.out);
  data::DatasetManifest cm = m;
  for (auto & a : cm.assets) a.path = fs::absolute(m.resolve(a)).lexically_normal().string();
  for (std::size_t i = 0; i < aps.size(); ++i) {
    const std::string rel = "clean/" + fs::path(aps[i]->path).stem().string() + ".png";
    io::write_png(out / rel, clean[i]);
    cm.assets.push_back({"clean_aps", rel, aps[i]->t_us, aps[i]->source});
  }
  data::save_manifest(out / "manifest.json", cm);
  std::cout << clean.size() << " clean APS images\n";
  return kOk;
}

int cmd_infer(const Common & c, const std::string & checkpoint, const std::string & events_path, int phase,
              std::optional<std::size_t> ne, std::optional<int> n)
{
  const auto state = train::load_checkpoint(checkpoint);
  if (phase == 3 && !state.has("G_s")) throw UsageError("checkpoint lacks G_s");
  if (state.phase < phase)
    throw UsageError("checkpoint is phase " + std::to_string(state.phase) + ", cannot produce phase " +
                     std::to_string(phase) + " outputs");
  // Stacking parameters default to the ones the checkpoint was trained with.
  const auto trained = Config::load(fs::path(checkpoint) / "config.txt").to_map();
  std::string text;
  for (const char * key : {"n_e", "n_frames", "stack_stride", "render_clip", "cumulative"})
    text += std::string(key) + "=" + trained.at(key) + "\n";
  if (!c.config.empty()) {
    const auto bytes = io::read_file(c.config);
    text.append(bytes.begin(), bytes.end());
  }
  std::vector<std::string> overrides = c.sets;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (ne) overrides.push_back("n_e=" + std::to_string(*ne));
  if (n) overrides.push_back("n_frames=" + std::to_string(*n));
  const Config cfg = Config::parse(text, overrides);
  freeze_config(c.out, cfg);
  const auto & t = cfg.train;
  const EventStream stream = io::read_evt1(events_path);
  StackOptions so;
  so.render.clip = t.render_clip;
  so.cumulative = t.cumulative;
  const auto stacks = stack_all(stream, t.events_per_frame, t.stack_frames, t.stack_stride, so);
  if (stacks.empty())
    throw InsufficientEventsError(t.events_per_frame * static_cast<std::size_t>(t.stack_frames), stream.size());
  const fs::path dir = fs::path(c.out) / ("phase" + std::to_string(phase));
  fs::create_directories(dir);
  for (const auto & s : stacks) {
    const Tensor img = train::run_chain(state, s.frames, phase);
    io::write_png(dir / stamp_name(s.t_span.second, ".png"), img);
  }
  std::cout << stacks.size() << " phase-" << phase << " outputs\n";
  return kOk;
}

int cmd_eval(const Common & c, const std::string & run, const std::string & manifest_path)
{
  const Config cfg = effective_config(c);
  const fs::path out = c.out.empty() ? fs::path(run) : fs::path(c.out);
  freeze_config(out, cfg);
  const auto m = data::load_manifest(manifest_path);
  const auto report = metrics::evaluate(run, m);
  if (out != fs::path(run)) {
    io::write_text_atomic(out / "report.csv", report.to_csv());
    io::write_text_atomic(out / "report.json", report.to_json());
  }
  for (const auto & [phase, agg] : report.aggregates)
    std::cout << "phase " << phase << ": PSNR " << agg.at("psnr").mean << " +- " << agg.at("psnr").std << " dB, SSIM "
              << agg.at("ssim").mean << " +- " << agg.at("ssim").std << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Event-based reconstruction, restoration and super-resolution"};
  app.require_subcommand(1);

  Common common;
  int width = 32, height = 32, frames = 40;
  std::vector<std::string> videos, data;
  std::string role = "ESIM-RW", events, init, checkpoint, manifest, run;
  bool csv = false;
  std::optional<std::size_t> ne;
  std::optional<int> n, phase, iters, scale;
  std::optional<std::int64_t> window_us;
  std::int64_t t0 = 0;
  int recon_phase = 1;

  auto * synth = app.add_subcommand("synth", "write a procedural video as PNG frames");
  add_common(synth, common);
  synth->add_option("--width", width)->check(CLI::PositiveNumber);
  synth->add_option("--height", height)->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames)->check(CLI::Range(2, 100000));

  auto * simulate = app.add_subcommand("simulate", "simulate events from video directories and build a dataset");
  add_common(simulate, common);
  simulate->add_option("--video", videos, "directory of PNG frames (repeatable)")->required();
  simulate->add_option("--role", role, "dataset role: ESIM-data, ESIM-RW, ESIM-SR1, ESIM-SR2, Ev-RW, SR-RW");
  simulate->add_flag("--csv", csv, "also write t,x,y,p CSV event files");

  auto * stack = app.add_subcommand("stack", "embed an EVT1 event file into TNS1 stacks");
  add_common(stack, common);
  stack->add_option("--events", events)->required()->check(CLI::ExistingFile);
  stack->add_option("--ne", ne, "events per frame (default 10000)");
  stack->add_option("--n", n, "frames per stack (default 3)");
  stack->add_option("--window-us", window_us, "stack by fixed time windows instead of event count");
  stack->add_option("--t0", t0, "start time for time windows");

  auto * trn = app.add_subcommand("train", "train one phase");
  add_common(trn, common);
  trn->add_option("--phase", phase)->check(CLI::Range(1, 3));
  trn->add_option("--data", data, "dataset manifest (repeatable)");
  trn->add_option("--init", init, "checkpoint of the previous phase");
  trn->add_option("--iters", iters)->check(CLI::NonNegativeNumber);
  trn->add_option("--scale", scale);

  auto * clean = app.add_subcommand("clean-aps", "denoise APS frames with a phase-1 generator");
  add_common(clean, common);
  clean->add_option("--checkpoint,--init", checkpoint)->required();
  clean->add_option("--data", manifest, "manifest holding aps assets")->required()->check(CLI::ExistingFile);

  auto * recon = app.add_subcommand("reconstruct", "phase-1 (or --phase 2) images from events");
  add_common(recon, common);
  recon->add_option("--checkpoint,--init", checkpoint)->required();
  recon->add_option("--events", events)->required()->check(CLI::ExistingFile);
  recon->add_option("--phase", recon_phase)->check(CLI::Range(1, 2));
  recon->add_option("--ne", ne);
  recon->add_option("--n", n);

  auto * sr = app.add_subcommand("superresolve", "phase-3 super-resolved images from events");
  add_common(sr, common);
  sr->add_option("--checkpoint,--init", checkpoint)->required();
  sr->add_option("--events", events)->required()->check(CLI::ExistingFile);
  sr->add_option("--ne", ne);
  sr->add_option("--n", n);

  auto * ev = app.add_subcommand("eval", "pair outputs with reference frames and report PSNR/SSIM");
  add_common(ev, common, false);
  ev->add_option("--run", run, "run directory holding phase1/2/3 outputs")->required();
  ev->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(common, width, height, frames);
    if (*simulate) return cmd_simulate(common, videos, role, csv);
    if (*stack) return cmd_stack(common, events, ne, n, window_us, t0);
    if (*trn) return cmd_train(common, phase, data, init, iters, scale);
    if (*clean) return cmd_clean_aps(common, checkpoint, manifest);
    if (*recon) return cmd_infer(common, checkpoint, events, recon_phase, ne, n);
    if (*sr) return cmd_infer(common, checkpoint, events, 3, ne, n);
    if (*ev) return cmd_eval(common, run, manifest);
  } catch (const UsageError & e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError & e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
