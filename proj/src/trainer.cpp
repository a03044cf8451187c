#include "eventsr/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "eventsr/dataset.hpp"
#include "eventsr/error.hpp"
#include "eventsr/event_core.hpp"
#include "eventsr/event_sim.hpp"
#include "eventsr/io.hpp"

namespace eventsr::train
{

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

const std::vector<std::string> kAllNetworks{"G_r", "G_d", "G_s", "D_r", "D_d", "D_s", "F_r", "F_d", "F_s"};

std::vector<std::string> generator_names(int phase)
{
  std::vector<std::string> g{"G_r"};
  if (phase >= 2) g.push_back("G_d");
  if (phase >= 3) g.push_back("G_s");
  return g;
}

ag::Var chain(const TrainState & state, const std::map<std::string, nets::ParamVars> & vars, ag::Var x, int upto)
{
  for (const auto & name : generator_names(upto)) x = nets::forward(state.net(name).spec, vars.at(name), x);
  return x;
}

void update_network(TrainState & state, const std::string & name, const nets::ParamVars & vars, double lr,
                    std::int64_t t, const PhaseConfig & cfg)
{
  auto & params = state.nets.at(name).arrays;
  auto & mom = state.moments.at(name);
  for (auto & [array, value] : params) {
    adam_update(value, mom.m.at(array), mom.v.at(array), vars.at(array).grad(), lr, t, cfg.beta1, cfg.beta2,
                cfg.adam_eps);
  }
}

std::string snapshot(const TrainState & state, const LossRecord & r)
{
  std::ostringstream os;
  os << "non-finite loss at step " << r.step << " (phase " << state.phase << "): adv=" << r.adv << " sim=" << r.sim
     << " id=" << r.id << " var=" << r.var << " d_loss=" << r.d_loss << "; non-finite params in:";
  bool any = false;
  for (const auto & [name, p] : state.nets)
    if (!p.all_finite()) {
      os << ' ' << name;
      any = true;
    }
  if (!any) os << " none";
  return os.str();
}

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Moments Moments::zeros_like(const nets::Params & p)
{
  Moments m;
  for (const auto & [name, t] : p.arrays) {
    m.m.emplace(name, Tensor(t.shape, 0.0));
    m.v.emplace(name, Tensor(t.shape, 0.0));
  }
  return m;
}

const nets::Params & TrainState::net(const std::string & name) const
{
  auto it = nets.find(name);
  if (it == nets.end()) throw UsageError("checkpoint lacks " + name);
  return it->second;
}

std::string discriminator_name(int phase) { return phase == 1 ? "D_r" : phase == 2 ? "D_d" : "D_s"; }
std::string feedback_name(int phase) { return phase == 1 ? "F_r" : phase == 2 ? "F_d" : "F_s"; }

std::vector<std::string> new_networks(int phase)
{
  const std::string g = phase == 1 ? "G_r" : phase == 2 ? "G_d" : "G_s";
  return {g, discriminator_name(phase), feedback_name(phase)};
}

nets::NetSpec network_spec(const std::string & name, const PhaseConfig & cfg)
{
  nets::NetSpec s;
  if (name == "G_r") s = nets::generator_rd_spec(cfg.stack_frames);
  else if (name == "G_d") s = nets::generator_rd_spec(1);
  else if (name == "G_s") s = nets::generator_s_spec(cfg.scale);
  else if (name[0] == 'D') s = nets::discriminator_spec();
  else if (name == "F_s") s = nets::feedback_s_spec(cfg.stack_frames, cfg.scale);
  else if (name == "F_r" || name == "F_d") s = nets::feedback_spec(cfg.stack_frames);
  else throw std::invalid_argument("unknown network " + name);
  s.channels = cfg.channels;
  if (s.kind == nets::NetKind::GeneratorRD || s.kind == nets::NetKind::GeneratorS) s.blocks = cfg.gen_blocks;
  if (s.kind == nets::NetKind::Feedback || s.kind == nets::NetKind::FeedbackS) s.blocks = cfg.feedback_blocks;
  return s;
}

std::uint64_t network_seed(const std::string & name, const PhaseConfig & cfg)
{
  const auto it = std::find(kAllNetworks.begin(), kAllNetworks.end(), name);
  return cfg.seed * 1000 + static_cast<std::uint64_t>(it - kAllNetworks.begin()) + 1;
}

TrainState init_state(const PhaseConfig & cfg, const TrainState * previous)
{
  cfg.validate();
  TrainState s;
  s.phase = cfg.phase;
  if (cfg.phase > 1) {
    if (!previous) throw UsageError("phase " + std::to_string(cfg.phase) + " requires a phase " +
                                    std::to_string(cfg.phase - 1) + " checkpoint");
    if (previous->phase != cfg.phase - 1)
      throw UsageError("phase " + std::to_string(cfg.phase) + " needs a phase " + std::to_string(cfg.phase - 1) +
                       " checkpoint, got phase " + std::to_string(previous->phase));
    for (const auto & g : generator_names(cfg.phase - 1)) s.nets.emplace(g, previous->net(g));
  }
  for (const auto & name : new_networks(cfg.phase))
    s.nets.emplace(name, nets::build(network_spec(name, cfg), network_seed(name, cfg)));
  for (const auto & [name, p] : s.nets) s.moments.emplace(name, Moments::zeros_like(p));
  return s;
}

losses::FeatureExtractor make_feature_extractor(const PhaseConfig & cfg)
{
  auto phi = losses::FeatureExtractor::standard(cfg.stack_frames, cfg.feature_seed);
  return losses::FeatureExtractor(phi.layers(), cfg.feature_layer);
}

void adam_update(Tensor & param, Tensor & m, Tensor & v, const Tensor & grad, double lr, std::int64_t t,
                 double beta1, double beta2, double eps)
{
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v))
    throw std::invalid_argument("adam_update: shape mismatch");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.data[i];
    m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
    v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
    const double mhat = m.data[i] / c1;
    const double vhat = v.data[i] / c2;
    param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

std::pair<TrainState, LossRecord> train_step(TrainState state, const Batch & batch, const PhaseConfig & cfg,
                                             const losses::FeatureExtractor & phi)
{
  const int phase = state.phase;
  if (cfg.phase != phase) throw UsageError("config phase does not match train state");
  const Tensor & st = batch.stacks;
  const Tensor & tg = batch.targets;
  if (st.rank() != 4 || tg.rank() != 4 || st.n() != tg.n() || tg.c() != 1 || !batch.identity_inputs.same_shape(
        phase == 3 ? Tensor({tg.n(), 1, tg.h() / cfg.scale, tg.w() / cfg.scale}) : tg))
    throw DataError("batch shapes do not match the phase contract");

  const std::int64_t t = state.step + 1;
  const double lr = cfg.lr_at(state.step);
  const std::string dname = discriminator_name(phase);
  const std::string fname = feedback_name(phase);
  const bool relativistic = cfg.adv_mode == AdvMode::Relativistic;
  const auto gens = generator_names(phase);
  LossRecord rec;
  rec.step = t;

  const ag::Var stacks(st);
  const ag::Var targets(tg);

  if (cfg.use_discriminator) {
    std::map<std::string, nets::ParamVars> frozen;
    for (const auto & g : gens) frozen.emplace(g, nets::bind(state.net(g), false));
    const ag::Var fake = chain(state, frozen, stacks, phase);
    const auto & dspec = state.net(dname).spec;
    const nets::ParamVars dv = nets::bind(state.net(dname), true);
    const ag::Var c_real = nets::forward(dspec, dv, targets);
    const ag::Var c_fake = nets::forward(dspec, dv, fake);
    const ag::Var d_loss = relativistic ? losses::diff::relativistic_discriminator(c_real, c_fake)
                                        : losses::diff::adversarial_discriminator_logits(c_real, c_fake);
    rec.d_loss = d_loss.value().data[0];
    if (!std::isfinite(rec.d_loss)) throw NumericalError(snapshot(state, rec));
    ag::backward(d_loss);
    update_network(state, dname, dv, lr, t, cfg);
  }

  std::map<std::string, nets::ParamVars> gv;
  for (const auto & g : gens) gv.emplace(g, nets::bind(state.net(g), true));
  const nets::ParamVars fv = nets::bind(state.net(fname), cfg.use_feedback);

  const ag::Var fake = chain(state, gv, stacks, phase);
  const ag::Var zero(Tensor::scalar(0.0));
  ag::Var adv = zero, sim = zero;
  if (cfg.use_discriminator) {
    const auto & dspec = state.net(dname).spec;
    const nets::ParamVars dv = nets::bind(state.net(dname), false);
    const ag::Var c_fake = nets::forward(dspec, dv, fake);
    adv = relativistic ? losses::diff::relativistic_generator(nets::forward(dspec, dv, targets), c_fake)
                       : losses::diff::adversarial_generator_logits(c_fake, cfg.gen_mode);
  }
  if (cfg.use_feedback) {
    const ag::Var rec_stack = nets::forward(state.net(fname).spec, fv, fake);
    sim = losses::diff::event_similarity(rec_stack, stacks, cfg.weights.alpha, phi);
  }
  const ag::Var id_in = ag::repeat_channels(ag::Var(batch.identity_inputs), cfg.stack_frames);
  const ag::Var id = losses::diff::identity(chain(state, gv, id_in, phase), targets);
  const ag::Var var = losses::diff::total_variation(fake);

  rec.adv = adv.value().data[0];
  rec.sim = sim.value().data[0];
  rec.id = id.value().data[0];
  rec.var = var.value().data[0];
  rec.total = losses::phase_total(rec.adv, rec.sim, rec.id, rec.var, cfg.weights);
  if (!std::isfinite(rec.total)) throw NumericalError(snapshot(state, rec));

  const ag::Var total = adv + ag::scale(sim, cfg.weights.lambda1) + ag::scale(id, cfg.weights.lambda2) +
                        ag::scale(var, cfg.weights.lambda3);
  ag::backward(total);
  for (const auto & g : gens) update_network(state, g, gv.at(g), lr, t, cfg);
  if (cfg.use_feedback) update_network(state, fname, fv, lr, t, cfg);

  for (const auto & [name, p] : state.nets)
    if (!p.all_finite()) throw NumericalError(snapshot(state, rec));

  state.step = t;
  state.history.push_back(rec);
  while (state.history.size() > TrainState::kHistoryCapacity) state.history.pop_front();
  return {std::move(state), rec};
}

Tensor run_chain(const TrainState & state, const Tensor & stacks, int upto)
{
  if (upto < 1 || upto > 3) throw UsageError("output phase must be 1, 2 or 3");
  std::map<std::string, nets::ParamVars> vars;
  for (const auto & g : generator_names(upto)) vars.emplace(g, nets::bind(state.net(g), false));
  return chain(state, vars, ag::Var(stacks), upto).value();
}

std::vector<Tensor> clean_aps(const std::vector<Tensor> & images, const nets::Params & g_r)
{
  if (g_r.spec.kind != nets::NetKind::GeneratorRD) throw UsageError("clean_aps needs a G_r generator");
  std::vector<Tensor> out;
  const nets::ParamVars vars = nets::bind(g_r, false);
  for (const auto & img : images) {
    if (img.rank() != 4 || img.c() != 1) throw DataError("clean_aps: APS images must be single-channel");
    const ag::Var x = ag::repeat_channels(ag::Var(img), g_r.spec.in_channels);
    out.push_back(nets::forward(g_r.spec, vars, x).value());
  }
  return out;
}

double total_end_to_end_loss(const std::array<LossRecord, 3> & per_phase)
{
  return per_phase[0].total + per_phase[1].total + per_phase[2].total;
}

Tensor apply_augment(const Tensor & t, const AugmentDraw & draw)
{
  if (t.rank() != 4) throw std::invalid_argument("apply_augment expects NCHW");
  Tensor cur = t;
  for (int r = 0; r < ((draw.rotation % 4) + 4) % 4; ++r) {
    const int h = cur.h(), w = cur.w();
    Tensor next({cur.n(), cur.c(), w, h});
    for (int n = 0; n < cur.n(); ++n)
      for (int c = 0; c < cur.c(); ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) next.at(n, c, w - 1 - x, y) = cur.at(n, c, y, x);
    cur = std::move(next);
  }
  if (draw.flip) {
    Tensor next(cur.shape);
    const int w = cur.w();
    for (int n = 0; n < cur.n(); ++n)
      for (int c = 0; c < cur.c(); ++c)
        for (int y = 0; y < cur.h(); ++y)
          for (int x = 0; x < w; ++x) next.at(n, c, y, w - 1 - x) = cur.at(n, c, y, x);
    cur = std::move(next);
  }
  return cur;
}

AugmentDraw draw_augment(std::mt19937_64 & rng)
{
  std::uniform_int_distribution<int> quarter(0, 3);
  std::uniform_int_distribution<int> coin(0, 1);
  AugmentDraw d;
  d.rotation = quarter(rng);
  d.flip = coin(rng) == 1;
  return d;
}

std::pair<Tensor, Tensor> augment(const Tensor & stack, const Tensor & image, std::mt19937_64 & rng, bool rotate)
{
  if (rotate && (stack.h() != stack.w() || image.h() != image.w()))
    throw DataError("rotation augmentation needs square inputs");
  AugmentDraw ds = draw_augment(rng);
  AugmentDraw di = draw_augment(rng);
  if (!rotate) ds.rotation = di.rotation = 0;
  return {apply_augment(stack, ds), apply_augment(image, di)};
}

PhaseData load_phase_data(const PhaseConfig & cfg)
{
  const int k = cfg.phase;
  const std::vector<std::string> target_kinds =
    k == 1 ? std::vector<std::string>{"aps", "lr"} : k == 2 ? std::vector<std::string>{"clean_aps", "lr"}
                                                            : std::vector<std::string>{"hr"};
  PhaseData d;
  int stack_h = 0, stack_w = 0;
  StackOptions so;
  so.render.clip = cfg.render_clip;
  so.cumulative = cfg.cumulative;
  for (const auto & path : cfg.data) {
    const auto m = data::load_manifest(path);
    if (!m.usage.phase(k)) continue;
    for (const auto * a : m.of_kind("events")) {
      const EventStream stream = io::read_evt1(m.resolve(*a));
      auto stacks = filter_by_focus(stack_all(stream, cfg.events_per_frame, cfg.stack_frames, cfg.stack_stride, so),
                                    cfg.focus_min_variance);
      for (auto & s : stacks) {
        stack_h = s.height();
        stack_w = s.width();
        d.stacks.push_back(std::move(s.frames));
      }
    }
    for (const auto & kind : target_kinds)
      for (const auto * a : m.of_kind(kind)) d.targets.push_back(io::read_png(m.resolve(*a)));
  }
  if (d.stacks.empty())
    throw DataError("phase " + std::to_string(k) + ": no event stacks of " + std::to_string(cfg.stack_frames) + "x" +
                    std::to_string(cfg.events_per_frame) + " events in the given manifests");
  if (d.targets.empty()) throw DataError("phase " + std::to_string(k) + ": no target images in the given manifests");
  for (const auto & s : d.stacks)
    if (s.h() != stack_h || s.w() != stack_w) throw DataError("event streams differ in resolution");
  const int f = k == 3 ? cfg.scale : 1;
  std::erase_if(d.targets, [&](const Tensor & t) { return t.h() != stack_h * f || t.w() != stack_w * f; });
  if (d.targets.empty())
    throw DataError("phase " + std::to_string(k) + ": no target images of size " + std::to_string(stack_w * f) + "x" +
                    std::to_string(stack_h * f));
  return d;
}

BatchSampler::BatchSampler(const PhaseData & data, const PhaseConfig & cfg)
: data_(data), cfg_(cfg), rng_(cfg.seed ^ 0x5DEECE66Dull), order_(data.stacks.size())
{
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
}

Batch BatchSampler::next()
{
  std::vector<Tensor> stacks, targets, id_inputs;
  std::uniform_int_distribution<std::size_t> pick(0, data_.targets.size() - 1);
  for (int b = 0; b < cfg_.batch; ++b) {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    Tensor s = data_.stacks[order_[pos_++]];
    Tensor t = data_.targets[pick(rng_)];
    if (cfg_.augment) std::tie(s, t) = augment(s, t, rng_, s.h() == s.w() && t.h() == t.w());
    id_inputs.push_back(cfg_.phase == 3 ? sim::downsample_bicubic(t, cfg_.scale) : t);
    stacks.push_back(std::move(s));
    targets.push_back(std::move(t));
  }
  return {Tensor::stack_batch(stacks), Tensor::stack_batch(targets), Tensor::stack_batch(id_inputs)};
}

void save_checkpoint(const fs::path & out_dir, const TrainState & state, const Config & cfg,
                     const std::vector<LossRecord> & log)
{
  fs::path dir = out_dir.lexically_normal();
  if (!dir.has_filename()) dir = dir.parent_path();
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  json spec;
  spec["phase"] = state.phase;
  spec["step"] = state.step;
  spec["config"] = cfg.to_map();
  for (const auto & [name, p] : state.nets) {
    spec["networks"][name] = {{"spec", p.spec}, {"seed", p.seed}};
    nets::save_arrays(tmp, name, p.arrays);
    nets::save_arrays(tmp, name + ".m", state.moments.at(name).m);
    nets::save_arrays(tmp, name + ".v", state.moments.at(name).v);
  }
  io::write_text_atomic(tmp / "spec.json", spec.dump(2) + "\n");
  std::string csv = "step,l_adv,l_sim,l_id,l_var,total\n";
  for (const auto & r : log)
    csv += std::to_string(r.step) + "," + fmt(r.adv) + "," + fmt(r.sim) + "," + fmt(r.id) + "," + fmt(r.var) + "," +
           fmt(r.total) + "\n";
  io::write_text_atomic(tmp / "loss_log.csv", csv);
  io::write_text_atomic(tmp / "config.txt", cfg.to_text());
  fs::remove_all(dir);
  if (dir.has_parent_path()) fs::create_directories(dir.parent_path());
  fs::rename(tmp, dir);
}

std::vector<LossRecord> read_loss_log(const fs::path & csv)
{
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open " + csv.string());
  std::vector<LossRecord> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRecord r;
    char c = 0;
    std::istringstream ls(line);
    if (!(ls >> r.step >> c >> r.adv >> c >> r.sim >> c >> r.id >> c >> r.var >> c >> r.total))
      throw DataError("malformed loss log line: " + line);
    out.push_back(r);
  }
  return out;
}

TrainState load_checkpoint(const fs::path & dir)
{
  if (!fs::exists(dir / "spec.json")) throw DataError("not a checkpoint directory: " + dir.string());
  const auto bytes = io::read_file(dir / "spec.json");
  TrainState s;
  try {
    const json spec = json::parse(bytes.begin(), bytes.end());
    s.phase = spec.at("phase").get<int>();
    s.step = spec.at("step").get<std::int64_t>();
    for (const auto & [name, entry] : spec.at("networks").items()) {
      const auto ns = entry.at("spec").get<nets::NetSpec>();
      nets::Params layout = nets::zeros(ns);
      nets::Params p;
      p.spec = ns;
      p.seed = entry.at("seed").get<std::uint64_t>();
      p.arrays = nets::load_arrays(dir, name, layout.arrays);
      Moments m;
      m.m = nets::load_arrays(dir, name + ".m", layout.arrays);
      m.v = nets::load_arrays(dir, name + ".v", layout.arrays);
      s.nets.emplace(name, std::move(p));
      s.moments.emplace(name, std::move(m));
    }
  } catch (const json::exception & e) {
    throw DataError("malformed checkpoint spec: " + std::string(e.what()));
  }
  if (fs::exists(dir / "loss_log.csv"))
    for (const auto & r : read_loss_log(dir / "loss_log.csv")) s.history.push_back(r);
  return s;
}

TrainState train_phase(const Config & cfg, const std::optional<fs::path> & init, const fs::path & out_dir,
                       bool verbose)
{
  const PhaseConfig & pc = cfg.train;
  pc.validate();
  std::optional<TrainState> previous;
  if (pc.phase > 1) {
    if (!init)
      throw UsageError("phase " + std::to_string(pc.phase) + " requires --init with a phase " +
                       std::to_string(pc.phase - 1) + " checkpoint");
    previous = load_checkpoint(*init);
  }
  TrainState state = init_state(pc, previous ? &*previous : nullptr);
  const PhaseData data = load_phase_data(pc);
  const auto phi = make_feature_extractor(pc);
  BatchSampler sampler(data, pc);
  std::vector<LossRecord> log;
  for (int i = 0; i < pc.iterations; ++i) {
    LossRecord rec;
    std::tie(state, rec) = train_step(std::move(state), sampler.next(), pc, phi);
    log.push_back(rec);
    if (verbose && (rec.step % 50 == 0 || i + 1 == pc.iterations))
      std::cerr << "phase " << pc.phase << " step " << rec.step << " total " << rec.total << " (adv " << rec.adv
                << " sim " << rec.sim << " id " << rec.id << " var " << rec.var << " d " << rec.d_loss << ")\n";
  }
  state.history.assign(log.begin(), log.end());
  while (state.history.size() > TrainState::kHistoryCapacity) state.history.pop_front();
  save_checkpoint(out_dir, state, cfg, log);
  return state;
}

}  // namespace eventsr::train
