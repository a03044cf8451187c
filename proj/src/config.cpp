#include "eventsr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"

namespace eventsr
{

PhaseConfig PhaseConfig::defaults(int phase)
{
  PhaseConfig c;
  c.phase = phase;
  c.weights = {10.0, 5.0, 0.5, 0.6};
  switch (phase) {
    case 1: break;
    case 2: c.weights.lambda3 = 2.0; break;
    case 3:
      c.weights.lambda3 = 3.0;
      c.adv_mode = AdvMode::Relativistic;
      break;
    default: throw UsageError("phase must be 1, 2 or 3");
  }
  return c;
}

double PhaseConfig::lr_at(std::int64_t step) const
{
  double rate = lr;
  for (double point : lr_decay_points)
    if (static_cast<double>(step) >= point * iterations) rate *= lr_gamma;
  return rate;
}

void PhaseConfig::validate() const
{
  if (phase < 1 || phase > 3) throw UsageError("phase must be 1, 2 or 3");
  weights.validate();
  if (iterations < 0) throw UsageError("iters must be >= 0");
  if (lr < 0.0) throw UsageError("lr must be >= 0");
  if (batch < 1) throw UsageError("batch must be >= 1");
  if (events_per_frame < 1 || stack_frames < 1) throw UsageError("n_e and n_frames must be >= 1");
  if (scale != 2 && scale != 4) throw UsageError("scale must be 2 or 4");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("Adam betas must lie in [0,1)");
  if (render_clip <= 0.0) throw UsageError("render_clip must be positive");
}

namespace
{

std::string trim(const std::string & s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string & key, const std::string & v)
{
  T out{};
  const auto * end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw UsageError("config key '" + key + "': bad value '" + v + "'");
  return out;
}

bool parse_bool(const std::string & key, const std::string & v)
{
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw UsageError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string & v)
{
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string> & items)
{
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + items[i];
  return s;
}

std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string & text)
{
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return pairs;
}

std::pair<std::string, std::string> split_override(const std::string & kv)
{
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw UsageError("override '" + kv + "' is not key=value");
  return {trim(kv.substr(0, eq)), trim(kv.substr(eq + 1))};
}

}  // namespace

const std::vector<std::string> & Config::documented_keys()
{
  static const std::vector<std::string> keys{
    "phase",        "alpha",        "lambda1",     "lambda2",       "lambda3",
    "adv_mode",     "gen_mode",     "iters",       "lr",            "lr_decay",
    "lr_gamma",     "beta1",        "beta2",       "adam_eps",      "seed",
    "batch",        "augment",      "data",        "n_e",           "n_frames",
    "stack_stride", "render_clip",  "cumulative",  "focus_min_variance",
    "scale",        "channels",     "gen_blocks",  "feedback_blocks", "feature_layer",
    "feature_seed", "use_feedback", "use_discriminator", "sim_threshold", "log_eps",
    "threshold_noise", "refractory_us", "frame_dt_us", "aps_blur",   "aps_noise",
  };
  return keys;
}

void Config::set(const std::string & key, const std::string & v)
{
  auto & t = train;
  if (key == "phase") {
    // Switching phase resets the phase-specific defaults but keeps the rest.
    const int phase = parse_number<int>(key, v);
    const PhaseConfig d = PhaseConfig::defaults(phase);
    t.phase = phase;
    t.weights = d.weights;
    t.adv_mode = d.adv_mode;
  } else if (key == "alpha") t.weights.alpha = parse_number<double>(key, v);
  else if (key == "lambda1") t.weights.lambda1 = parse_number<double>(key, v);
  else if (key == "lambda2") t.weights.lambda2 = parse_number<double>(key, v);
  else if (key == "lambda3") t.weights.lambda3 = parse_number<double>(key, v);
  else if (key == "adv_mode") {
    if (v == "standard") t.adv_mode = AdvMode::Standard;
    else if (v == "relativistic") t.adv_mode = AdvMode::Relativistic;
    else throw UsageError("adv_mode must be standard or relativistic");
  } else if (key == "gen_mode") {
    if (v == "paper") t.gen_mode = losses::GeneratorMode::Paper;
    else if (v == "nonsaturating") t.gen_mode = losses::GeneratorMode::NonSaturating;
    else throw UsageError("gen_mode must be paper or nonsaturating");
  } else if (key == "iters") t.iterations = parse_number<int>(key, v);
  else if (key == "lr") t.lr = parse_number<double>(key, v);
  else if (key == "lr_decay") {
    t.lr_decay_points.clear();
    for (const auto & item : split_list(v)) t.lr_decay_points.push_back(parse_number<double>(key, item));
  } else if (key == "lr_gamma") t.lr_gamma = parse_number<double>(key, v);
  else if (key == "beta1") t.beta1 = parse_number<double>(key, v);
  else if (key == "beta2") t.beta2 = parse_number<double>(key, v);
  else if (key == "adam_eps") t.adam_eps = parse_number<double>(key, v);
  else if (key == "seed") {
    t.seed = parse_number<std::uint64_t>(key, v);
    dataset.sim.seed = t.seed;
  } else if (key == "batch") t.batch = parse_number<int>(key, v);
  else if (key == "augment") t.augment = parse_bool(key, v);
  else if (key == "data") t.data = split_list(v);
  else if (key == "n_e") t.events_per_frame = parse_number<std::size_t>(key, v);
  else if (key == "n_frames") t.stack_frames = parse_number<int>(key, v);
  else if (key == "stack_stride") t.stack_stride = parse_number<std::size_t>(key, v);
  else if (key == "render_clip") t.render_clip = parse_number<double>(key, v);
  else if (key == "cumulative") t.cumulative = parse_bool(key, v);
  else if (key == "focus_min_variance") t.focus_min_variance = parse_number<double>(key, v);
  else if (key == "scale") {
    t.scale = parse_number<int>(key, v);
    dataset.scale = t.scale;
  } else if (key == "channels") t.channels = parse_number<int>(key, v);
  else if (key == "gen_blocks") t.gen_blocks = parse_number<int>(key, v);
  else if (key == "feedback_blocks") t.feedback_blocks = parse_number<int>(key, v);
  else if (key == "feature_layer") t.feature_layer = parse_number<int>(key, v);
  else if (key == "feature_seed") t.feature_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "use_feedback") t.use_feedback = parse_bool(key, v);
  else if (key == "use_discriminator") t.use_discriminator = parse_bool(key, v);
  else if (key == "sim_threshold") dataset.sim.contrast_threshold = parse_number<double>(key, v);
  else if (key == "log_eps") dataset.sim.log_eps = parse_number<double>(key, v);
  else if (key == "threshold_noise") dataset.sim.threshold_noise = parse_number<double>(key, v);
  else if (key == "refractory_us") dataset.sim.refractory_us = parse_number<std::int64_t>(key, v);
  else if (key == "frame_dt_us") frame_dt_us = parse_number<std::int64_t>(key, v);
  else if (key == "aps_blur") dataset.aps_blur_sigma = parse_number<double>(key, v);
  else if (key == "aps_noise") dataset.aps_noise_sigma = parse_number<double>(key, v);
  else throw UsageError("unknown config key '" + key + "'");
}

Config Config::parse(const std::string & text, const std::vector<std::string> & overrides)
{
  auto pairs = parse_pairs(text);
  for (const auto & kv : overrides) pairs.push_back(split_override(kv));
  Config cfg;
  // The phase key goes first so its defaults never clobber explicit settings.
  for (const auto & [k, v] : pairs)
    if (k == "phase") cfg.set(k, v);
  for (const auto & [k, v] : pairs)
    if (k != "phase") cfg.set(k, v);
  cfg.train.validate();
  return cfg;
}

Config Config::load(const std::filesystem::path & path, const std::vector<std::string> & overrides)
{
  const auto bytes = io::read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()), overrides);
}

std::map<std::string, std::string> Config::to_map() const
{
  const auto & t = train;
  std::vector<std::string> decay;
  for (double d : t.lr_decay_points) decay.push_back(fmt(d));
  return {
    {"phase", std::to_string(t.phase)},
    {"alpha", fmt(t.weights.alpha)},
    {"lambda1", fmt(t.weights.lambda1)},
    {"lambda2", fmt(t.weights.lambda2)},
    {"lambda3", fmt(t.weights.lambda3)},
    {"adv_mode", t.adv_mode == AdvMode::Standard ? "standard" : "relativistic"},
    {"gen_mode", t.gen_mode == losses::GeneratorMode::Paper ? "paper" : "nonsaturating"},
    {"iters", std::to_string(t.iterations)},
    {"lr", fmt(t.lr)},
    {"lr_decay", join(decay)},
    {"lr_gamma", fmt(t.lr_gamma)},
    {"beta1", fmt(t.beta1)},
    {"beta2", fmt(t.beta2)},
    {"adam_eps", fmt(t.adam_eps)},
    {"seed", std::to_string(t.seed)},
    {"batch", std::to_string(t.batch)},
    {"augment", t.augment ? "true" : "false"},
    {"data", join(t.data)},
    {"n_e", std::to_string(t.events_per_frame)},
    {"n_frames", std::to_string(t.stack_frames)},
    {"stack_stride", std::to_string(t.stack_stride)},
    {"render_clip", fmt(t.render_clip)},
    {"cumulative", t.cumulative ? "true" : "false"},
    {"focus_min_variance", fmt(t.focus_min_variance)},
    {"scale", std::to_string(t.scale)},
    {"channels", std::to_string(t.channels)},
    {"gen_blocks", std::to_string(t.gen_blocks)},
    {"feedback_blocks", std::to_string(t.feedback_blocks)},
    {"feature_layer", std::to_string(t.feature_layer)},
    {"feature_seed", std::to_string(t.feature_seed)},
    {"use_feedback", t.use_feedback ? "true" : "false"},
    {"use_discriminator", t.use_discriminator ? "true" : "false"},
    {"sim_threshold", fmt(dataset.sim.contrast_threshold)},
    {"log_eps", fmt(dataset.sim.log_eps)},
    {"threshold_noise", fmt(dataset.sim.threshold_noise)},
    {"refractory_us", std::to_string(dataset.sim.refractory_us)},
    {"frame_dt_us", std::to_string(frame_dt_us)},
    {"aps_blur", fmt(dataset.aps_blur_sigma)},
    {"aps_noise", fmt(dataset.aps_noise_sigma)},
  };
}

std::string Config::to_text() const
{
  std::string out;
  for (const auto & [k, v] : to_map()) out += k + "=" + v + "\n";
  return out;
}

}  // namespace eventsr
