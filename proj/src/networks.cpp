#include "eventsr/networks.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"

namespace eventsr::nets
{

namespace
{

constexpr double kSlope = 0.2;
constexpr int kDiscStages = 3;

int stage_count(int scale) { return scale == 4 ? 2 : 1; }

struct ConvDecl
{
  std::string name;
  int cout, cin, k;
  double gain;  // multiplier on He-normal std
};

std::vector<ConvDecl> layout(const NetSpec & s)
{
  std::vector<ConvDecl> convs;
  const int ch = s.channels;
  auto blocks = [&] {
    for (int b = 0; b < s.blocks; ++b) {
      const std::string p = "block" + std::to_string(b);
      convs.push_back({p + ".conv1", ch, ch, 3, 1.0});
      convs.push_back({p + ".conv2", ch, ch, 3, 0.1});
    }
  };
  switch (s.kind) {
    case NetKind::GeneratorRD:
    case NetKind::Feedback:
      convs.push_back({"head", ch, s.in_channels, 3, 1.0});
      blocks();
      convs.push_back({"tail", s.out_channels, ch, 3, 1.0});
      break;
    case NetKind::GeneratorS:
      convs.push_back({"head", ch, s.in_channels, 3, 1.0});
      blocks();
      convs.push_back({"trunk", ch, ch, 3, 1.0});
      for (int j = 0; j < stage_count(s.scale); ++j) convs.push_back({"up" + std::to_string(j), 4 * ch, ch, 3, 1.0});
      convs.push_back({"tail", s.out_channels, ch, 3, 1.0});
      break;
    case NetKind::FeedbackS:
      convs.push_back({"head", ch, s.in_channels, 3, 1.0});
      for (int j = 0; j < stage_count(s.scale); ++j) convs.push_back({"down" + std::to_string(j), ch, ch, 3, 1.0});
      blocks();
      convs.push_back({"tail", s.out_channels, ch, 3, 1.0});
      break;
    case NetKind::Discriminator: {
      int cin = s.in_channels;
      for (int j = 0; j < kDiscStages; ++j) {
        const int cout = ch << j;
        convs.push_back({"stage" + std::to_string(j), cout, cin, 3, 1.0});
        cin = cout;
      }
      convs.push_back({"fc", 1, cin, 1, 1.0});
      break;
    }
  }
  return convs;
}

ag::Var conv(const ParamVars & v, const std::string & name, const ag::Var & x, int stride = 1)
{
  const ag::Var & w = v.at(name + ".w");
  return ag::conv2d(x, w, v.at(name + ".b"), stride, w.value().dim(2) / 2);
}

ag::Var res_blocks(const NetSpec & s, const ParamVars & v, ag::Var h)
{
  for (int b = 0; b < s.blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    h = h + conv(v, p + ".conv2", ag::leaky_relu(conv(v, p + ".conv1", h), kSlope));
  }
  return h;
}

void check_input(const NetSpec & s, const Tensor & x)
{
  if (x.rank() != 4 || x.c() != s.in_channels)
    throw std::invalid_argument(kind_name(s.kind) + ": expected " + std::to_string(s.in_channels) +
                                "-channel NCHW input, got " + shape_string(x.shape));
  const int div = s.kind == NetKind::FeedbackS ? s.scale : 1;
  if (x.h() % div != 0 || x.w() % div != 0)
    throw std::invalid_argument(kind_name(s.kind) + ": input dims must be divisible by " + std::to_string(div));
}

}  // namespace

std::string kind_name(NetKind k)
{
  switch (k) {
    case NetKind::GeneratorRD: return "generator_rd";
    case NetKind::GeneratorS: return "generator_s";
    case NetKind::Discriminator: return "discriminator";
    case NetKind::Feedback: return "feedback";
    case NetKind::FeedbackS: return "feedback_s";
  }
  return "?";
}

NetKind parse_kind(const std::string & s)
{
  for (NetKind k : {NetKind::GeneratorRD, NetKind::GeneratorS, NetKind::Discriminator, NetKind::Feedback,
                    NetKind::FeedbackS})
    if (kind_name(k) == s) return k;
  throw DataError("unknown network kind '" + s + "'");
}

void NetSpec::validate() const
{
  auto fail = [this](const std::string & why) {
    throw std::invalid_argument(kind_name(kind) + " spec: " + why);
  };
  if (channels < 1) fail("channels must be >= 1");
  if (blocks < 0) fail("blocks must be >= 0");
  if (in_channels < 1 || out_channels < 1) fail("channel counts must be >= 1");
  switch (kind) {
    case NetKind::GeneratorRD:
      if (out_channels != 1) fail("output channels must be 1");
      break;
    case NetKind::GeneratorS:
      if (in_channels != 1 || out_channels != 1) fail("must map 1 channel to 1 channel");
      if (scale != 2 && scale != 4) fail("scale must be 2 or 4");
      break;
    case NetKind::Discriminator:
      if (in_channels != 1 || out_channels != 1) fail("must map an image to one score");
      break;
    case NetKind::Feedback:
      if (in_channels != 1) fail("input must be a single-channel image");
      break;
    case NetKind::FeedbackS:
      if (in_channels != 1) fail("input must be a single-channel image");
      if (scale != 2 && scale != 4) fail("scale must be 2 or 4");
      break;
  }
}

NetSpec generator_rd_spec(int in_channels) { return {NetKind::GeneratorRD, 16, 4, 1, in_channels, 1}; }
NetSpec generator_s_spec(int scale) { return {NetKind::GeneratorS, 16, 4, scale, 1, 1}; }
NetSpec discriminator_spec() { return {NetKind::Discriminator, 16, 0, 1, 1, 1}; }
NetSpec feedback_spec(int stack_frames) { return {NetKind::Feedback, 16, 3, 1, 1, stack_frames}; }
NetSpec feedback_s_spec(int stack_frames, int scale)
{
  return {NetKind::FeedbackS, 16, 3, scale, 1, stack_frames};
}

std::size_t Params::parameter_count() const
{
  std::size_t n = 0;
  for (const auto & [_, t] : arrays) n += t.size();
  return n;
}

bool Params::all_finite() const
{
  for (const auto & [_, t] : arrays)
    if (!t.all_finite()) return false;
  return true;
}

Params build(const NetSpec & spec, std::uint64_t seed)
{
  spec.validate();
  Params p;
  p.spec = spec;
  p.seed = seed;
  std::mt19937_64 rng(seed);
  for (const auto & c : layout(spec)) {
    Tensor w({c.cout, c.cin, c.k, c.k});
    std::normal_distribution<double> dist(0.0, c.gain * std::sqrt(2.0 / (c.cin * c.k * c.k)));
    for (double & v : w.data) v = dist(rng);
    p.arrays.emplace(c.name + ".w", std::move(w));
    p.arrays.emplace(c.name + ".b", Tensor({c.cout}, 0.0));
  }
  return p;
}

Params zeros(const NetSpec & spec)
{
  spec.validate();
  Params p;
  p.spec = spec;
  for (const auto & c : layout(spec)) {
    p.arrays.emplace(c.name + ".w", Tensor({c.cout, c.cin, c.k, c.k}, 0.0));
    p.arrays.emplace(c.name + ".b", Tensor({c.cout}, 0.0));
  }
  return p;
}

ParamVars bind(const Params & p, bool requires_grad)
{
  ParamVars v;
  for (const auto & [name, t] : p.arrays) v.emplace(name, ag::Var(t, requires_grad));
  return v;
}

ag::Var forward(const NetSpec & s, const ParamVars & v, const ag::Var & x)
{
  check_input(s, x.value());
  switch (s.kind) {
    case NetKind::GeneratorRD:
    case NetKind::Feedback: {
      ag::Var h = ag::leaky_relu(conv(v, "head", x), kSlope);
      h = res_blocks(s, v, h);
      return ag::sigmoid(conv(v, "tail", h));
    }
    case NetKind::GeneratorS: {
      const ag::Var h0 = ag::leaky_relu(conv(v, "head", x), kSlope);
      ag::Var h = h0 + conv(v, "trunk", res_blocks(s, v, h0));
      for (int j = 0; j < stage_count(s.scale); ++j)
        h = ag::leaky_relu(ag::pixel_shuffle(conv(v, "up" + std::to_string(j), h), 2), kSlope);
      return ag::sigmoid(conv(v, "tail", h));
    }
    case NetKind::FeedbackS: {
      ag::Var h = ag::leaky_relu(conv(v, "head", x), kSlope);
      for (int j = 0; j < stage_count(s.scale); ++j)
        h = ag::leaky_relu(conv(v, "down" + std::to_string(j), h, 2), kSlope);
      h = res_blocks(s, v, h);
      return ag::sigmoid(conv(v, "tail", h));
    }
    case NetKind::Discriminator: {
      ag::Var h = x;
      for (int j = 0; j < kDiscStages; ++j) h = ag::leaky_relu(conv(v, "stage" + std::to_string(j), h, 2), kSlope);
      return conv(v, "fc", ag::global_avg_pool(h));
    }
  }
  throw std::logic_error("unreachable");
}

namespace
{

Tensor run(const Params & p, const Tensor & x, NetKind expect)
{
  if (p.spec.kind != expect) throw std::invalid_argument("params are for " + kind_name(p.spec.kind));
  return forward(p.spec, bind(p, false), ag::Var(x)).value();
}

}  // namespace

Tensor forward_generator_rd(const Params & p, const Tensor & input) { return run(p, input, NetKind::GeneratorRD); }

Tensor forward_generator_s(const Params & p, const Tensor & lr) { return run(p, lr, NetKind::GeneratorS); }

Tensor forward_feedback(const Params & p, const Tensor & image)
{
  const NetKind k = p.spec.kind == NetKind::FeedbackS ? NetKind::FeedbackS : NetKind::Feedback;
  return run(p, image, k);
}

Tensor forward_discriminator(const Params & p, const Tensor & image, DiscMode mode)
{
  Tensor out = run(p, image, NetKind::Discriminator);
  if (mode == DiscMode::Standard) out = ag::sigmoid(ag::Var(out)).value();
  return out;
}

void to_json(nlohmann::json & j, const NetSpec & s)
{
  j = nlohmann::json{{"kind", kind_name(s.kind)}, {"channels", s.channels}, {"blocks", s.blocks},
                     {"scale", s.scale},          {"in_channels", s.in_channels}, {"out_channels", s.out_channels}};
}

void from_json(const nlohmann::json & j, NetSpec & s)
{
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.channels = j.at("channels").get<int>();
  s.blocks = j.at("blocks").get<int>();
  s.scale = j.at("scale").get<int>();
  s.in_channels = j.at("in_channels").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
}

void save_arrays(const std::filesystem::path & dir, const std::string & prefix,
                 const std::map<std::string, Tensor> & arrays)
{
  for (const auto & [name, t] : arrays) io::write_tns1(dir / (prefix + "." + name + ".tns"), t, io::DType::Float64);
}

std::map<std::string, Tensor> load_arrays(const std::filesystem::path & dir, const std::string & prefix,
                                          const std::map<std::string, Tensor> & layout_arrays)
{
  std::map<std::string, Tensor> out;
  for (const auto & [name, ref] : layout_arrays) {
    Tensor t = io::read_tns1(dir / (prefix + "." + name + ".tns"));
    if (!t.same_shape(ref))
      throw DataError(prefix + "." + name + ": stored shape " + shape_string(t.shape) + " does not match spec " +
                      shape_string(ref.shape));
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace eventsr::nets
