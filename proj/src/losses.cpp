#include "eventsr/losses.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"

namespace eventsr::losses
{

namespace fs = std::filesystem;

void LossWeights::validate() const
{
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0,1]");
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) throw UsageError("loss weights must be >= 0");
}

FeatureExtractor::FeatureExtractor(std::vector<Layer> layers, int selected_layer)
: layers_(std::move(layers)), selected_(selected_layer)
{
  if (layers_.empty()) throw std::invalid_argument("feature extractor needs at least one layer");
  if (selected_ < 1 || selected_ > depth()) throw std::invalid_argument("selected feature layer out of range");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto & l = layers_[i];
    if (l.weight.rank() != 4 || l.bias.rank() != 1 || l.bias.dim(0) != l.weight.dim(0))
      throw std::invalid_argument("feature layer " + std::to_string(i + 1) + " has inconsistent shapes");
    if (i > 0 && l.weight.dim(1) != layers_[i - 1].weight.dim(0))
      throw std::invalid_argument("feature layer " + std::to_string(i + 1) + " input channel mismatch");
  }
}

FeatureExtractor FeatureExtractor::random(int in_channels, const std::vector<int> & channels,
                                          const std::vector<int> & strides, int selected_layer,
                                          std::uint64_t seed)
{
  if (channels.size() != strides.size()) throw std::invalid_argument("channels/strides length mismatch");
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  int cin = in_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    Layer l;
    l.weight = Tensor({channels[i], cin, 3, 3});
    l.bias = Tensor({channels[i]}, 0.0);
    l.stride = strides[i];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (cin * 9.0)));
    for (double & v : l.weight.data) v = dist(rng);
    layers.push_back(std::move(l));
    cin = channels[i];
  }
  return FeatureExtractor(std::move(layers), selected_layer);
}

FeatureExtractor FeatureExtractor::standard(int in_channels, std::uint64_t seed)
{
  return random(in_channels, {8, 16, 32}, {2, 2, 2}, 2, seed);
}

void FeatureExtractor::save(const fs::path & dir) const
{
  fs::create_directories(dir);
  std::string meta = "selected=" + std::to_string(selected_) + "\n";
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string stem = "layer" + std::to_string(i + 1);
    io::write_tns1(dir / (stem + "_w.tns"), layers_[i].weight, io::DType::Float64);
    io::write_tns1(dir / (stem + "_b.tns"), layers_[i].bias, io::DType::Float64);
    meta += stem + "_stride=" + std::to_string(layers_[i].stride) + "\n";
  }
  io::write_text_atomic(dir / "extractor.txt", meta);
}

FeatureExtractor FeatureExtractor::load(const fs::path & dir)
{
  const auto bytes = io::read_file(dir / "extractor.txt");
  const std::string text(bytes.begin(), bytes.end());
  auto value_of = [&](const std::string & key) -> int {
    const auto pos = text.find(key + "=");
    if (pos == std::string::npos) throw DataError("extractor.txt lacks " + key);
    return std::stoi(text.substr(pos + key.size() + 1));
  };
  std::vector<Layer> layers;
  for (int i = 1; fs::exists(dir / ("layer" + std::to_string(i) + "_w.tns")); ++i) {
    const std::string stem = "layer" + std::to_string(i);
    Layer l;
    l.weight = io::read_tns1(dir / (stem + "_w.tns"));
    l.bias = io::read_tns1(dir / (stem + "_b.tns"));
    l.stride = value_of(stem + "_stride");
    layers.push_back(std::move(l));
  }
  return FeatureExtractor(std::move(layers), value_of("selected"));
}

ag::Var FeatureExtractor::forward(const ag::Var & x, int layer) const
{
  if (layer < 1 || layer > depth())
    throw std::invalid_argument("feature layer " + std::to_string(layer) + " outside 1.." + std::to_string(depth()));
  ag::Var h = x;
  for (int i = 0; i < layer; ++i) {
    const auto & l = layers_[static_cast<std::size_t>(i)];
    const int pad = l.weight.dim(2) / 2;
    h = ag::relu(ag::conv2d(h, ag::Var(l.weight), ag::Var(l.bias), l.stride, pad));
  }
  return h;
}

Tensor feature_extract(const Tensor & x, const FeatureExtractor & phi, int layer)
{
  return phi.forward(ag::Var(x), layer).value();
}

namespace
{

void check_probabilities(const Tensor & t, const char * what)
{
  for (double v : t.data)
    if (!(v > 0.0 && v < 1.0)) throw std::domain_error(std::string(what) + ": scores must lie in (0,1)");
}

void check_same(const Tensor & a, const Tensor & b, const char * what)
{
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape) + " vs " +
                                shape_string(b.shape));
}

ag::Var one_minus(const ag::Var & x) { return ag::add_scalar(ag::scale(x, -1.0), 1.0); }

}  // namespace

namespace diff
{

ag::Var adversarial_generator(const ag::Var & d_fake, GeneratorMode mode)
{
  if (mode == GeneratorMode::Paper) return ag::scale(ag::mean(ag::log(one_minus(d_fake))), -1.0);
  return ag::scale(ag::mean(ag::log(d_fake)), -1.0);
}

ag::Var adversarial_discriminator(const ag::Var & d_real, const ag::Var & d_fake)
{
  return ag::scale(ag::mean(ag::log(d_real)), -1.0) - ag::mean(ag::log(one_minus(d_fake)));
}

ag::Var adversarial_generator_logits(const ag::Var & logits_fake, GeneratorMode mode)
{
  // log(1 - sigmoid(z)) = log_sigmoid(-z)
  if (mode == GeneratorMode::Paper)
    return ag::scale(ag::mean(ag::log_sigmoid(ag::scale(logits_fake, -1.0))), -1.0);
  return ag::scale(ag::mean(ag::log_sigmoid(logits_fake)), -1.0);
}

ag::Var adversarial_discriminator_logits(const ag::Var & logits_real, const ag::Var & logits_fake)
{
  return ag::scale(ag::mean(ag::log_sigmoid(logits_real)), -1.0) -
         ag::mean(ag::log_sigmoid(ag::scale(logits_fake, -1.0)));
}

namespace
{

// BCE(sigmoid(z), 1) averaged = -mean(log_sigmoid(z)); BCE(sigmoid(z), 0) = -mean(log_sigmoid(-z)).
ag::Var bce_true(const ag::Var & z) { return ag::scale(ag::mean(ag::log_sigmoid(z)), -1.0); }
ag::Var bce_false(const ag::Var & z) { return ag::scale(ag::mean(ag::log_sigmoid(ag::scale(z, -1.0))), -1.0); }

}  // namespace

ag::Var relativistic_discriminator(const ag::Var & c_real, const ag::Var & c_fake)
{
  const ag::Var real_rel = ag::sub_broadcast(c_real, ag::mean(c_fake));
  const ag::Var fake_rel = ag::sub_broadcast(c_fake, ag::mean(c_real));
  return bce_true(real_rel) + bce_false(fake_rel);
}

ag::Var relativistic_generator(const ag::Var & c_real, const ag::Var & c_fake)
{
  const ag::Var real_rel = ag::sub_broadcast(c_real, ag::mean(c_fake));
  const ag::Var fake_rel = ag::sub_broadcast(c_fake, ag::mean(c_real));
  return bce_true(fake_rel) + bce_false(real_rel);
}

ag::Var event_similarity(const ag::Var & stack_rec, const ag::Var & stack_in, double alpha,
                         const FeatureExtractor & phi)
{
  check_same(stack_rec.value(), stack_in.value(), "event_similarity");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  ag::Var total = ag::scale(ag::mean(ag::rss_per_item(stack_rec - stack_in)), alpha);
  if (alpha < 1.0) {
    const int layer = phi.selected_layer();
    const ag::Var fa = phi.forward(stack_rec, layer);
    const ag::Var fb = phi.forward(stack_in, layer);
    const Tensor & f = fa.value();
    const double chw = static_cast<double>(f.c()) * f.h() * f.w();
    total = total + ag::scale(ag::mean(ag::rss_per_item(fa - fb)), (1.0 - alpha) / chw);
  }
  return total;
}

ag::Var identity(const ag::Var & gen_out, const ag::Var & target)
{
  check_same(gen_out.value(), target.value(), "identity");
  return ag::mean(ag::rss_per_item(gen_out - target));
}

ag::Var total_variation(const ag::Var & image)
{
  const Tensor & v = image.value();
  if (v.rank() != 4 || v.h() < 2 || v.w() < 2) throw std::invalid_argument("total_variation: image must be at least 2x2");
  return ag::mean(ag::rss_per_item(ag::tv_field(image)));
}

}  // namespace diff

double adversarial_generator(const Tensor & d_fake, GeneratorMode mode)
{
  check_probabilities(d_fake, "adversarial_generator");
  return diff::adversarial_generator(ag::Var(d_fake), mode).value().data[0];
}

double adversarial_discriminator(const Tensor & d_real, const Tensor & d_fake)
{
  check_probabilities(d_real, "adversarial_discriminator");
  check_probabilities(d_fake, "adversarial_discriminator");
  return diff::adversarial_discriminator(ag::Var(d_real), ag::Var(d_fake)).value().data[0];
}

std::pair<double, double> relativistic_adversarial(const Tensor & c_real, const Tensor & c_fake)
{
  if (!c_real.all_finite() || !c_fake.all_finite()) throw std::domain_error("relativistic: non-finite critic");
  const ag::Var r(c_real), f(c_fake);
  return {diff::relativistic_generator(r, f).value().data[0], diff::relativistic_discriminator(r, f).value().data[0]};
}

double event_similarity(const Tensor & stack_rec, const Tensor & stack_in, double alpha, const FeatureExtractor & phi)
{
  return diff::event_similarity(ag::Var(stack_rec), ag::Var(stack_in), alpha, phi).value().data[0];
}

double identity(const Tensor & gen_out, const Tensor & target)
{
  return diff::identity(ag::Var(gen_out), ag::Var(target)).value().data[0];
}

double total_variation(const Tensor & image) { return diff::total_variation(ag::Var(image)).value().data[0]; }

double phase_total(double adv, double sim, double id, double var, const LossWeights & w)
{
  return adv + w.lambda1 * sim + w.lambda2 * id + w.lambda3 * var;
}

}  // namespace eventsr::losses
