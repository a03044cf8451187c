#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "eventsr/autograd.hpp"
#include "eventsr/tensor.hpp"

namespace eventsr::losses
{

struct LossWeights
{
  double lambda1 = 10.0;  // event similarity
  double lambda2 = 5.0;   // identity
  double lambda3 = 0.5;   // total variation
  double alpha = 0.6;     // pixel vs. feature interpolation in event similarity

  void validate() const;
};

/// Generator adversarial objective. Paper form is -E[log(1 - D(G(E)))];
/// non-saturating form is -E[log D(G(E))].
enum class GeneratorMode { Paper, NonSaturating };

/// Fixed convolutional pyramid used as the feature map in the event
/// similarity loss. Each layer is a 3x3 convolution followed by ReLU.
class FeatureExtractor
{
public:
  struct Layer
  {
    Tensor weight;  // [out, in, 3, 3] (or any odd k)
    Tensor bias;    // [out]
    int stride = 2;
  };

  FeatureExtractor() = default;
  explicit FeatureExtractor(std::vector<Layer> layers, int selected_layer);

  /// Seeded random pyramid; He-normal weights, zero biases.
  static FeatureExtractor random(int in_channels, const std::vector<int> & channels,
                                 const std::vector<int> & strides, int selected_layer, std::uint64_t seed);
  /// Default desk-scale extractor: channels 8/16/32, stride 2 each, layer 2.
  static FeatureExtractor standard(int in_channels, std::uint64_t seed = 19);

  static FeatureExtractor load(const std::filesystem::path & dir);
  void save(const std::filesystem::path & dir) const;

  int depth() const { return static_cast<int>(layers_.size()); }
  int selected_layer() const { return selected_; }
  int in_channels() const { return layers_.front().weight.dim(1); }
  const std::vector<Layer> & layers() const { return layers_; }

  /// Activations after layer i (1-based). Differentiable in x; weights are constants.
  ag::Var forward(const ag::Var & x, int layer) const;

private:
  std::vector<Layer> layers_;
  int selected_ = 1;
};

/// Feature map of the input at layer i (1-based); shape [N, C_i, H_i, W_i].
Tensor feature_extract(const Tensor & x, const FeatureExtractor & phi, int layer);

// Probability-domain losses. Inputs must lie strictly inside (0,1).
double adversarial_generator(const Tensor & d_fake, GeneratorMode mode = GeneratorMode::Paper);
double adversarial_discriminator(const Tensor & d_real, const Tensor & d_fake);
/// Relativistic-average losses on pre-sigmoid critic outputs: {g_loss, d_loss}.
std::pair<double, double> relativistic_adversarial(const Tensor & c_real, const Tensor & c_fake);

double event_similarity(const Tensor & stack_rec, const Tensor & stack_in, double alpha,
                        const FeatureExtractor & phi);
double identity(const Tensor & gen_out, const Tensor & target);
double total_variation(const Tensor & image);
double phase_total(double adv, double sim, double id, double var, const LossWeights & w);

// Differentiable forms used by the trainer and gradient checks.
namespace diff
{

ag::Var adversarial_generator(const ag::Var & d_fake, GeneratorMode mode);
ag::Var adversarial_discriminator(const ag::Var & d_real, const ag::Var & d_fake);
/// Same objectives from logits (d = sigmoid(logit)), stable for saturated critics.
ag::Var adversarial_generator_logits(const ag::Var & logits_fake, GeneratorMode mode);
ag::Var adversarial_discriminator_logits(const ag::Var & logits_real, const ag::Var & logits_fake);
ag::Var relativistic_generator(const ag::Var & c_real, const ag::Var & c_fake);
ag::Var relativistic_discriminator(const ag::Var & c_real, const ag::Var & c_fake);
ag::Var event_similarity(const ag::Var & stack_rec, const ag::Var & stack_in, double alpha,
                         const FeatureExtractor & phi);
ag::Var identity(const ag::Var & gen_out, const ag::Var & target);
ag::Var total_variation(const ag::Var & image);

}  // namespace diff

}  // namespace eventsr::losses
