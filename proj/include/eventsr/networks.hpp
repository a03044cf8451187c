#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "eventsr/autograd.hpp"
#include "eventsr/tensor.hpp"

namespace eventsr::nets
{

enum class NetKind { GeneratorRD, GeneratorS, Discriminator, Feedback, FeedbackS };

std::string kind_name(NetKind k);
NetKind parse_kind(const std::string & s);

struct NetSpec
{
  NetKind kind = NetKind::GeneratorRD;
  int channels = 16;
  int blocks = 4;
  int scale = 1;        // generator_s / feedback_s only
  int in_channels = 1;
  int out_channels = 1;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;

  friend bool operator==(const NetSpec &, const NetSpec &) = default;
};

// Desk-scale defaults for each family.
NetSpec generator_rd_spec(int in_channels);
NetSpec generator_s_spec(int scale);
NetSpec discriminator_spec();
NetSpec feedback_spec(int stack_frames);
NetSpec feedback_s_spec(int stack_frames, int scale);

/// Named arrays for one network. Immutable value; updates produce new Params.
struct Params
{
  NetSpec spec;
  std::uint64_t seed = 0;
  std::map<std::string, Tensor> arrays;

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const Params & a, const Params & b)
  {
    return a.spec == b.spec && a.arrays == b.arrays;
  }
};

/// Deterministic initialization from (spec, seed).
Params build(const NetSpec & spec, std::uint64_t seed);
/// Same shapes as build(), every entry zero.
Params zeros(const NetSpec & spec);

using ParamVars = std::map<std::string, ag::Var>;
ParamVars bind(const Params & p, bool requires_grad);

/// Differentiable forward for any family. Discriminators return raw critic
/// scores [N,1,1,1]; the other families end in a sigmoid.
ag::Var forward(const NetSpec & spec, const ParamVars & vars, const ag::Var & x);

enum class DiscMode { Standard, Relativistic };

Tensor forward_generator_rd(const Params & p, const Tensor & input);
Tensor forward_generator_s(const Params & p, const Tensor & lr);
Tensor forward_feedback(const Params & p, const Tensor & image);
/// Probabilities in (0,1) in standard mode, unbounded critic in relativistic mode.
Tensor forward_discriminator(const Params & p, const Tensor & image, DiscMode mode = DiscMode::Standard);

void to_json(nlohmann::json & j, const NetSpec & s);
void from_json(const nlohmann::json & j, NetSpec & s);

/// Writes one TNS1 (float64) file per array as <dir>/<prefix>.<name>.tns.
void save_arrays(const std::filesystem::path & dir, const std::string & prefix,
                 const std::map<std::string, Tensor> & arrays);
/// Reads the arrays a given spec requires.
std::map<std::string, Tensor> load_arrays(const std::filesystem::path & dir, const std::string & prefix,
                                          const std::map<std::string, Tensor> & layout);

}  // namespace eventsr::nets
