#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eventsr/config.hpp"
#include "eventsr/losses.hpp"
#include "eventsr/networks.hpp"

namespace eventsr::train
{

/// The four objective components of one generator update plus their weighted
/// total, and the discriminator loss of the same iteration.
struct LossRecord
{
  std::int64_t step = 0;
  double adv = 0.0;
  double sim = 0.0;
  double id = 0.0;
  double var = 0.0;
  double total = 0.0;
  double d_loss = 0.0;
};

/// Adam first/second moments for every array of one network.
struct Moments
{
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;

  static Moments zeros_like(const nets::Params & p);
};

struct TrainState
{
  static constexpr std::size_t kHistoryCapacity = 4096;

  int phase = 1;
  std::map<std::string, nets::Params> nets;  // G_r, G_d, G_s, D_*, F_*
  std::map<std::string, Moments> moments;
  std::int64_t step = 0;
  std::deque<LossRecord> history;  // most recent kHistoryCapacity records

  const nets::Params & net(const std::string & name) const;
  bool has(const std::string & name) const { return nets.count(name) != 0; }
};

/// One training example set: event stacks [N,n,h,w], unpaired target images
/// [N,1,H,W] and the identity-path inputs [N,1,h,w] (equal to the targets
/// except in phase 3, where they are the downsampled targets).
struct Batch
{
  Tensor stacks;
  Tensor targets;
  Tensor identity_inputs;
};

/// Names of the phase's discriminator and feedback networks.
std::string discriminator_name(int phase);
std::string feedback_name(int phase);
/// Networks that are created from scratch in a phase.
std::vector<std::string> new_networks(int phase);

/// Spec of a named network under a config.
nets::NetSpec network_spec(const std::string & name, const PhaseConfig & cfg);
/// Seed a named network is built from in a phase.
std::uint64_t network_seed(const std::string & name, const PhaseConfig & cfg);

/// Builds the phase's new networks from scratch and carries earlier
/// generators over from `previous` (required for phases 2 and 3).
TrainState init_state(const PhaseConfig & cfg, const TrainState * previous = nullptr);

losses::FeatureExtractor make_feature_extractor(const PhaseConfig & cfg);

/// One discriminator update followed by one generator(+feedback) update.
/// Throws NumericalError when any loss is non-finite.
std::pair<TrainState, LossRecord> train_step(TrainState state, const Batch & batch, const PhaseConfig & cfg,
                                             const losses::FeatureExtractor & phi);

/// Applies one Adam update in place: m,v moments with bias correction at
/// (1-based) step t.
void adam_update(Tensor & param, Tensor & m, Tensor & v, const Tensor & grad, double lr, std::int64_t t,
                 double beta1, double beta2, double eps);

/// Cascaded generator output G_r, G_d(G_r) or G_s(G_d(G_r)) for `upto` = 1, 2, 3.
Tensor run_chain(const TrainState & state, const Tensor & stacks, int upto);

/// Passes each APS image through G_r (identity path) to obtain clean targets.
std::vector<Tensor> clean_aps(const std::vector<Tensor> & images, const nets::Params & g_r);

/// Sum of the per-phase objective totals (logged, not optimized jointly).
double total_end_to_end_loss(const std::array<LossRecord, 3> & per_phase);

// ---- augmentation

struct AugmentDraw
{
  int rotation = 0;  // quarter turns counter-clockwise
  bool flip = false;  // horizontal mirror, applied after rotation
};

/// Counter-clockwise quarter turn k maps input (row y, col x) of an HxW plane
/// to output (row W-1-x, col y); the flip maps column x to W-1-x.
Tensor apply_augment(const Tensor & t, const AugmentDraw & draw);
AugmentDraw draw_augment(std::mt19937_64 & rng);
/// Independent draws for the stack and the image (training is unpaired).
std::pair<Tensor, Tensor> augment(const Tensor & stack, const Tensor & image, std::mt19937_64 & rng,
                                  bool rotate = true);

// ---- data and orchestration

/// Stacks and target images gathered from manifests for one phase.
struct PhaseData
{
  std::vector<Tensor> stacks;   // each [1,n,h,w]
  std::vector<Tensor> targets;  // each [1,1,H,W]
};

PhaseData load_phase_data(const PhaseConfig & cfg);

/// Draws batches deterministically from the seed: stacks in shuffled epochs,
/// targets uniformly with replacement, independent augmentations.
class BatchSampler
{
public:
  BatchSampler(const PhaseData & data, const PhaseConfig & cfg);
  Batch next();

private:
  const PhaseData & data_;
  const PhaseConfig & cfg_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// Checkpoint directory: spec.json, <net>.<array>.tns weights,
/// <net>.m.<array>.tns / <net>.v.<array>.tns Adam moments, loss_log.csv.
void save_checkpoint(const std::filesystem::path & dir, const TrainState & state, const Config & cfg,
                     const std::vector<LossRecord> & log);
TrainState load_checkpoint(const std::filesystem::path & dir);
std::vector<LossRecord> read_loss_log(const std::filesystem::path & csv);

/// Runs cfg.iterations steps and writes a checkpoint to out_dir.
/// Phases 2 and 3 require `init` to hold a checkpoint of the previous phase.
TrainState train_phase(const Config & cfg, const std::optional<std::filesystem::path> & init,
                       const std::filesystem::path & out_dir, bool verbose = false);

}  // namespace eventsr::train
