#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfunet/checkpoint.hpp"
#include "sfunet/data.hpp"
#include "sfunet/losses.hpp"
#include "sfunet/metrics.hpp"
#include "sfunet/network.hpp"

namespace sfunet::training {

struct AugmentConfig {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_rotate = 0.5;
  /// Off: rotations by k*90 degrees. On: uniform angle in
  /// [-max_angle_deg, max_angle_deg], bilinear image, nearest labels.
  bool arbitrary_rotation = false;
  double max_angle_deg = 30.0;
};

struct TrainConfig {
  double lr0 = 1e-4;
  std::size_t epochs = 200;
  std::size_t batch_size = 8;
  double poly_power = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double dice_epsilon = 1e-5;
  double w_ce = 1.0;
  double w_dice = 1.0;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig aug;
  /// Top-k checkpoints retained by validation IoU.
  std::size_t keep_best = 3;

  void validate() const;
  bool set(const std::string& key, const std::string& value);
};

/// lr0 * (1 - iter/max_iter)^power.
double poly_lr(std::size_t iter, std::size_t max_iter, double lr0, double power);

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// Adam with bias correction and optional decoupled weight decay.
class Adam {
 public:
  Adam(ParameterRegistry& registry, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
       double weight_decay = 0.0);

  /// Updates every trainable parameter from its accumulated gradient. The
  /// caller zeroes gradients afterwards.
  void step(double lr);

  const OptimizerState& state() const { return state_; }

  std::vector<NamedTensor> export_state() const;
  void import_state(const std::vector<NamedTensor>& tensors);

 private:
  std::vector<Parameter*> params_;
  OptimizerState state_;
  double beta1_, beta2_, eps_, weight_decay_;
};

void hflip(SegmentationSample& s);
void vflip(SegmentationSample& s);
/// Counter-clockwise by 90 degrees; H and W swap.
void rot90(SegmentationSample& s);
void rotate_degrees(SegmentationSample& s, double degrees);

/// Independent coin flips for each transform; label changes are pure index
/// permutations unless arbitrary rotation is enabled.
SegmentationSample augment(SegmentationSample s, const AugmentConfig& cfg, Rng& rng);

/// Thrown when the loss becomes non-finite.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::size_t epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;          // rate used for the epoch's first step
  double train_loss = 0;
  double val_dsc = 0;
  double val_iou = 0;

  /// `epoch<TAB>lr<TAB>train_loss<TAB>val_dsc<TAB>val_iou`
  std::string to_line() const;
};

struct RetainedCheckpoint {
  std::size_t epoch = 0;
  double val_iou = 0;
  std::vector<char> bytes;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::vector<double> lr_trace;            // per iteration
  std::vector<RetainedCheckpoint> best;    // descending val IoU
};

/// Per epoch: shuffle, augment, forward, total loss, backward, Adam step with
/// the poly schedule per iteration; then validation DSC/IoU. The best
/// `keep_best` epochs by validation IoU are kept as serialized checkpoints.
TrainResult train_loop(Model& model, const std::vector<SegmentationSample>& train,
                       const std::vector<SegmentationSample>& val, const TrainConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch = {});

struct AblationRow {
  std::string variant;
  bool use_mpca = true;
  bool use_fsa = true;
  std::size_t parameters = 0;
  std::size_t best_epoch = 0;
  double val_iou = 0;
  metrics::MetricReport test;
};

/// Trains the four MPCA/FSA on-off variants of `base` with identical
/// settings, restores each one's best validation checkpoint and evaluates
/// it on `test`.
std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& cfg,
                                      const std::vector<SegmentationSample>& train,
                                      const std::vector<SegmentationSample>& val,
                                      const std::vector<SegmentationSample>& test);

/// Tab-separated table, one row per variant.
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace sfunet::training
