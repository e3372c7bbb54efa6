#pragma once

#include <array>
#include <string>
#include <vector>

#include "sfunet/autograd.hpp"
#include "sfunet/fourier.hpp"
#include "sfunet/random.hpp"

namespace sfunet::blocks {

/// Kaiming-uniform (fan-in, ReLU gain) weights, zero bias.
class Conv2d {
 public:
  Conv2d(ParameterRegistry& reg, const std::string& name, std::size_t cin,
         std::size_t cout, std::size_t kernel, int padding, bool with_bias,
         Rng& rng);

  Var operator()(const Var& x) const;

  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }

 private:
  Parameter* weight_;
  Parameter* bias_ = nullptr;
  int padding_;
};

/// 2x2, stride-2 transposed convolution.
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2(ParameterRegistry& reg, const std::string& name,
                   std::size_t cin, std::size_t cout, Rng& rng);

  Var operator()(const Var& x) const;

  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_;
  Parameter* bias_;
};

/// VGG16 stage: `depth` 3x3 convolutions each followed by ReLU.
class EncoderStage {
 public:
  EncoderStage(ParameterRegistry& reg, const std::string& name,
               std::size_t cin, std::size_t cout, std::size_t depth, Rng& rng);

  Var forward(const Var& x) const;
  std::size_t out_channels() const { return cout_; }

 private:
  std::vector<Conv2d> convs_;
  std::size_t cout_;
};

inline constexpr std::array<std::size_t, 5> kStageChannels{64, 128, 256, 512, 512};
inline constexpr std::array<std::size_t, 5> kStageDepths{2, 2, 3, 3, 3};

/// Five VGG16 stages with 2x2 max pooling between them. Feature i is tapped
/// after stage i's convolutions, before the following pool.
class Encoder {
 public:
  Encoder(ParameterRegistry& reg, std::size_t input_channels, Rng& rng);

  std::array<Var, 5> forward(const Var& image) const;

 private:
  std::vector<EncoderStage> stages_;
};

/// Multi-scale progressive channel attention over two adjacent encoder
/// levels: pooled channel descriptors from both levels pass through their
/// own 1x1 conv, are concatenated and fused by a 1x1 conv plus sigmoid into
/// one attention vector, which is split back per level. The reweighted
/// coarser level is upsampled by a transposed conv and added to the
/// reweighted finer level.
class MPCABlock {
 public:
  MPCABlock(ParameterRegistry& reg, const std::string& name, std::size_t c_cur,
            std::size_t c_next, Rng& rng);

  struct Output {
    Var fused;      // [N, c_cur, h, w]
    Var attention;  // [N, c_cur + c_next, 1, 1]
  };

  Output forward_detailed(const Var& f_cur, const Var& f_next) const;
  Var forward(const Var& f_cur, const Var& f_next) const {
    return forward_detailed(f_cur, f_next).fused;
  }

  Conv2d& reduce_cur() { return reduce_cur_; }
  Conv2d& reduce_next() { return reduce_next_; }
  Conv2d& fuse() { return fuse_; }
  ConvTranspose2x2& up() { return up_; }

 private:
  std::size_t c_cur_;
  std::size_t c_next_;
  Conv2d reduce_cur_;
  Conv2d reduce_next_;
  Conv2d fuse_;
  ConvTranspose2x2 up_;
};

/// CBAM-style spatial attention returning the attended feature
/// x * sigmoid(conv7x7([max_c x, mean_c x])).
class SpatialAttention {
 public:
  SpatialAttention(ParameterRegistry& reg, const std::string& name, Rng& rng);

  Var map(const Var& x) const;
  Var forward(const Var& x) const;

  Conv2d& conv() { return conv_; }

 private:
  Conv2d conv_;
};

/// Frequency-spatial attention. Bound to one (h, w) resolution.
class FSABlock {
 public:
  FSABlock(ParameterRegistry& reg, const std::string& name, std::size_t channels,
           std::size_t h, std::size_t w, double rho, fourier::FilterMode mode,
           Rng& rng);

  /// Low band scaled by the learnable filter, high band passed through, then
  /// back to the spatial domain.
  Var frequency_branch(const Var& x) const;
  Var forward(const Var& x) const;

  const fourier::FreqMaskPair& masks() const { return masks_; }
  const fourier::GlobalFilter& filter() const { return filter_; }
  SpatialAttention& spatial() { return sa_; }

 private:
  void check_input(const Var& x) const;

  std::size_t channels_;
  std::size_t h_;
  std::size_t w_;
  fourier::FreqMaskPair masks_;
  fourier::GlobalFilter filter_;
  SpatialAttention sa_;
};

/// relu(conv3x3(relu(conv3x3(concat(skip, upsample2x(below))))))
class DecoderBlock {
 public:
  DecoderBlock(ParameterRegistry& reg, const std::string& name, std::size_t c_skip,
               std::size_t c_below, std::size_t c_out, Rng& rng);

  Var forward(const Var& skip, const Var& below) const;

 private:
  Conv2d conv0_;
  Conv2d conv1_;
};

/// conv3x3 + ReLU, then conv3x3 to class logits.
class PredictionHead {
 public:
  PredictionHead(ParameterRegistry& reg, const std::string& name, std::size_t cin,
                 std::size_t n_classes, Rng& rng);

  Var forward(const Var& x) const;

 private:
  Conv2d conv0_;
  Conv2d conv1_;
};

}  // namespace sfunet::blocks
