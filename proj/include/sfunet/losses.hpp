#pragma once

#include "sfunet/autograd.hpp"

namespace sfunet::losses {

/// Mean over all pixels of -log softmax(logits)[target]; max-subtracted.
/// Throws std::out_of_range on a target outside [0, K).
Var softmax_cross_entropy(const Var& logits, const Labels& target);

/// 1 - mean_k (2 sum p_k g_k + eps) / (sum p_k + sum g_k + eps), with p the
/// softmax over classes and g the one-hot target; sums run over N*H*W.
Var soft_dice(const Var& logits, const Labels& target, Real eps = Real{1e-5});

struct LossWeights {
  Real ce = 1;
  Real dice = 1;
  Real dice_eps = Real{1e-5};
};

Var total_loss(const Var& logits, const Labels& target, const LossWeights& w = {});

/// Per-pixel class probabilities.
Tensor softmax_channels(const Tensor& logits);

}  // namespace sfunet::losses
