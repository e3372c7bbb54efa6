#include "sfunet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sfunet/ops.hpp"

namespace sfunet::losses {

namespace {

void check_target(const Shape& s, const Labels& t) {
  if (t.n != s.n || t.h != s.h || t.w != s.w) {
    shape_error("loss: target [N,1,H,W] vs logits", Shape{t.n, 1, t.h, t.w}, s);
  }
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const int v = t.values[i];
    if (v < 0 || static_cast<std::size_t>(v) >= s.c) {
      throw std::out_of_range("loss: target class " + std::to_string(v) + " at flat index " +
                              std::to_string(i) + " outside [0, " + std::to_string(s.c) + ")");
    }
  }
}

}  // namespace

Tensor softmax_channels(const Tensor& logits) {
  const Shape& s = logits.shape();
  Tensor p(s);
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t q = 0; q < plane; ++q) {
      Real mx = logits[logits.index(n, 0, 0, 0) + q];
      for (std::size_t k = 1; k < s.c; ++k) mx = std::max(mx, logits[logits.index(n, k, 0, 0) + q]);
      Real z = 0;
      for (std::size_t k = 0; k < s.c; ++k) {
        const std::size_t i = logits.index(n, k, 0, 0) + q;
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
      }
      for (std::size_t k = 0; k < s.c; ++k) p[logits.index(n, k, 0, 0) + q] /= z;
    }
  }
  return p;
}

Var softmax_cross_entropy(const Var& logits, const Labels& target) {
  const Shape& s = logits.shape();
  check_target(s, target);
  const Tensor& x = logits.value();
  const std::size_t plane = s.plane();
  const Real inv_count = Real{1} / static_cast<Real>(s.n * plane);
  Real total = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t q = 0; q < plane; ++q) {
      Real mx = x[x.index(n, 0, 0, 0) + q];
      for (std::size_t k = 1; k < s.c; ++k) mx = std::max(mx, x[x.index(n, k, 0, 0) + q]);
      Real z = 0;
      for (std::size_t k = 0; k < s.c; ++k) z += std::exp(x[x.index(n, k, 0, 0) + q] - mx);
      const auto t = static_cast<std::size_t>(target.values[n * plane + q]);
      total += std::log(z) + mx - x[x.index(n, t, 0, 0) + q];
    }
  }
  return make_result<Real>(
      Tensor(Shape{1, 1, 1, 1}, total * inv_count), logits.requires_grad(),
      [logits, target, inv_count](const Tensor& g) {
        const Shape& s = logits.shape();
        Tensor p = softmax_channels(logits.value());
        Tensor* gx = logits.grad_sink();
        const std::size_t plane = s.plane();
        const Real scale = g[0] * inv_count;
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t q = 0; q < plane; ++q) {
            const auto t = static_cast<std::size_t>(target.values[n * plane + q]);
            for (std::size_t k = 0; k < s.c; ++k) {
              const std::size_t i = p.index(n, k, 0, 0) + q;
              (*gx)[i] += scale * (p[i] - (k == t ? Real{1} : Real{0}));
            }
          }
        }
      });
}

Var soft_dice(const Var& logits, const Labels& target, Real eps) {
  const Shape& s = logits.shape();
  check_target(s, target);
  Tensor p = softmax_channels(logits.value());
  const std::size_t plane = s.plane();
  std::vector<Real> inter(s.c, 0), psum(s.c, 0), gsum(s.c, 0);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t q = 0; q < plane; ++q) {
      const auto t = static_cast<std::size_t>(target.values[n * plane + q]);
      gsum[t] += 1;
      for (std::size_t k = 0; k < s.c; ++k) {
        const Real pk = p[p.index(n, k, 0, 0) + q];
        psum[k] += pk;
        if (k == t) inter[k] += pk;
      }
    }
  }
  Real mean_dice = 0;
  for (std::size_t k = 0; k < s.c; ++k) {
    mean_dice += (2 * inter[k] + eps) / (psum[k] + gsum[k] + eps);
  }
  mean_dice /= static_cast<Real>(s.c);

  return make_result<Real>(
      Tensor(Shape{1, 1, 1, 1}, Real{1} - mean_dice), logits.requires_grad(),
      [logits, target, eps, p = std::move(p), inter = std::move(inter),
       psum = std::move(psum), gsum = std::move(gsum)](const Tensor& g) {
        const Shape& s = logits.shape();
        const std::size_t plane = s.plane();
        const Real k_inv = Real{1} / static_cast<Real>(s.c);
        Tensor* gx = logits.grad_sink();
        std::vector<Real> dp(s.c);
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t q = 0; q < plane; ++q) {
            const auto t = static_cast<std::size_t>(target.values[n * plane + q]);
            Real dot = 0;
            for (std::size_t k = 0; k < s.c; ++k) {
              const Real den = psum[k] + gsum[k] + eps;
              const Real num = 2 * inter[k] + eps;
              const Real gk = k == t ? Real{1} : Real{0};
              dp[k] = -g[0] * k_inv * (2 * gk * den - num) / (den * den);
              dot += p[p.index(n, k, 0, 0) + q] * dp[k];
            }
            for (std::size_t k = 0; k < s.c; ++k) {
              const std::size_t i = p.index(n, k, 0, 0) + q;
              (*gx)[i] += p[i] * (dp[k] - dot);
            }
          }
        }
      });
}

Var total_loss(const Var& logits, const Labels& target, const LossWeights& w) {
  return ops::add(ops::scale(softmax_cross_entropy(logits, target), w.ce),
                  ops::scale(soft_dice(logits, target, w.dice_eps), w.dice));
}

}  // namespace sfunet::losses
