#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sfunet/autograd.hpp"

namespace sfunet::fourier {

/// One-dimensional complex DFT of any length. Lengths are factored into
/// primes and evaluated with mixed-radix Cooley-Tukey; a prime length
/// degenerates to the direct O(n^2) sum.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const { return n_; }

  /// out[k] = sum_x in[x * in_stride] * exp(sign * 2*pi*i * k*x / n) with
  /// sign = -1 (forward) or +1 (inverse, unnormalized).
  void execute(const Complex* in, std::size_t in_stride, Complex* out,
               bool inverse) const;

 private:
  void run(const Complex* in, std::size_t in_stride, Complex* out,
           std::size_t level, std::size_t n, std::size_t tw_stride,
           bool inverse) const;
  Complex twiddle(std::size_t k, bool inverse) const {
    const Complex& t = twiddles_[k % n_];
    return inverse ? std::conj(t) : t;
  }

  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<Complex> twiddles_;  // exp(-2*pi*i*k/n)
};

/// Forward 2D DFT of every (n, c) plane:
/// f(U,V) = sum_{x,y} F(x,y) exp(-2*pi*i*(U*x/H + V*y/W)).
ComplexTensor dft2(const Tensor& x);
ComplexTensor dft2(const ComplexTensor& x);
/// Inverse 2D DFT with the 1/(H*W) normalization.
ComplexTensor idft2(const ComplexTensor& f);

CVar dft2(const Var& x);
CVar idft2(const CVar& f);

/// Position of natural-order frequency index u in the centered (DC in the
/// middle) ordering of a length-n axis.
inline std::size_t centered_index(std::size_t u, std::size_t n) {
  return (u + n / 2) % n;
}

/// Complementary low/high masks over the centered spectrum, each [1,1,H,W].
struct FreqMaskPair {
  Tensor low;
  Tensor high;
  std::size_t side_n = 0;
};

/// The low mask is an n x n block of ones centered on the DC bin, with
/// n = max(1, floor(rho * min(H, W))). rho must lie in (0, 1].
FreqMaskPair build_masks(std::size_t h, std::size_t w, double rho);

/// Multiplies every (n, c) plane of a natural-order spectrum by a
/// centered-order [1,1,H,W] mask.
CVar apply_mask(const CVar& f, const Tensor& mask);

enum class FilterMode { broadcast, per_channel };

/// Learnable real multiplier over the centered spectrum; values are
/// [1,1,H,W] (broadcast) or [1,C,H,W] (per_channel).
struct GlobalFilter {
  FilterMode mode = FilterMode::broadcast;
  Parameter* values = nullptr;
};

/// Elementwise product of the spectrum with the filter values (centered
/// order), broadcast across channels in broadcast mode.
CVar apply_filter(const CVar& f, const Var& filter_values, FilterMode mode);

CVar add(const CVar& a, const CVar& b);

/// Real part. The gradient reaches only the real components.
Var take_real(const CVar& z);

/// Sum of squared magnitudes as a scalar.
Var sum_abs2(const CVar& z);

/// log1p-scaled magnitude normalized by the plane's maximum into 0..255.
std::vector<std::uint8_t> log_magnitude_image(const std::vector<Real>& mag);

}  // namespace sfunet::fourier
