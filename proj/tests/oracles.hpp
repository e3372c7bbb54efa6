#pragma once

// Slow reference implementations the library is checked against.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "sfunet/metrics.hpp"
#include "sfunet/random.hpp"
#include "sfunet/tensor.hpp"

namespace oracle {

using sfunet::Complex;
using sfunet::ComplexTensor;
using sfunet::Real;
using sfunet::Shape;
using sfunet::Tensor;

inline Tensor random_tensor(Shape s, sfunet::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

/// f(u,v) = sum_{x,y} F(x,y) exp(-2 pi i (u x / H + v y / W)), straight from
/// the definition. Phases come from a table indexed by (u*x mod H) so the
/// sum itself carries no accumulated angle error.
inline ComplexTensor direct_dft2(const ComplexTensor& in, bool inverse = false) {
  const Shape& s = in.shape();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> th(s.h), tw(s.w);
  for (std::size_t k = 0; k < s.h; ++k) {
    const double a = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(s.h);
    th[k] = {std::cos(a), std::sin(a)};
  }
  for (std::size_t k = 0; k < s.w; ++k) {
    const double a = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(s.w);
    tw[k] = {std::cos(a), std::sin(a)};
  }
  ComplexTensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t u = 0; u < s.h; ++u) {
        for (std::size_t v = 0; v < s.w; ++v) {
          std::complex<double> acc = 0;
          for (std::size_t x = 0; x < s.h; ++x) {
            const auto ph = th[(u * x) % s.h];
            for (std::size_t y = 0; y < s.w; ++y) {
              const std::complex<double> f(in(n, c, x, y).real(), in(n, c, x, y).imag());
              acc += f * ph * tw[(v * y) % s.w];
            }
          }
          if (inverse) acc /= static_cast<double>(s.h * s.w);
          out(n, c, u, v) = Complex(static_cast<Real>(acc.real()), static_cast<Real>(acc.imag()));
        }
      }
    }
  }
  return out;
}

/// The same double sum evaluated as direct 1-D sums along rows, then
/// columns: O(HW(H+W)) instead of O(H^2 W^2), still without any FFT
/// factorization. Used where the full double loop is too slow (224x224).
inline ComplexTensor direct_dft2_separable(const ComplexTensor& in) {
  const Shape& s = in.shape();
  auto table = [](std::size_t n) {
    std::vector<std::complex<double>> t(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      t[k] = {std::cos(a), std::sin(a)};
    }
    return t;
  };
  const auto th = table(s.h), tw = table(s.w);
  ComplexTensor out(s);
  std::vector<std::complex<double>> rows(s.h * s.w);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t x = 0; x < s.h; ++x)
        for (std::size_t v = 0; v < s.w; ++v) {
          std::complex<double> acc = 0;
          for (std::size_t y = 0; y < s.w; ++y) {
            acc += std::complex<double>(in(n, c, x, y).real(), in(n, c, x, y).imag()) * tw[(v * y) % s.w];
          }
          rows[x * s.w + v] = acc;
        }
      for (std::size_t u = 0; u < s.h; ++u)
        for (std::size_t v = 0; v < s.w; ++v) {
          std::complex<double> acc = 0;
          for (std::size_t x = 0; x < s.h; ++x) acc += rows[x * s.w + v] * th[(u * x) % s.h];
          out(n, c, u, v) = Complex(static_cast<Real>(acc.real()), static_cast<Real>(acc.imag()));
        }
    }
  }
  return out;
}

inline ComplexTensor to_complex(const Tensor& t) {
  ComplexTensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = Complex(t[i], 0);
  return out;
}

/// Direct cross-correlation with zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const std::size_t ho = (xs.h + 2 * pad - ws.h) / stride + 1;
  const std::size_t wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor out(Shape{xs.n, ws.n, ho, wo});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = bias != nullptr ? (*bias)[co] : 0.0;
          for (std::size_t ci = 0; ci < xs.c; ++ci)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - pad;
                const long ix = static_cast<long>(ox * stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) || ix >= static_cast<long>(xs.w)) continue;
                acc += x(n, ci, iy, ix) * w(co, ci, ky, kx);
              }
          out(n, co, oy, ox) = static_cast<Real>(acc);
        }
  return out;
}

/// Stride-2 2x2 transposed convolution by scattering each input pixel.
inline Tensor conv_transpose2x2(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const Shape& xs = x.shape();
  const std::size_t cout = w.shape().c;
  Tensor out(Shape{xs.n, cout, 2 * xs.h, 2 * xs.w});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < 2 * xs.h; ++y)
        for (std::size_t xx = 0; xx < 2 * xs.w; ++xx) out(n, co, y, xx) = bias[co];
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t ci = 0; ci < xs.c; ++ci)
      for (std::size_t y = 0; y < xs.h; ++y)
        for (std::size_t xx = 0; xx < xs.w; ++xx)
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t a = 0; a < 2; ++a)
              for (std::size_t b = 0; b < 2; ++b)
                out(n, co, 2 * y + a, 2 * xx + b) += x(n, ci, y, xx) * w(ci, co, a, b);
  return out;
}

inline double dsc(const sfunet::metrics::Mask& p, const sfunet::metrics::Mask& g) {
  double inter = 0, sp = 0, sg = 0;
  for (std::size_t y = 0; y < p.h; ++y)
    for (std::size_t x = 0; x < p.w; ++x) {
      inter += p.at(y, x) && g.at(y, x);
      sp += p.at(y, x);
      sg += g.at(y, x);
    }
  return sp + sg == 0 ? 1.0 : 2 * inter / (sp + sg);
}

inline double iou(const sfunet::metrics::Mask& p, const sfunet::metrics::Mask& g) {
  double inter = 0, uni = 0;
  for (std::size_t y = 0; y < p.h; ++y)
    for (std::size_t x = 0; x < p.w; ++x) {
      inter += p.at(y, x) && g.at(y, x);
      uni += p.at(y, x) || g.at(y, x);
    }
  return uni == 0 ? 1.0 : inter / uni;
}

/// Boundary pixels: foreground with a background (or off-image) 4-neighbour.
inline std::vector<std::pair<long, long>> boundary_points(const sfunet::metrics::Mask& m) {
  std::vector<std::pair<long, long>> pts;
  const long h = static_cast<long>(m.h), w = static_cast<long>(m.w);
  auto fg = [&](long y, long x) { return y >= 0 && x >= 0 && y < h && x < w && m.at(y, x); };
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      if (fg(y, x) && (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)))
        pts.emplace_back(y, x);
  return pts;
}

/// numpy-style linear percentile of all pairwise-minimum boundary distances.
inline double hd95(const sfunet::metrics::Mask& p, const sfunet::metrics::Mask& g) {
  const auto pb = boundary_points(p);
  const auto gb = boundary_points(g);
  if (pb.empty() && gb.empty()) return 0.0;
  if (pb.empty() || gb.empty()) return std::sqrt(double(p.h * p.h + p.w * p.w));
  std::vector<double> d;
  auto nearest = [](std::pair<long, long> a, const std::vector<std::pair<long, long>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : set) {
      const double dy = double(a.first - b.first), dx = double(a.second - b.second);
      best = std::min(best, std::sqrt(dy * dy + dx * dx));
    }
    return best;
  };
  for (const auto& a : pb) d.push_back(nearest(a, gb));
  for (const auto& b : gb) d.push_back(nearest(b, pb));
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * double(d.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - double(lo)) * (d[hi] - d[lo]);
}

inline sfunet::metrics::Mask random_mask(std::size_t h, std::size_t w, double density,
                                         sfunet::Rng& rng) {
  sfunet::metrics::Mask m(h, w);
  for (auto& v : m.on) v = rng.bernoulli(density) ? 1 : 0;
  return m;
}

}  // namespace oracle
