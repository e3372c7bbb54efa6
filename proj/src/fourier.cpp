#include "sfunet/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sfunet::fourier {

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("FftPlan: length must be positive");
  std::size_t rest = n;
  for (std::size_t p = 2; p * p <= rest; ++p) {
    while (rest % p == 0) {
      factors_.push_back(p);
      rest /= p;
    }
  }
  if (rest > 1) factors_.push_back(rest);
  twiddles_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const long double angle =
        -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(k) /
        static_cast<long double>(n);
    twiddles_[k] = Complex(static_cast<Real>(std::cos(angle)),
                           static_cast<Real>(std::sin(angle)));
  }
}

void FftPlan::execute(const Complex* in, std::size_t in_stride, Complex* out,
                      bool inverse) const {
  run(in, in_stride, out, 0, n_, 1, inverse);
}

// Decimation in time: out holds p consecutive length-m sub-transforms of the
// stride-p subsequences, which are then combined by radix-p butterflies.
void FftPlan::run(const Complex* in, std::size_t in_stride, Complex* out,
                  std::size_t level, std::size_t n, std::size_t tw_stride,
                  bool inverse) const {
  if (level == factors_.size()) {
    out[0] = in[0];
    return;
  }
  const std::size_t p = factors_[level];
  const std::size_t m = n / p;
  for (std::size_t r = 0; r < p; ++r) {
    run(in + r * in_stride, in_stride * p, out + r * m, level + 1, m,
        tw_stride * p, inverse);
  }
  std::vector<Complex> t(p);
  const std::size_t root_p = n_ / p;
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) {
      t[r] = out[r * m + k] * twiddle(r * k * tw_stride, inverse);
    }
    for (std::size_t q = 0; q < p; ++q) {
      Complex acc = t[0];
      for (std::size_t r = 1; r < p; ++r) {
        acc += t[r] * twiddle((r * q % p) * root_p, inverse);
      }
      out[q * m + k] = acc;
    }
  }
}

namespace {

// In-place 2D transform of every plane, rows first then columns.
void transform_planes(ComplexTensor& t, bool inverse) {
  const Shape& s = t.shape();
  if (s.numel() == 0) return;
  const FftPlan rows(s.w);
  const FftPlan cols(s.h);
  std::vector<Complex> buf(std::max(s.h, s.w));
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      Complex* plane = t.plane(n, c).data();
      for (std::size_t y = 0; y < s.h; ++y) {
        rows.execute(plane + y * s.w, 1, buf.data(), inverse);
        std::copy(buf.begin(), buf.begin() + static_cast<long>(s.w), plane + y * s.w);
      }
      for (std::size_t x = 0; x < s.w; ++x) {
        cols.execute(plane + x, s.w, buf.data(), inverse);
        for (std::size_t y = 0; y < s.h; ++y) plane[y * s.w + x] = buf[y];
      }
    }
  }
}

ComplexTensor to_complex(const Tensor& x) {
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = Complex(x[i], 0);
  return out;
}

}  // namespace

ComplexTensor dft2(const Tensor& x) {
  ComplexTensor out = to_complex(x);
  transform_planes(out, false);
  return out;
}

ComplexTensor dft2(const ComplexTensor& x) {
  ComplexTensor out = x;
  transform_planes(out, false);
  return out;
}

ComplexTensor idft2(const ComplexTensor& f) {
  ComplexTensor out = f;
  transform_planes(out, true);
  const Real inv = Real{1} / static_cast<Real>(f.shape().plane());
  for (Complex& v : out.data()) v *= inv;
  return out;
}

// For a real loss L and complex z = a + ib, gradients are stored as
// dL/da + i dL/db. A linear map y = M z then back-propagates as M^H g.
CVar dft2(const Var& x) {
  return make_result<Complex>(dft2(x.value()), x.requires_grad(),
                              [x](const ComplexTensor& g) {
                                ComplexTensor back = g;
                                transform_planes(back, true);
                                Tensor* gx = x.grad_sink();
                                for (std::size_t i = 0; i < back.numel(); ++i) {
                                  (*gx)[i] += back[i].real();
                                }
                              });
}

CVar idft2(const CVar& f) {
  return make_result<Complex>(idft2(f.value()), f.requires_grad(),
                              [f](const ComplexTensor& g) {
                                ComplexTensor back = dft2(g);
                                const Real inv =
                                    Real{1} / static_cast<Real>(g.shape().plane());
                                ComplexTensor* gf = f.grad_sink();
                                for (std::size_t i = 0; i < back.numel(); ++i) {
                                  (*gf)[i] += back[i] * inv;
                                }
                              });
}

FreqMaskPair build_masks(std::size_t h, std::size_t w, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw std::invalid_argument("build_masks: rho must lie in (0, 1], got " +
                                std::to_string(rho));
  }
  if (h == 0 || w == 0) throw std::invalid_argument("build_masks: empty plane");
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(rho * static_cast<double>(std::min(h, w)))));
  FreqMaskPair m{Tensor(Shape{1, 1, h, w}), Tensor(Shape{1, 1, h, w}, Real{1}), n};
  const std::size_t r0 = h / 2 - n / 2;
  const std::size_t c0 = w / 2 - n / 2;
  for (std::size_t u = r0; u < r0 + n; ++u) {
    for (std::size_t v = c0; v < c0 + n; ++v) {
      m.low(0, 0, u, v) = Real{1};
      m.high(0, 0, u, v) = Real{0};
    }
  }
  return m;
}

namespace {

// Natural-order plane offset -> centered-order offset.
std::vector<std::size_t> centered_offsets(std::size_t h, std::size_t w) {
  std::vector<std::size_t> idx(h * w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      idx[u * w + v] = centered_index(u, h) * w + centered_index(v, w);
    }
  }
  return idx;
}

}  // namespace

CVar apply_mask(const CVar& f, const Tensor& mask) {
  const Shape& s = f.shape();
  if (mask.shape() != Shape{1, 1, s.h, s.w}) {
    shape_error("apply_mask: mask vs spectrum plane", mask.shape(), s);
  }
  const auto idx = centered_offsets(s.h, s.w);
  std::vector<Real> m(idx.size());
  for (std::size_t q = 0; q < idx.size(); ++q) m[q] = mask[idx[q]];
  ComplexTensor out(s);
  const std::size_t p = s.plane();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f.value()[i] * m[i % p];
  return make_result<Complex>(std::move(out), f.requires_grad(),
                              [f, m = std::move(m), p](const ComplexTensor& g) {
                                ComplexTensor* gf = f.grad_sink();
                                for (std::size_t i = 0; i < g.numel(); ++i) {
                                  (*gf)[i] += g[i] * m[i % p];
                                }
                              });
}

CVar apply_filter(const CVar& f, const Var& filter_values, FilterMode mode) {
  const Shape& s = f.shape();
  const Shape expected{1, mode == FilterMode::broadcast ? std::size_t{1} : s.c, s.h, s.w};
  if (filter_values.shape() != expected) {
    shape_error("apply_filter: filter vs expected shape", filter_values.shape(), expected);
  }
  const auto idx = centered_offsets(s.h, s.w);
  const std::size_t p = s.plane();
  const std::size_t fc = expected.c;
  auto filter_at = [idx, p, fc](std::size_t c, std::size_t q) {
    return (fc == 1 ? 0 : c) * p + idx[q];
  };
  ComplexTensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = f.value().plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t q = 0; q < p; ++q) dst[q] = src[q] * filter_values.value()[filter_at(c, q)];
    }
  }
  return make_result<Complex>(
      std::move(out), f.requires_grad() || filter_values.requires_grad(),
      [f, filter_values, filter_at](const ComplexTensor& g) {
        const Shape& s = f.shape();
        const std::size_t p = s.plane();
        ComplexTensor* gf = f.grad_sink();
        Tensor* gw = filter_values.grad_sink();
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t c = 0; c < s.c; ++c) {
            auto gp = g.plane(n, c);
            auto zp = f.value().plane(n, c);
            for (std::size_t q = 0; q < p; ++q) {
              const std::size_t j = filter_at(c, q);
              if (gf != nullptr) gf->plane(n, c)[q] += gp[q] * filter_values.value()[j];
              if (gw != nullptr) (*gw)[j] += (std::conj(zp[q]) * gp[q]).real();
            }
          }
        }
      });
}

CVar add(const CVar& a, const CVar& b) {
  if (a.shape() != b.shape()) shape_error("fourier::add: shape mismatch", a.shape(), b.shape());
  ComplexTensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<Complex>(std::move(out), a.requires_grad() || b.requires_grad(),
                              [a, b](const ComplexTensor& g) {
                                for (const CVar* v : {&a, &b}) {
                                  if (ComplexTensor* gv = v->grad_sink()) {
                                    for (std::size_t i = 0; i < g.numel(); ++i) (*gv)[i] += g[i];
                                  }
                                }
                              });
}

Var take_real(const CVar& z) {
  Tensor out(z.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = z.value()[i].real();
  return make_result<Real>(std::move(out), z.requires_grad(), [z](const Tensor& g) {
    ComplexTensor* gz = z.grad_sink();
    for (std::size_t i = 0; i < g.numel(); ++i) (*gz)[i] += Complex(g[i], 0);
  });
}

Var sum_abs2(const CVar& z) {
  Real acc = 0;
  for (const Complex& v : z.value().data()) acc += std::norm(v);
  return make_result<Real>(Tensor(Shape{1, 1, 1, 1}, acc), z.requires_grad(),
                           [z](const Tensor& g) {
                             ComplexTensor* gz = z.grad_sink();
                             for (std::size_t i = 0; i < gz->numel(); ++i) {
                               (*gz)[i] += Real{2} * g[0] * z.value()[i];
                             }
                           });
}

std::vector<std::uint8_t> log_magnitude_image(const std::vector<Real>& mag) {
  Real peak = 0;
  for (Real m : mag) peak = std::max(peak, std::log1p(std::abs(m)));
  std::vector<std::uint8_t> out(mag.size(), 0);
  if (peak <= 0) return out;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    const Real v = std::log1p(std::abs(mag[i])) / peak * Real{255};
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, Real{0}, Real{255})));
  }
  return out;
}

}  // namespace sfunet::fourier
