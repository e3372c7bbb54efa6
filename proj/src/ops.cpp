#include "sfunet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace sfunet::ops {

namespace {

using RowMatrix =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Upper bound on im2col buffer entries. Small images are batched into one
// GEMM; large ones are split into bands of output rows.
constexpr std::size_t kMaxColumnEntries = std::size_t{1} << 23;

bool any_grad(const Var& a) { return a.requires_grad(); }
bool any_grad(const Var& a, const Var& b) {
  return a.requires_grad() || (b.defined() && b.requires_grad());
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

struct ConvGeometry {
  std::size_t cin, cout, kh, kw, h, w, ho, wo;
  int stride, pad;
};

// Output rows [oh0, oh1) of image n; one GEMM covers a list of pieces.
struct Piece {
  std::size_t n, oh0, oh1;
};

// Output columns [lo, hi) of a kernel tap read in-bounds input pixels; the
// rest fall into the zero padding.
struct TapRange {
  std::size_t lo, hi;
  long shift;  // input column = output column * stride + shift
};

TapRange tap_range(const ConvGeometry& g, std::size_t kj) {
  const long shift = static_cast<long>(kj) - g.pad;
  long lo = 0;
  while (lo < static_cast<long>(g.wo) && lo * g.stride + shift < 0) ++lo;
  long hi = lo;
  while (hi < static_cast<long>(g.wo) && hi * g.stride + shift < static_cast<long>(g.w)) ++hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), shift};
}

// Writes the patch columns of one piece starting at column `col0` of `cols`
// (k rows x `ld` columns).
void im2col(std::span<const Real> img, const ConvGeometry& g, const Piece& pc,
            std::size_t col0, std::size_t ld, Real* cols) {
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const Real* plane = img.data() + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        const TapRange t = tap_range(g, kj);
        Real* dst = cols + row * ld + col0;
        for (std::size_t oh = pc.oh0; oh < pc.oh1; ++oh, dst += g.wo) {
          const long ih = static_cast<long>(oh) * g.stride - g.pad + static_cast<long>(ki);
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, Real{0});
            continue;
          }
          const Real* src = plane + ih * static_cast<long>(g.w) + t.shift;
          std::fill(dst, dst + t.lo, Real{0});
          if (g.stride == 1) {
            std::copy(src + t.lo, src + t.hi, dst + t.lo);
          } else {
            for (std::size_t ow = t.lo; ow < t.hi; ++ow) dst[ow] = src[ow * g.stride];
          }
          std::fill(dst + t.hi, dst + g.wo, Real{0});
        }
      }
    }
  }
}

void col2im(const Real* cols, std::size_t col0, std::size_t ld, const ConvGeometry& g,
            const Piece& pc, std::span<Real> img) {
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    Real* plane = img.data() + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        const TapRange t = tap_range(g, kj);
        const Real* src = cols + row * ld + col0;
        for (std::size_t oh = pc.oh0; oh < pc.oh1; ++oh, src += g.wo) {
          const long ih = static_cast<long>(oh) * g.stride - g.pad + static_cast<long>(ki);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          Real* dst = plane + ih * static_cast<long>(g.w) + t.shift;
          for (std::size_t ow = t.lo; ow < t.hi; ++ow) dst[ow * g.stride] += src[ow];
        }
      }
    }
  }
}

// Groups of pieces, each group small enough for one patch matrix.
std::vector<std::vector<Piece>> plan_pieces(const ConvGeometry& g, std::size_t batch) {
  const std::size_t per_row = std::max<std::size_t>(g.cin * g.kh * g.kw * g.wo, 1);
  const std::size_t rows_fit = std::max<std::size_t>(kMaxColumnEntries / per_row, 1);
  std::vector<std::vector<Piece>> groups;
  if (rows_fit >= g.ho) {
    const std::size_t images = rows_fit / g.ho;
    for (std::size_t n = 0; n < batch; n += images) {
      std::vector<Piece> group;
      for (std::size_t i = n; i < std::min(batch, n + images); ++i) group.push_back({i, 0, g.ho});
      groups.push_back(std::move(group));
    }
  } else {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t oh0 = 0; oh0 < g.ho; oh0 += rows_fit) {
        groups.push_back({Piece{n, oh0, std::min(g.ho, oh0 + rows_fit)}});
      }
    }
  }
  return groups;
}

std::size_t group_columns(const std::vector<Piece>& group, const ConvGeometry& g) {
  std::size_t cols = 0;
  for (const Piece& p : group) cols += (p.oh1 - p.oh0) * g.wo;
  return cols;
}

void check_bias(const Var& bias, std::size_t channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.shape() != Shape{1, channels, 1, 1}) {
    shape_error(std::string(op) + ": bias shape", bias.shape(),
                Shape{1, channels, 1, 1});
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.c != ws.c) shape_error("conv2d: input channels vs weight Cin", xs, ws);
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv2d: stride must be >= 1, padding >= 0");
  }
  if (xs.h + 2 * static_cast<std::size_t>(padding) < ws.h ||
      xs.w + 2 * static_cast<std::size_t>(padding) < ws.w) {
    shape_error("conv2d: kernel larger than padded input", xs, ws);
  }
  check_bias(bias, ws.n, "conv2d");

  ConvGeometry g{};
  g.cin = xs.c;
  g.cout = ws.n;
  g.kh = ws.h;
  g.kw = ws.w;
  g.h = xs.h;
  g.w = xs.w;
  g.stride = stride;
  g.pad = padding;
  g.ho = (xs.h + 2 * padding - ws.h) / stride + 1;
  g.wo = (xs.w + 2 * padding - ws.w) / stride + 1;

  const Eigen::Index k = static_cast<Eigen::Index>(g.cin * g.kh * g.kw);
  const Eigen::Index cout = static_cast<Eigen::Index>(g.cout);
  const std::size_t out_plane = g.ho * g.wo;
  const std::size_t in_image = xs.c * xs.h * xs.w;
  auto groups = std::make_shared<const std::vector<std::vector<Piece>>>(plan_pieces(g, xs.n));

  Tensor out(Shape{xs.n, g.cout, g.ho, g.wo});
  ConstRowMap wmat(weight.value().data().data(), cout, k);
  // Scratch reused across calls; conv2d is not reentrant within a thread.
  thread_local RowMatrix cols;
  thread_local RowMatrix ybuf;
  for (const auto& group : *groups) {
    const std::size_t ld = group_columns(group, g);
    cols.resize(k, static_cast<Eigen::Index>(ld));
    std::size_t col0 = 0;
    for (const Piece& pc : group) {
      im2col(x.value().data().subspan(pc.n * in_image, in_image), g, pc, col0, ld, cols.data());
      col0 += (pc.oh1 - pc.oh0) * g.wo;
    }
    ybuf.noalias() = wmat * cols;
    col0 = 0;
    for (const Piece& pc : group) {
      const std::size_t len = (pc.oh1 - pc.oh0) * g.wo;
      for (std::size_t co = 0; co < g.cout; ++co) {
        const Real b = bias.defined() ? bias.value()[co] : Real{0};
        Real* dst = &out(pc.n, co, pc.oh0, 0);
        const Real* src = ybuf.data() + co * ld + col0;
        for (std::size_t p = 0; p < len; ++p) dst[p] = src[p] + b;
      }
      col0 += len;
    }
  }

  return make_result<Real>(
      std::move(out), any_grad(x, weight) || (bias.defined() && bias.requires_grad()),
      [x, weight, bias, g, groups, out_plane, in_image](const Tensor& gy) {
        const Shape& xs = x.shape();
        const Eigen::Index k = static_cast<Eigen::Index>(g.cin * g.kh * g.kw);
        const Eigen::Index cout = static_cast<Eigen::Index>(g.cout);
        Tensor* gx = x.grad_sink();
        Tensor* gw = weight.grad_sink();
        Tensor* gb = bias.defined() ? bias.grad_sink() : nullptr;
        if (gb != nullptr) {
          for (std::size_t n = 0; n < xs.n; ++n) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              const Real* src = &gy(n, co, 0, 0);
              Real acc = 0;
              for (std::size_t p = 0; p < out_plane; ++p) acc += src[p];
              (*gb)[co] += acc;
            }
          }
        }
        if (gx == nullptr && gw == nullptr) return;
        ConstRowMap wmat(weight.value().data().data(), cout, k);
        thread_local RowMatrix cols;
        thread_local RowMatrix dy;
        thread_local RowMatrix dcols;
        for (const auto& group : *groups) {
          const std::size_t ld = group_columns(group, g);
          dy.resize(cout, static_cast<Eigen::Index>(ld));
          std::size_t col0 = 0;
          for (const Piece& pc : group) {
            const std::size_t len = (pc.oh1 - pc.oh0) * g.wo;
            for (std::size_t co = 0; co < g.cout; ++co) {
              const Real* src = &gy(pc.n, co, pc.oh0, 0);
              std::copy(src, src + len, dy.data() + co * ld + col0);
            }
            col0 += len;
          }
          if (gw != nullptr) {
            cols.resize(k, static_cast<Eigen::Index>(ld));
            col0 = 0;
            for (const Piece& pc : group) {
              im2col(x.value().data().subspan(pc.n * in_image, in_image), g, pc, col0, ld,
                     cols.data());
              col0 += (pc.oh1 - pc.oh0) * g.wo;
            }
            RowMap gwmat(gw->data().data(), cout, k);
            gwmat.noalias() += dy * cols.transpose();
          }
          if (gx != nullptr) {
            dcols.noalias() = wmat.transpose() * dy;
            col0 = 0;
            for (const Piece& pc : group) {
              col2im(dcols.data(), col0, ld, g, pc,
                     gx->data().subspan(pc.n * in_image, in_image));
              col0 += (pc.oh1 - pc.oh0) * g.wo;
            }
          }
        }
      });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.h != 2 || ws.w != 2) {
    throw std::invalid_argument(
        "conv_transpose2d: only 2x2 kernels at stride 2 are supported, got " +
        to_string(ws));
  }
  if (xs.c != ws.n) {
    shape_error("conv_transpose2d: input channels vs weight Cin", xs, ws);
  }
  check_bias(bias, ws.c, "conv_transpose2d");
  const std::size_t cin = ws.n;
  const std::size_t cout = ws.c;
  const std::size_t p = xs.h * xs.w;

  // Row (co*4 + a*2 + b), column ci holds weight[ci, co, a, b].
  RowMatrix wm(static_cast<Eigen::Index>(cout * 4),
               static_cast<Eigen::Index>(cin));
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t t = 0; t < 4; ++t) {
        wm(static_cast<Eigen::Index>(co * 4 + t), static_cast<Eigen::Index>(ci)) =
            weight.value()[(ci * cout + co) * 4 + t];
      }
    }
  }

  Tensor out(Shape{xs.n, cout, 2 * xs.h, 2 * xs.w});
  RowMatrix y;
  for (std::size_t n = 0; n < xs.n; ++n) {
    ConstRowMap xm(&x.value()(n, 0, 0, 0), static_cast<Eigen::Index>(cin),
                   static_cast<Eigen::Index>(p));
    y.noalias() = wm * xm;
    for (std::size_t co = 0; co < cout; ++co) {
      const Real b = bias.defined() ? bias.value()[co] : Real{0};
      for (std::size_t t = 0; t < 4; ++t) {
        const std::size_t a = t / 2;
        const std::size_t bb = t % 2;
        const Real* src = y.data() + (co * 4 + t) * p;
        for (std::size_t i = 0; i < xs.h; ++i) {
          for (std::size_t j = 0; j < xs.w; ++j) {
            out(n, co, 2 * i + a, 2 * j + bb) = src[i * xs.w + j] + b;
          }
        }
      }
    }
  }

  return make_result<Real>(
      std::move(out), any_grad(x, weight) || (bias.defined() && bias.requires_grad()),
      [x, weight, bias, wm = std::move(wm), cin, cout, p](const Tensor& gy) {
        const Shape& xs = x.shape();
        Tensor* gx = x.grad_sink();
        Tensor* gw = weight.grad_sink();
        Tensor* gb = bias.defined() ? bias.grad_sink() : nullptr;
        RowMatrix dy(static_cast<Eigen::Index>(cout * 4),
                     static_cast<Eigen::Index>(p));
        RowMatrix gwm = RowMatrix::Zero(static_cast<Eigen::Index>(cout * 4),
                                        static_cast<Eigen::Index>(cin));
        for (std::size_t n = 0; n < xs.n; ++n) {
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t t = 0; t < 4; ++t) {
              Real* dst = dy.data() + (co * 4 + t) * p;
              for (std::size_t i = 0; i < xs.h; ++i) {
                for (std::size_t j = 0; j < xs.w; ++j) {
                  dst[i * xs.w + j] = gy(n, co, 2 * i + t / 2, 2 * j + t % 2);
                }
              }
            }
          }
          if (gb != nullptr) {
            for (std::size_t co = 0; co < cout; ++co) {
              (*gb)[co] += dy.middleRows(static_cast<Eigen::Index>(co * 4), 4).sum();
            }
          }
          if (gw != nullptr) {
            ConstRowMap xm(&x.value()(n, 0, 0, 0),
                           static_cast<Eigen::Index>(cin),
                           static_cast<Eigen::Index>(p));
            gwm.noalias() += dy * xm.transpose();
          }
          if (gx != nullptr) {
            RowMap gxm(&(*gx)(n, 0, 0, 0), static_cast<Eigen::Index>(cin),
                       static_cast<Eigen::Index>(p));
            gxm.noalias() += wm.transpose() * dy;
          }
        }
        if (gw != nullptr) {
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t co = 0; co < cout; ++co) {
              for (std::size_t t = 0; t < 4; ++t) {
                (*gw)[(ci * cout + co) * 4 + t] +=
                    gwm(static_cast<Eigen::Index>(co * 4 + t),
                        static_cast<Eigen::Index>(ci));
              }
            }
          }
        }
      });
}

Var maxpool2(const Var& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " +
                                to_string(s));
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor out(os);
  std::vector<std::size_t> argmax(os.numel());
  const Tensor& xv = x.value();
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t i = 0; i < os.h; ++i) {
        for (std::size_t j = 0; j < os.w; ++j, ++o) {
          std::size_t best = xv.index(n, c, 2 * i, 2 * j);
          for (std::size_t t = 1; t < 4; ++t) {
            const std::size_t idx = xv.index(n, c, 2 * i + t / 2, 2 * j + t % 2);
            if (xv[idx] > xv[best]) best = idx;
          }
          out[o] = xv[best];
          argmax[o] = best;
        }
      }
    }
  }
  return make_result<Real>(std::move(out), any_grad(x),
                           [x, argmax = std::move(argmax)](const Tensor& gy) {
                             Tensor* gx = x.grad_sink();
                             for (std::size_t o = 0; o < argmax.size(); ++o) {
                               (*gx)[argmax[o]] += gy[o];
                             }
                           });
}

Var global_avg_pool(const Var& x) {
  const Shape& s = x.shape();
  if (s.h == 0 || s.w == 0) {
    throw std::invalid_argument("global_avg_pool: empty spatial dims " +
                                to_string(s));
  }
  Tensor out(Shape{s.n, s.c, 1, 1});
  const Real inv = Real{1} / static_cast<Real>(s.plane());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      Real acc = 0;
      for (Real v : x.value().plane(n, c)) acc += v;
      out(n, c, 0, 0) = acc * inv;
    }
  }
  return make_result<Real>(std::move(out), any_grad(x), [x, inv](const Tensor& gy) {
    Tensor* gx = x.grad_sink();
    const Shape& s = x.shape();
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const Real g = gy(n, c, 0, 0) * inv;
        for (Real& v : gx->plane(n, c)) v += g;
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  auto src = x.value().data();
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] > 0 ? src[i] : Real{0};
  return make_result<Real>(std::move(out), any_grad(x), [x](const Tensor& gy) {
    Tensor* gx = x.grad_sink();
    auto src = x.value().data();
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i] > 0) (*gx)[i] += gy[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  auto src = x.value().data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = Real{1} / (Real{1} + std::exp(-src[i]));
  }
  Tensor saved = out;
  return make_result<Real>(std::move(out), any_grad(x),
                           [x, saved = std::move(saved)](const Tensor& gy) {
                             Tensor* gx = x.grad_sink();
                             for (std::size_t i = 0; i < saved.numel(); ++i) {
                               (*gx)[i] += gy[i] * saved[i] * (Real{1} - saved[i]);
                             }
                           });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    shape_error("concat_channels: batch/spatial mismatch", as, bs);
  }
  const std::size_t pa = as.c * as.plane();
  const std::size_t pb = bs.c * bs.plane();
  Tensor out(Shape{as.n, as.c + bs.c, as.h, as.w});
  for (std::size_t n = 0; n < as.n; ++n) {
    auto dst = out.data().subspan(n * (pa + pb), pa + pb);
    auto sa = a.value().data().subspan(n * pa, pa);
    auto sb = b.value().data().subspan(n * pb, pb);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<long>(pa));
  }
  return make_result<Real>(std::move(out), any_grad(a, b),
                           [a, b, pa, pb](const Tensor& gy) {
                             Tensor* ga = a.grad_sink();
                             Tensor* gb = b.grad_sink();
                             for (std::size_t n = 0; n < a.shape().n; ++n) {
                               const Real* src = gy.data().data() + n * (pa + pb);
                               if (ga != nullptr) {
                                 Real* d = ga->data().data() + n * pa;
                                 for (std::size_t i = 0; i < pa; ++i) d[i] += src[i];
                               }
                               if (gb != nullptr) {
                                 Real* d = gb->data().data() + n * pb;
                                 for (std::size_t i = 0; i < pb; ++i) d[i] += src[pa + i];
                               }
                             }
                           });
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (count == 0 || begin + count > s.c) {
    throw std::invalid_argument("slice_channels: range [" +
                                std::to_string(begin) + "," +
                                std::to_string(begin + count) +
                                ") outside channels of " + to_string(s));
  }
  Tensor out(Shape{s.n, count, s.h, s.w});
  const std::size_t chunk = count * s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const Real* src = &x.value()(n, begin, 0, 0);
    std::copy(src, src + chunk, &out(n, 0, 0, 0));
  }
  return make_result<Real>(std::move(out), any_grad(x),
                           [x, begin, chunk](const Tensor& gy) {
                             Tensor* gx = x.grad_sink();
                             for (std::size_t n = 0; n < x.shape().n; ++n) {
                               Real* dst = &(*gx)(n, begin, 0, 0);
                               const Real* src = gy.data().data() + n * chunk;
                               for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                             }
                           });
}

std::pair<Var, Var> split_channels(const Var& x, std::size_t at) {
  if (at == 0 || at >= x.shape().c) {
    throw std::invalid_argument("split_channels: split point " +
                                std::to_string(at) + " must lie inside (0, " +
                                std::to_string(x.shape().c) + ")");
  }
  return {slice_channels(x, 0, at), slice_channels(x, at, x.shape().c - at)};
}

Var broadcast_mul(const Var& x, const Var& a) {
  const Shape& xs = x.shape();
  const Shape& as = a.shape();
  auto ok = [](std::size_t ad, std::size_t xd) { return ad == xd || ad == 1; };
  if (!ok(as.n, xs.n) || !ok(as.c, xs.c) || !ok(as.h, xs.h) || !ok(as.w, xs.w)) {
    shape_error("broadcast_mul: operand not broadcastable", xs, as);
  }
  auto a_index = [as = as](std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return ((std::min(n, as.n - 1) * as.c + std::min(c, as.c - 1)) * as.h +
            std::min(h, as.h - 1)) * as.w + std::min(w, as.w - 1);
  };
  Tensor out(xs);
  std::size_t i = 0;
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < xs.c; ++c)
      for (std::size_t h = 0; h < xs.h; ++h)
        for (std::size_t w = 0; w < xs.w; ++w, ++i)
          out[i] = x.value()[i] * a.value()[a_index(n, c, h, w)];

  return make_result<Real>(std::move(out), any_grad(x, a),
                           [x, a, a_index](const Tensor& gy) {
                             Tensor* gx = x.grad_sink();
                             Tensor* ga = a.grad_sink();
                             const Shape& xs = x.shape();
                             std::size_t i = 0;
                             for (std::size_t n = 0; n < xs.n; ++n)
                               for (std::size_t c = 0; c < xs.c; ++c)
                                 for (std::size_t h = 0; h < xs.h; ++h)
                                   for (std::size_t w = 0; w < xs.w; ++w, ++i) {
                                     const std::size_t j = a_index(n, c, h, w);
                                     if (gx != nullptr) (*gx)[i] += gy[i] * a.value()[j];
                                     if (ga != nullptr) (*ga)[j] += gy[i] * x.value()[i];
                                   }
                           });
}

Var add(const Var& x, const Var& y) {
  if (x.shape() != y.shape()) shape_error("add: shape mismatch", x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] + y.value()[i];
  return make_result<Real>(std::move(out), any_grad(x, y), [x, y](const Tensor& gy) {
    if (Tensor* gx = x.grad_sink()) add_into(*gx, gy);
    if (Tensor* gyy = y.grad_sink()) add_into(*gyy, gy);
  });
}

Var scale(const Var& x, Real s) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * s;
  return make_result<Real>(std::move(out), any_grad(x), [x, s](const Tensor& gy) {
    Tensor* gx = x.grad_sink();
    for (std::size_t i = 0; i < gy.numel(); ++i) (*gx)[i] += gy[i] * s;
  });
}

Var sum(const Var& x) {
  Real acc = 0;
  for (Real v : x.value().data()) acc += v;
  return make_result<Real>(Tensor(Shape{1, 1, 1, 1}, acc), any_grad(x),
                           [x](const Tensor& gy) {
                             Tensor* gx = x.grad_sink();
                             for (Real& v : gx->data()) v += gy[0];
                           });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  Real w0, w1;
};

std::vector<Tap> upsample_taps(std::size_t in) {
  std::vector<Tap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    const Real src = std::max(Real{0}, (static_cast<Real>(o) + Real{0.5}) / 2 - Real{0.5});
    const std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
    const std::size_t i1 = i0 + 1 < in ? i0 + 1 : i0;
    const Real l1 = src - static_cast<Real>(i0);
    taps[o] = Tap{i0, i1, Real{1} - l1, l1};
  }
  return taps;
}

}  // namespace

Var interpolate2x(const Var& x) {
  const Shape& s = x.shape();
  if (s.h == 0 || s.w == 0) {
    throw std::invalid_argument("interpolate2x: empty spatial dims " + to_string(s));
  }
  auto rows = upsample_taps(s.h);
  auto cols = upsample_taps(s.w);
  Tensor out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = x.value().plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t oy = 0; oy < 2 * s.h; ++oy) {
        const Tap& ty = rows[oy];
        for (std::size_t ox = 0; ox < 2 * s.w; ++ox) {
          const Tap& tx = cols[ox];
          dst[oy * 2 * s.w + ox] =
              ty.w0 * (tx.w0 * src[ty.i0 * s.w + tx.i0] + tx.w1 * src[ty.i0 * s.w + tx.i1]) +
              ty.w1 * (tx.w0 * src[ty.i1 * s.w + tx.i0] + tx.w1 * src[ty.i1 * s.w + tx.i1]);
        }
      }
    }
  }
  return make_result<Real>(
      std::move(out), any_grad(x),
      [x, rows = std::move(rows), cols = std::move(cols)](const Tensor& gy) {
        Tensor* gx = x.grad_sink();
        const Shape& s = x.shape();
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t c = 0; c < s.c; ++c) {
            auto g = gy.plane(n, c);
            auto dst = gx->plane(n, c);
            for (std::size_t oy = 0; oy < 2 * s.h; ++oy) {
              const Tap& ty = rows[oy];
              for (std::size_t ox = 0; ox < 2 * s.w; ++ox) {
                const Tap& tx = cols[ox];
                const Real v = g[oy * 2 * s.w + ox];
                dst[ty.i0 * s.w + tx.i0] += ty.w0 * tx.w0 * v;
                dst[ty.i0 * s.w + tx.i1] += ty.w0 * tx.w1 * v;
                dst[ty.i1 * s.w + tx.i0] += ty.w1 * tx.w0 * v;
                dst[ty.i1 * s.w + tx.i1] += ty.w1 * tx.w1 * v;
              }
            }
          }
        }
      });
}

Var channel_max(const Var& x) {
  const Shape& s = x.shape();
  if (s.c == 0) throw std::invalid_argument("channel_max: no channels");
  Tensor out(Shape{s.n, 1, s.h, s.w});
  std::vector<std::size_t> arg(out.numel());
  const std::size_t p = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t q = 0; q < p; ++q) {
      std::size_t best = x.value().index(n, 0, 0, 0) + q;
      for (std::size_t c = 1; c < s.c; ++c) {
        const std::size_t idx = x.value().index(n, c, 0, 0) + q;
        if (x.value()[idx] > x.value()[best]) best = idx;
      }
      out[n * p + q] = x.value()[best];
      arg[n * p + q] = best;
    }
  }
  return make_result<Real>(std::move(out), any_grad(x),
                           [x, arg = std::move(arg)](const Tensor& gy) {
                             Tensor* gx = x.grad_sink();
                             for (std::size_t i = 0; i < arg.size(); ++i) (*gx)[arg[i]] += gy[i];
                           });
}

Var channel_mean(const Var& x) {
  const Shape& s = x.shape();
  if (s.c == 0) throw std::invalid_argument("channel_mean: no channels");
  Tensor out(Shape{s.n, 1, s.h, s.w});
  const std::size_t p = s.plane();
  const Real inv = Real{1} / static_cast<Real>(s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = x.value().plane(n, c);
      for (std::size_t q = 0; q < p; ++q) out[n * p + q] += src[q];
    }
    for (std::size_t q = 0; q < p; ++q) out[n * p + q] *= inv;
  }
  return make_result<Real>(std::move(out), any_grad(x), [x, inv](const Tensor& gy) {
    Tensor* gx = x.grad_sink();
    const Shape& s = x.shape();
    const std::size_t p = s.plane();
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        auto dst = gx->plane(n, c);
        for (std::size_t q = 0; q < p; ++q) dst[q] += gy[n * p + q] * inv;
      }
    }
  });
}

}  // namespace sfunet::ops
