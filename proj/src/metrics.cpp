#include "sfunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sfunet/data.hpp"
#include "sfunet/network.hpp"

namespace sfunet::metrics {

namespace {

void check_dims(const Mask& a, const Mask& b, const char* op) {
  if (a.h != b.h || a.w != b.w) {
    throw std::invalid_argument(std::string(op) + ": mask dims " + std::to_string(a.h) + "x" +
                                std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                                std::to_string(b.w));
  }
}

struct Overlap {
  std::size_t inter = 0;
  std::size_t p = 0;
  std::size_t g = 0;
};

Overlap overlap(const Mask& pred, const Mask& gt) {
  Overlap o;
  for (std::size_t i = 0; i < pred.on.size(); ++i) {
    const bool a = pred.on[i] != 0;
    const bool b = gt.on[i] != 0;
    o.p += a;
    o.g += b;
    o.inter += a && b;
  }
  return o;
}

constexpr double kFar = 1e30;

// Squared distance transform of a sampled function along one line
// (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  auto intersect = [&f](int q, int r) {
    return ((f[q] + double(q) * q) - (f[r] + double(r) * r)) / (2.0 * (q - r));
  };
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest pixel of `m`.
std::vector<double> squared_distance_to(const Mask& m) {
  std::vector<double> grid(m.h * m.w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = m.on[i] ? 0.0 : kFar;
  const std::size_t len = std::max(m.h, m.w);
  std::vector<double> f(len), d(len), z(len + 1);
  std::vector<int> v(len);
  f.resize(m.h);
  d.resize(m.h);
  for (std::size_t x = 0; x < m.w; ++x) {
    for (std::size_t y = 0; y < m.h; ++y) f[y] = grid[y * m.w + x];
    edt_1d(f, d, v, z);
    for (std::size_t y = 0; y < m.h; ++y) grid[y * m.w + x] = d[y];
  }
  f.resize(m.w);
  d.resize(m.w);
  for (std::size_t y = 0; y < m.h; ++y) {
    for (std::size_t x = 0; x < m.w; ++x) f[x] = grid[y * m.w + x];
    edt_1d(f, d, v, z);
    for (std::size_t x = 0; x < m.w; ++x) grid[y * m.w + x] = d[x];
  }
  return grid;
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(on.begin(), on.end(), [](auto v) { return v != 0; }));
}

double dsc(const Mask& pred, const Mask& gt) {
  check_dims(pred, gt, "dsc");
  const Overlap o = overlap(pred, gt);
  if (o.p + o.g == 0) return 1.0;
  return 2.0 * static_cast<double>(o.inter) / static_cast<double>(o.p + o.g);
}

double iou(const Mask& pred, const Mask& gt) {
  check_dims(pred, gt, "iou");
  const Overlap o = overlap(pred, gt);
  const std::size_t uni = o.p + o.g - o.inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.inter) / static_cast<double>(uni);
}

Mask boundary(const Mask& m) {
  Mask b(m.h, m.w);
  for (std::size_t y = 0; y < m.h; ++y) {
    for (std::size_t x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == m.h || x + 1 == m.w || !m.at(y - 1, x) ||
                        !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1);
      b.on[y * m.w + x] = edge ? 1 : 0;
    }
  }
  return b;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double hd95(const Mask& pred, const Mask& gt) {
  check_dims(pred, gt, "hd95");
  const bool p_empty = pred.count() == 0;
  const bool g_empty = gt.count() == 0;
  if (p_empty && g_empty) return 0.0;
  if (p_empty || g_empty) {
    return std::sqrt(static_cast<double>(pred.h * pred.h + pred.w * pred.w));
  }
  const Mask pb = boundary(pred);
  const Mask gb = boundary(gt);
  const auto to_g = squared_distance_to(gb);
  const auto to_p = squared_distance_to(pb);
  std::vector<double> dists;
  for (std::size_t i = 0; i < pb.on.size(); ++i) {
    if (pb.on[i]) dists.push_back(std::sqrt(to_g[i]));
    if (gb.on[i]) dists.push_back(std::sqrt(to_p[i]));
  }
  return percentile(std::move(dists), 0.95);
}

Mask class_mask(const Labels& labels, std::size_t image, int cls) {
  Mask m(labels.h, labels.w);
  const std::size_t off = image * labels.plane();
  for (std::size_t i = 0; i < labels.plane(); ++i) m.on[i] = labels.values[off + i] == cls;
  return m;
}

Labels argmax(const Tensor& logits) {
  const Shape& s = logits.shape();
  Labels out(s.n, s.h, s.w);
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t q = 0; q < plane; ++q) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < s.c; ++k) {
        if (logits[logits.index(n, k, 0, 0) + q] > logits[logits.index(n, best, 0, 0) + q]) {
          best = k;
        }
      }
      out.values[n * plane + q] = static_cast<int>(best);
    }
  }
  return out;
}

MetricReport evaluate_predictions(const std::vector<Labels>& pred, const std::vector<Labels>& gt,
                                  std::size_t n_classes, bool with_hd95) {
  if (pred.empty()) throw std::invalid_argument("evaluate: empty split");
  if (pred.size() != gt.size()) throw std::invalid_argument("evaluate: prediction count mismatch");
  MetricReport r;
  for (std::size_t k = 1; k < n_classes; ++k) r.classes.push_back(static_cast<int>(k));
  r.dsc.assign(r.classes.size(), 0.0);
  r.iou.assign(r.classes.size(), 0.0);
  r.hd95.assign(r.classes.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t n = 0; n < pred[i].n; ++n) {
      ++r.images;
      for (std::size_t c = 0; c < r.classes.size(); ++c) {
        const Mask p = class_mask(pred[i], n, r.classes[c]);
        const Mask g = class_mask(gt[i], n, r.classes[c]);
        r.dsc[c] += dsc(p, g);
        r.iou[c] += iou(p, g);
        if (with_hd95) r.hd95[c] += hd95(p, g);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(r.images);
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    r.dsc[c] *= inv;
    r.iou[c] *= inv;
    r.hd95[c] *= inv;
    r.mean_dsc += r.dsc[c];
    r.mean_iou += r.iou[c];
    r.mean_hd95 += r.hd95[c];
  }
  const double cls_inv = 1.0 / static_cast<double>(r.classes.size());
  r.mean_dsc *= cls_inv;
  r.mean_iou *= cls_inv;
  r.mean_hd95 *= cls_inv;
  return r;
}

MetricReport evaluate(const Model& model, const std::vector<SegmentationSample>& samples,
                      std::size_t n_classes, const EvalOptions& options) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty split");
  std::vector<Labels> pred;
  std::vector<Labels> gt;
  const std::size_t batch = std::max<std::size_t>(1, options.batch);
  for (std::size_t i = 0; i < samples.size(); i += batch) {
    const std::size_t end = std::min(samples.size(), i + batch);
    auto [images, labels] = data::stack(samples, i, end);
    pred.push_back(argmax(model.infer(images)));
    gt.push_back(std::move(labels));
  }
  return evaluate_predictions(pred, gt, n_classes, options.with_hd95);
}

std::string MetricReport::to_tsv() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "class\tdsc\tiou\thd95\n";
  for (std::size_t c = 0; c < classes.size(); ++c) {
    os << classes[c] << '\t' << dsc[c] << '\t' << iou[c] << '\t' << hd95[c] << '\n';
  }
  os << "mean\t" << mean_dsc << '\t' << mean_iou << '\t' << mean_hd95 << '\n';
  return os.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "images: " << images << '\n';
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const std::string k = "class_" + std::to_string(classes[c]);
    os << k << ".dsc: " << dsc[c] << '\n'
       << k << ".iou: " << iou[c] << '\n'
       << k << ".hd95: " << hd95[c] << '\n';
  }
  os << "mean.dsc: " << mean_dsc << '\n'
     << "mean.iou: " << mean_iou << '\n'
     << "mean.hd95: " << mean_hd95 << '\n';
  return os.str();
}

}  // namespace sfunet::metrics
