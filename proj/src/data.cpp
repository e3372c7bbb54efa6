#include "sfunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sfunet/pnm.hpp"

namespace sfunet::data {

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
    const std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = Tap{i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

std::size_t nearest_index(std::size_t o, std::size_t in, std::size_t out) {
  const auto i = static_cast<std::size_t>(
      std::floor((static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out)));
  return std::min(i, in - 1);
}

pnm::Image read_pnm(const std::filesystem::path& path) {
  try {
    return pnm::read(path);
  } catch (const pnm::PnmError& e) {
    throw DataError(e.kind() == pnm::PnmError::Kind::io ? DataError::Kind::io : DataError::Kind::format,
                    e.what());
  }
}

std::uint8_t to_byte(Real v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp<double>(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t h, std::size_t w) {
  const Shape& s = x.shape();
  if (s.h == h && s.w == w) return x;
  const auto rows = linear_taps(s.h, h);
  const auto cols = linear_taps(s.w, w);
  Tensor out(Shape{s.n, s.c, h, w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t y = 0; y < h; ++y) {
        const Tap& ty = rows[y];
        for (std::size_t xx = 0; xx < w; ++xx) {
          const Tap& tx = cols[xx];
          const double top = (1 - tx.w1) * src[ty.i0 * s.w + tx.i0] + tx.w1 * src[ty.i0 * s.w + tx.i1];
          const double bot = (1 - tx.w1) * src[ty.i1 * s.w + tx.i0] + tx.w1 * src[ty.i1 * s.w + tx.i1];
          dst[y * w + xx] = static_cast<Real>((1 - ty.w1) * top + ty.w1 * bot);
        }
      }
    }
  }
  return out;
}

Labels resize_nearest(const Labels& l, std::size_t h, std::size_t w) {
  if (l.h == h && l.w == w) return l;
  Labels out(l.n, h, w);
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t sy = nearest_index(y, l.h, h);
      for (std::size_t x = 0; x < w; ++x) out(n, y, x) = l(n, sy, nearest_index(x, l.w, w));
    }
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path, std::size_t channels, std::size_t h,
                  std::size_t w) {
  const pnm::Image img = read_pnm(path);
  if (channels != 1 && channels != 3) {
    throw DataError(DataError::Kind::format, "unsupported channel count " + std::to_string(channels));
  }
  Tensor t(Shape{1, channels, img.height, img.width});
  constexpr Real kScale = Real{1} / Real{255};
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        Real v;
        if (img.channels == channels) {
          v = static_cast<Real>(img.at(y, x, c)) * kScale;
        } else if (img.channels == 1) {
          v = static_cast<Real>(img.at(y, x)) * kScale;
        } else {
          v = (static_cast<Real>(img.at(y, x, 0)) + static_cast<Real>(img.at(y, x, 1)) +
               static_cast<Real>(img.at(y, x, 2))) * kScale / Real{3};
        }
        t(0, c, y, x) = v;
      }
    }
  }
  if (h == 0 || w == 0) return t;
  return resize_bilinear(t, h, w);
}

Labels load_label(const std::filesystem::path& path, std::size_t n_classes, std::size_t h,
                  std::size_t w) {
  const pnm::Image img = read_pnm(path);
  if (img.channels != 1) {
    throw DataError(DataError::Kind::format, path.string() + ": label maps must be P5 grayscale");
  }
  Labels l(1, img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const int v = img.at(y, x);
      if (static_cast<std::size_t>(v) >= n_classes) {
        throw DataError(DataError::Kind::label_range,
                        path.string() + ": label value " + std::to_string(v) + " at pixel (x=" +
                            std::to_string(x) + ", y=" + std::to_string(y) + ") is not below " +
                            std::to_string(n_classes) + " classes");
      }
      l(0, y, x) = v;
    }
  }
  if (h == 0 || w == 0) return l;
  return resize_nearest(l, h, w);
}

void save_image(const std::filesystem::path& path, const Tensor& image, std::size_t n) {
  const Shape& s = image.shape();
  if (s.c != 1 && s.c != 3) throw DataError(DataError::Kind::format, "save_image: need 1 or 3 channels");
  pnm::Image img;
  img.width = s.w;
  img.height = s.h;
  img.channels = s.c;
  img.pixels.resize(s.h * s.w * s.c);
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x)
      for (std::size_t c = 0; c < s.c; ++c) img.pixels[(y * s.w + x) * s.c + c] = to_byte(image(n, c, y, x));
  pnm::write(path, img);
}

void save_label(const std::filesystem::path& path, const Labels& labels, std::size_t n) {
  pnm::Image img;
  img.width = labels.w;
  img.height = labels.h;
  img.channels = 1;
  img.pixels.resize(labels.plane());
  for (std::size_t i = 0; i < labels.plane(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(labels.values[n * labels.plane() + i]);
  }
  pnm::write(path, img);
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError(DataError::Kind::manifest, "unknown split '" + s + "'");
}

std::vector<const ManifestEntry*> Manifest::in_split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::io, "cannot open manifest: " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 4) {
      throw DataError(DataError::Kind::manifest, path.string() + ":" + std::to_string(lineno) +
                                                     ": expected 4 tab-separated fields");
    }
    m.entries.push_back(ManifestEntry{fields[0], fields[1], fields[2], parse_split(fields[3])});
  }
  std::vector<std::string> ids;
  for (const auto& e : m.entries) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError(DataError::Kind::manifest, path.string() + ": duplicate sample id");
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::io, "cannot write manifest: " + path.string());
  for (const auto& e : m.entries) {
    out << e.id << '\t' << e.image << '\t' << e.label << '\t' << split_name(e.split) << '\n';
  }
}

Manifest split(Manifest m, const std::array<double, 3>& fractions, std::uint64_t seed) {
  if (m.entries.empty()) throw DataError(DataError::Kind::empty, "split: empty manifest");
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 ||
      std::any_of(fractions.begin(), fractions.end(), [](double f) { return f < 0; })) {
    throw DataError(DataError::Kind::manifest, "split: fractions must be non-negative and sum to 1");
  }
  const std::size_t n = m.entries.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = std::min<std::size_t>(n, std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val =
      std::min<std::size_t>(n - n_train, std::llround(fractions[1] * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    m.entries[order[r]].split = r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
  }
  return m;
}

std::vector<SegmentationSample> load_split(const Manifest& m, Split s, std::size_t channels,
                                           std::size_t n_classes, std::size_t h, std::size_t w) {
  std::vector<SegmentationSample> out;
  for (const ManifestEntry* e : m.in_split(s)) {
    out.push_back(SegmentationSample{load_image(m.root / e->image, channels, h, w),
                                     load_label(m.root / e->label, n_classes, h, w), e->id});
  }
  if (out.empty()) {
    throw DataError(DataError::Kind::empty, std::string("split '") + split_name(s) + "' is empty");
  }
  return out;
}

std::pair<Tensor, Labels> stack(const std::vector<SegmentationSample>& samples, std::size_t begin,
                                std::size_t end) {
  if (begin >= end || end > samples.size()) throw std::out_of_range("stack: bad sample range");
  const Shape s0 = samples[begin].image.shape();
  Tensor images(Shape{end - begin, s0.c, s0.h, s0.w});
  Labels labels(end - begin, s0.h, s0.w);
  const std::size_t img_size = s0.c * s0.plane();
  for (std::size_t i = begin; i < end; ++i) {
    const auto& smp = samples[i];
    if (smp.image.shape() != Shape{1, s0.c, s0.h, s0.w} || smp.label.h != s0.h || smp.label.w != s0.w) {
      shape_error("stack: sample " + smp.id + " differs from the batch", smp.image.shape(), s0);
    }
    std::copy(smp.image.data().begin(), smp.image.data().end(),
              images.data().begin() + static_cast<long>((i - begin) * img_size));
    std::copy(smp.label.values.begin(), smp.label.values.end(),
              labels.values.begin() + static_cast<long>((i - begin) * s0.plane()));
  }
  return {std::move(images), std::move(labels)};
}

bool Ellipse::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double u = (dx * c + dy * s) / a;
  const double v = (-dx * s + dy * c) / b;
  return u * u + v * v <= 1.0;
}

namespace {

// Bilinearly interpolated lattice noise in [0, 1).
std::vector<double> value_noise(std::size_t h, std::size_t w, std::size_t cell, Rng& rng) {
  const std::size_t gh = h / cell + 2;
  const std::size_t gw = w / cell + 2;
  std::vector<double> lattice(gh * gw);
  for (double& v : lattice) v = rng.uniform();
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(cell);
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(cell);
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = fx - static_cast<double>(x0);
      const double top = (1 - tx) * lattice[y0 * gw + x0] + tx * lattice[y0 * gw + x0 + 1];
      const double bot = (1 - tx) * lattice[(y0 + 1) * gw + x0] + tx * lattice[(y0 + 1) * gw + x0 + 1];
      out[y * w + x] = (1 - ty) * top + ty * bot;
    }
  }
  return out;
}

double noise(Rng& rng, double amplitude) {
  // Sum of three uniforms: a cheap bell-shaped perturbation.
  return amplitude * (rng.uniform() + rng.uniform() + rng.uniform() - 1.5);
}

constexpr int kPlacementTries = 64;
constexpr int kLayoutTries = 32;

}  // namespace

SynthRecord synth_sample(const SynthOptions& opt, std::size_t index, Rng& rng) {
  if (opt.classes < 2 || opt.classes > 4) {
    throw std::invalid_argument("synth: classes must be 2, 3 or 4");
  }
  if (opt.h < 8 || opt.w < 8) throw std::invalid_argument("synth: images must be at least 8x8");
  const double extent = static_cast<double>(std::min(opt.h, opt.w));
  Labels label;
  std::vector<Ellipse> ellipses;
  // Shrink the ellipses after repeated failed layouts so placement always
  // terminates.
  double size_scale = 1.0;
  for (int layout = 0;; ++layout) {
    label = Labels(1, opt.h, opt.w);
    ellipses.clear();
    bool ok = true;
    for (int cls = 1; cls < static_cast<int>(opt.classes) && ok; ++cls) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
        Ellipse e;
        e.cls = cls;
        e.a = std::max(1.5, rng.uniform(0.12, 0.28) * extent * size_scale);
        e.b = std::max(1.5, rng.uniform(0.12, 0.28) * extent * size_scale);
        e.theta = rng.uniform(0.0, 3.141592653589793);
        e.cx = rng.uniform(0.2, 0.8) * static_cast<double>(opt.w);
        e.cy = rng.uniform(0.2, 0.8) * static_cast<double>(opt.h);
        std::vector<std::size_t> pixels;
        bool clash = false;
        for (std::size_t y = 0; y < opt.h && !clash; ++y) {
          for (std::size_t x = 0; x < opt.w; ++x) {
            if (!e.contains(static_cast<double>(x), static_cast<double>(y))) continue;
            if (label.values[y * opt.w + x] != 0) {
              clash = true;
              break;
            }
            pixels.push_back(y * opt.w + x);
          }
        }
        if (clash || pixels.empty()) continue;
        for (std::size_t p : pixels) label.values[p] = cls;
        ellipses.push_back(e);
        placed = true;
      }
      ok = placed;
    }
    if (ok) break;
    if (layout + 1 >= kLayoutTries) {
      throw std::runtime_error("synth: could not place non-overlapping ellipses");
    }
    size_scale *= 0.85;
  }

  const auto background = value_noise(opt.h, opt.w, 8, rng);
  Tensor image(Shape{1, opt.channels, opt.h, opt.w});
  for (std::size_t y = 0; y < opt.h; ++y) {
    for (std::size_t x = 0; x < opt.w; ++x) {
      const int cls = label.values[y * opt.w + x];
      const double base = cls == 0 ? 0.05 + 0.2 * background[y * opt.w + x]
                                   : 0.4 + 0.55 * static_cast<double>(cls) /
                                                static_cast<double>(opt.classes);
      for (std::size_t c = 0; c < opt.channels; ++c) {
        const double tint = 1.0 - 0.08 * static_cast<double>(c);
        image(0, c, y, x) = static_cast<Real>(std::clamp(base * tint + noise(rng, 0.06), 0.0, 1.0));
      }
    }
  }
  std::ostringstream id;
  id << "s" << std::setw(4) << std::setfill('0') << index;
  return SynthRecord{SegmentationSample{std::move(image), std::move(label), id.str()},
                     std::move(ellipses)};
}

std::vector<SynthRecord> synth_dataset(const SynthOptions& opt) {
  if (opt.count == 0) throw std::invalid_argument("synth: count must be >= 1");
  Rng rng(opt.seed);
  std::vector<SynthRecord> out;
  out.reserve(opt.count);
  for (std::size_t i = 0; i < opt.count; ++i) out.push_back(synth_sample(opt, i, rng));
  return out;
}

Manifest synth_generate(const SynthOptions& opt, const std::filesystem::path& out) {
  const auto records = synth_dataset(opt);
  std::filesystem::create_directories(out / "images");
  std::filesystem::create_directories(out / "labels");
  Manifest m;
  m.root = out;
  const std::string ext = opt.channels == 1 ? ".pgm" : ".ppm";
  for (const auto& r : records) {
    const std::string image = "images/" + r.sample.id + ext;
    const std::string label = "labels/" + r.sample.id + ".pgm";
    save_image(out / image, r.sample.image);
    save_label(out / label, r.sample.label);
    m.entries.push_back(ManifestEntry{r.sample.id, image, label, Split::train});
  }
  m = split(std::move(m), opt.fractions, opt.seed);
  write_manifest(out / "manifest.tsv", m);
  return m;
}

}  // namespace sfunet::data
