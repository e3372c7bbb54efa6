#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sfunet/random.hpp"
#include "sfunet/tensor.hpp"

namespace sfunet {

/// Image [1,C,H,W] in [0,1] with its class-index map [1,H,W].
struct SegmentationSample {
  Tensor image;
  Labels label;
  std::string id;
};

}  // namespace sfunet

namespace sfunet::data {

class DataError : public std::runtime_error {
 public:
  enum class Kind { io, format, label_range, manifest, empty };

  DataError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Bilinear resize with half-pixel centers.
Tensor resize_bilinear(const Tensor& x, std::size_t h, std::size_t w);
/// Nearest-neighbour resize; never mixes class indices.
Labels resize_nearest(const Labels& l, std::size_t h, std::size_t w);

/// Reads a P5/P6 image as [1,channels,H,W] scaled by 1/255. A gray file is
/// replicated to 3 channels and a color file averaged to 1 when needed.
/// h = w = 0 keeps the file's size.
Tensor load_image(const std::filesystem::path& path, std::size_t channels, std::size_t h = 0,
                  std::size_t w = 0);
/// Reads raw class indices from a P5 file. A value >= n_classes throws
/// DataError(label_range) naming the pixel.
Labels load_label(const std::filesystem::path& path, std::size_t n_classes, std::size_t h = 0,
                  std::size_t w = 0);

/// Writes image `n` of a [N,C,H,W] tensor (C = 1 or 3) as round(255 v).
void save_image(const std::filesystem::path& path, const Tensor& image, std::size_t n = 0);
/// Writes label plane `n` with class indices as pixel values.
void save_label(const std::filesystem::path& path, const Labels& labels, std::size_t n = 0);

enum class Split { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string id;
  std::string image;  // relative to the manifest's directory
  std::string label;
  Split split = Split::train;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> in_split(Split s) const;
};

/// One line per sample: `id<TAB>image<TAB>label<TAB>split`.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Seeded shuffle, then the first round(f_train*n) go to train, the next
/// round(f_val*n) to val, the rest to test. Entry order is preserved.
Manifest split(Manifest m, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Throws DataError(empty) if the split has no entries.
std::vector<SegmentationSample> load_split(const Manifest& m, Split s, std::size_t channels,
                                           std::size_t n_classes, std::size_t h, std::size_t w);

/// Concatenates samples[begin, end) into one batch.
std::pair<Tensor, Labels> stack(const std::vector<SegmentationSample>& samples, std::size_t begin,
                                std::size_t end);

struct Ellipse {
  double cx = 0;
  double cy = 0;
  double a = 1;  // semi-axis along the rotated x direction
  double b = 1;
  double theta = 0;
  int cls = 1;

  /// Pixel (x, y) belongs to the ellipse when its center lies inside.
  bool contains(double x, double y) const;
};

struct SynthOptions {
  std::size_t count = 8;
  std::size_t classes = 2;
  std::size_t h = 32;
  std::size_t w = 32;
  std::size_t channels = 3;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
};

struct SynthRecord {
  SegmentationSample sample;
  std::vector<Ellipse> ellipses;
};

/// Dark value-noise background plus classes-1 non-overlapping ellipses, one
/// per foreground class, each in its own intensity band with additive noise.
SynthRecord synth_sample(const SynthOptions& opt, std::size_t index, Rng& rng);

/// In-memory dataset, deterministic per seed.
std::vector<SynthRecord> synth_dataset(const SynthOptions& opt);

/// Writes images/*.ppm (or .pgm), labels/*.pgm and manifest.tsv under `out`.
Manifest synth_generate(const SynthOptions& opt, const std::filesystem::path& out);

}  // namespace sfunet::data
