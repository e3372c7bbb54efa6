#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfunet/tensor.hpp"

namespace sfunet {
class Model;
struct SegmentationSample;
}  // namespace sfunet

namespace sfunet::metrics {

/// Row-major binary mask.
struct Mask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> on;

  Mask() = default;
  Mask(std::size_t h_, std::size_t w_) : h(h_), w(w_), on(h_ * w_, 0) {}
  bool at(std::size_t y, std::size_t x) const { return on[y * w + x] != 0; }
  std::size_t count() const;
};

/// 2|P&G| / (|P|+|G|); 1 when both are empty.
double dsc(const Mask& pred, const Mask& gt);
/// |P and G| / |P or G|; 1 when both are empty.
double iou(const Mask& pred, const Mask& gt);

/// Foreground pixels with at least one background 4-neighbour; pixels past
/// the image border count as background.
Mask boundary(const Mask& m);

/// 95th percentile (linear interpolation) of the symmetric
/// boundary-to-boundary distances. 0 when both masks are empty; the image
/// diagonal when exactly one is.
double hd95(const Mask& pred, const Mask& gt);

/// Linear-interpolation percentile of unsorted values, q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Per-class binary mask from a label plane.
Mask class_mask(const Labels& labels, std::size_t image, int cls);

/// Per-pixel argmax over the class axis.
Labels argmax(const Tensor& logits);

struct MetricReport {
  std::vector<int> classes;  // foreground class indices
  std::vector<double> dsc;
  std::vector<double> iou;
  std::vector<double> hd95;
  double mean_dsc = 0;
  double mean_iou = 0;
  double mean_hd95 = 0;
  std::size_t images = 0;

  std::string to_tsv() const;
  /// `key: value` per line.
  std::string to_text() const;
};

struct EvalOptions {
  bool with_hd95 = true;
  std::size_t batch = 4;
};

/// Per-image metrics for each foreground class, averaged over images.
MetricReport evaluate_predictions(const std::vector<Labels>& pred, const std::vector<Labels>& gt,
                                  std::size_t n_classes, bool with_hd95 = true);

/// Runs the frozen model over a split and scores its argmax predictions.
MetricReport evaluate(const Model& model, const std::vector<SegmentationSample>& samples,
                      std::size_t n_classes, const EvalOptions& options = {});

}  // namespace sfunet::metrics
