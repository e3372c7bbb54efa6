#include "sfunet/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "sfunet/ops.hpp"

namespace sfunet::blocks {

namespace {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

Var maybe_use(Parameter* p) { return p != nullptr ? use(*p) : Var{}; }

}  // namespace

Conv2d::Conv2d(ParameterRegistry& reg, const std::string& name, std::size_t cin,
               std::size_t cout, std::size_t kernel, int padding, bool with_bias,
               Rng& rng)
    : weight_(&reg.add(name + ".weight",
                       kaiming_uniform(Shape{cout, cin, kernel, kernel},
                                       cin * kernel * kernel, rng))),
      padding_(padding) {
  if (with_bias) bias_ = &reg.add(name + ".bias", Tensor(Shape{1, cout, 1, 1}));
}

Var Conv2d::operator()(const Var& x) const {
  return ops::conv2d(x, use(*weight_), maybe_use(bias_), 1, padding_);
}

ConvTranspose2x2::ConvTranspose2x2(ParameterRegistry& reg, const std::string& name,
                                   std::size_t cin, std::size_t cout, Rng& rng)
    : weight_(&reg.add(name + ".weight",
                       kaiming_uniform(Shape{cin, cout, 2, 2}, cin, rng))),
      bias_(&reg.add(name + ".bias", Tensor(Shape{1, cout, 1, 1}))) {}

Var ConvTranspose2x2::operator()(const Var& x) const {
  return ops::conv_transpose2d(x, use(*weight_), use(*bias_));
}

EncoderStage::EncoderStage(ParameterRegistry& reg, const std::string& name,
                           std::size_t cin, std::size_t cout, std::size_t depth,
                           Rng& rng)
    : cout_(cout) {
  for (std::size_t i = 0; i < depth; ++i) {
    convs_.emplace_back(reg, name + ".conv" + std::to_string(i), i == 0 ? cin : cout,
                        cout, 3, 1, true, rng);
  }
}

Var EncoderStage::forward(const Var& x) const {
  Var h = x;
  for (const auto& conv : convs_) h = ops::relu(conv(h));
  return h;
}

Encoder::Encoder(ParameterRegistry& reg, std::size_t input_channels, Rng& rng) {
  std::size_t cin = input_channels;
  for (std::size_t i = 0; i < kStageChannels.size(); ++i) {
    stages_.emplace_back(reg, "enc" + std::to_string(i + 1), cin, kStageChannels[i],
                         kStageDepths[i], rng);
    cin = kStageChannels[i];
  }
}

std::array<Var, 5> Encoder::forward(const Var& image) const {
  const Shape& s = image.shape();
  if (s.h % 16 != 0 || s.w % 16 != 0) {
    throw std::invalid_argument("encoder: spatial dims must be divisible by 16, got " +
                                to_string(s));
  }
  std::array<Var, 5> features;
  Var h = image;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (i > 0) h = ops::maxpool2(h);
    h = stages_[i].forward(h);
    features[i] = h;
  }
  return features;
}

MPCABlock::MPCABlock(ParameterRegistry& reg, const std::string& name,
                     std::size_t c_cur, std::size_t c_next, Rng& rng)
    : c_cur_(c_cur),
      c_next_(c_next),
      reduce_cur_(reg, name + ".reduce_cur", c_cur, c_cur, 1, 0, true, rng),
      reduce_next_(reg, name + ".reduce_next", c_next, c_next, 1, 0, true, rng),
      fuse_(reg, name + ".fuse", c_cur + c_next, c_cur + c_next, 1, 0, true, rng),
      up_(reg, name + ".up", c_next, c_cur, rng) {}

MPCABlock::Output MPCABlock::forward_detailed(const Var& f_cur,
                                              const Var& f_next) const {
  const Shape& a = f_cur.shape();
  const Shape& b = f_next.shape();
  if (b.n != a.n || 2 * b.h != a.h || 2 * b.w != a.w) {
    shape_error("mpca: next level must be exactly half the current resolution", a, b);
  }
  if (a.c != c_cur_ || b.c != c_next_) {
    shape_error("mpca: channel counts differ from construction", a, b);
  }
  Var desc_cur = reduce_cur_(ops::global_avg_pool(f_cur));
  Var desc_next = reduce_next_(ops::global_avg_pool(f_next));
  Var attention = ops::sigmoid(fuse_(ops::concat_channels(desc_cur, desc_next)));
  auto [att_cur, att_next] = ops::split_channels(attention, c_cur_);
  Var weighted_cur = ops::broadcast_mul(f_cur, att_cur);
  Var weighted_next = ops::broadcast_mul(f_next, att_next);
  return {ops::add(weighted_cur, up_(weighted_next)), attention};
}

SpatialAttention::SpatialAttention(ParameterRegistry& reg, const std::string& name,
                                   Rng& rng)
    : conv_(reg, name + ".conv", 2, 1, 7, 3, false, rng) {}

Var SpatialAttention::map(const Var& x) const {
  return ops::sigmoid(conv_(ops::concat_channels(ops::channel_max(x), ops::channel_mean(x))));
}

Var SpatialAttention::forward(const Var& x) const { return ops::broadcast_mul(x, map(x)); }

FSABlock::FSABlock(ParameterRegistry& reg, const std::string& name, std::size_t channels,
                   std::size_t h, std::size_t w, double rho, fourier::FilterMode mode,
                   Rng& rng)
    : channels_(channels),
      h_(h),
      w_(w),
      masks_(fourier::build_masks(h, w, rho)),
      filter_{mode, &reg.add(name + ".filter",
                             Tensor(Shape{1, mode == fourier::FilterMode::broadcast ? 1 : channels,
                                          h, w},
                                    Real{1}))},
      sa_(reg, name + ".sa", rng) {}

void FSABlock::check_input(const Var& x) const {
  const Shape& s = x.shape();
  if (s.h != h_ || s.w != w_ || s.c != channels_) {
    shape_error("fsa: input differs from the resolution/channels the block was built for",
                s, Shape{s.n, channels_, h_, w_});
  }
}

Var FSABlock::frequency_branch(const Var& x) const {
  check_input(x);
  CVar spectrum = fourier::dft2(x);
  CVar high = fourier::apply_mask(spectrum, masks_.high);
  CVar low = fourier::apply_mask(spectrum, masks_.low);
  CVar filtered = fourier::apply_filter(low, use(*filter_.values), filter_.mode);
  return fourier::take_real(fourier::idft2(fourier::add(high, filtered)));
}

Var FSABlock::forward(const Var& x) const {
  return ops::add(frequency_branch(x), sa_.forward(x));
}

DecoderBlock::DecoderBlock(ParameterRegistry& reg, const std::string& name,
                           std::size_t c_skip, std::size_t c_below, std::size_t c_out,
                           Rng& rng)
    : conv0_(reg, name + ".conv0", c_skip + c_below, c_out, 3, 1, true, rng),
      conv1_(reg, name + ".conv1", c_out, c_out, 3, 1, true, rng) {}

Var DecoderBlock::forward(const Var& skip, const Var& below) const {
  const Shape& a = skip.shape();
  const Shape& b = below.shape();
  if (b.n != a.n || 2 * b.h != a.h || 2 * b.w != a.w) {
    shape_error("decoder: lower input must be half the skip resolution", a, b);
  }
  Var h = ops::concat_channels(skip, ops::interpolate2x(below));
  return ops::relu(conv1_(ops::relu(conv0_(h))));
}

PredictionHead::PredictionHead(ParameterRegistry& reg, const std::string& name,
                               std::size_t cin, std::size_t n_classes, Rng& rng)
    : conv0_(reg, name + ".conv0", cin, cin, 3, 1, true, rng),
      conv1_(reg, name + ".conv1", cin, n_classes, 3, 1, true, rng) {
  if (n_classes < 2) throw std::invalid_argument("prediction head needs at least 2 classes");
}

Var PredictionHead::forward(const Var& x) const { return conv1_(ops::relu(conv0_(x))); }

}  // namespace sfunet::blocks
