#include "sfunet/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sfunet/metrics.hpp"

namespace sfunet::training {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + value + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("train.lr0 must be > 0");
  if (!(poly_power > 0)) throw ConfigError("train.poly_power must be > 0");
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("train.eps must be > 0");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  for (double p : {aug.p_hflip, aug.p_vflip, aug.p_rotate}) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("train augmentation probabilities must lie in [0, 1]");
  }
  if (keep_best == 0) throw ConfigError("train.keep_best must be >= 1");
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "lr0") lr0 = parse_number<double>(key, value);
  else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "poly_power") poly_power = parse_number<double>(key, value);
  else if (key == "beta1") beta1 = parse_number<double>(key, value);
  else if (key == "beta2") beta2 = parse_number<double>(key, value);
  else if (key == "eps") eps = parse_number<double>(key, value);
  else if (key == "weight_decay") weight_decay = parse_number<double>(key, value);
  else if (key == "dice_epsilon") dice_epsilon = parse_number<double>(key, value);
  else if (key == "w_ce") w_ce = parse_number<double>(key, value);
  else if (key == "w_dice") w_dice = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "augment") augment = parse_bool(key, value);
  else if (key == "p_hflip") aug.p_hflip = parse_number<double>(key, value);
  else if (key == "p_vflip") aug.p_vflip = parse_number<double>(key, value);
  else if (key == "p_rotate") aug.p_rotate = parse_number<double>(key, value);
  else if (key == "arbitrary_rotation") aug.arbitrary_rotation = parse_bool(key, value);
  else if (key == "max_angle_deg") aug.max_angle_deg = parse_number<double>(key, value);
  else if (key == "keep_best") keep_best = parse_number<std::size_t>(key, value);
  else return false;
  return true;
}

double poly_lr(std::size_t iter, std::size_t max_iter, double lr0, double power) {
  if (max_iter == 0) throw std::invalid_argument("poly_lr: max_iter must be positive");
  if (iter > max_iter) {
    throw std::invalid_argument("poly_lr: iter " + std::to_string(iter) + " beyond max_iter " +
                                std::to_string(max_iter));
  }
  return lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

Adam::Adam(ParameterRegistry& registry, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  for (Parameter* p : registry.params()) {
    if (!p->trainable) continue;
    params_.push_back(p);
    state_.m.emplace_back(p->value.shape());
    state_.v.emplace_back(p->value.shape());
  }
}

void Adam::step(double lr) {
  if (params_.empty()) throw std::logic_error("adam: no trainable parameters to update");
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.grad.shape() != p.value.shape()) {
      throw std::logic_error("adam: gradient of " + p.name + " has the wrong dims");
    }
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto m = state_.m[i].data();
    auto v = state_.v[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      const double mj = beta1_ * m[j] + (1.0 - beta1_) * g;
      const double vj = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps_) + weight_decay_ * value[j];
      value[j] = static_cast<Real>(value[j] - lr * update);
    }
  }
}

std::vector<NamedTensor> Adam::export_state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"adam.m." + params_[i]->name, state_.m[i]});
    out.push_back({"adam.v." + params_[i]->name, state_.v[i]});
  }
  out.push_back({"adam.step", Tensor(Shape{1, 1, 1, 1}, static_cast<Real>(state_.step))});
  return out;
}

void Adam::import_state(const std::vector<NamedTensor>& tensors) {
  auto find = [&tensors](const std::string& name) -> const Tensor& {
    for (const auto& nt : tensors) {
      if (nt.name == name) return nt.value;
    }
    throw std::invalid_argument("optimizer state lacks " + name);
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& m = find("adam.m." + params_[i]->name);
    const Tensor& v = find("adam.v." + params_[i]->name);
    if (m.shape() != params_[i]->value.shape() || v.shape() != params_[i]->value.shape()) {
      throw std::invalid_argument("optimizer moment dims differ for " + params_[i]->name);
    }
    state_.m[i] = m;
    state_.v[i] = v;
  }
  state_.step = static_cast<std::uint64_t>(find("adam.step")[0]);
}

void hflip(SegmentationSample& s) {
  const Shape sh = s.image.shape();
  for (std::size_t c = 0; c < sh.c; ++c) {
    for (std::size_t y = 0; y < sh.h; ++y) {
      auto row = s.image.plane(0, c).subspan(y * sh.w, sh.w);
      std::reverse(row.begin(), row.end());
    }
  }
  for (std::size_t y = 0; y < s.label.h; ++y) {
    auto* row = s.label.values.data() + y * s.label.w;
    std::reverse(row, row + s.label.w);
  }
}

void vflip(SegmentationSample& s) {
  const Shape sh = s.image.shape();
  for (std::size_t c = 0; c < sh.c; ++c) {
    auto plane = s.image.plane(0, c);
    for (std::size_t y = 0; y < sh.h / 2; ++y) {
      std::swap_ranges(plane.begin() + static_cast<long>(y * sh.w),
                       plane.begin() + static_cast<long>((y + 1) * sh.w),
                       plane.begin() + static_cast<long>((sh.h - 1 - y) * sh.w));
    }
  }
  for (std::size_t y = 0; y < s.label.h / 2; ++y) {
    std::swap_ranges(s.label.values.begin() + static_cast<long>(y * s.label.w),
                     s.label.values.begin() + static_cast<long>((y + 1) * s.label.w),
                     s.label.values.begin() + static_cast<long>((s.label.h - 1 - y) * s.label.w));
  }
}

void rot90(SegmentationSample& s) {
  const Shape sh = s.image.shape();
  Tensor img(Shape{1, sh.c, sh.w, sh.h});
  Labels lab(1, sh.w, sh.h);
  for (std::size_t y = 0; y < sh.w; ++y) {
    for (std::size_t x = 0; x < sh.h; ++x) {
      const std::size_t sy = x;
      const std::size_t sx = sh.w - 1 - y;
      for (std::size_t c = 0; c < sh.c; ++c) img(0, c, y, x) = s.image(0, c, sy, sx);
      lab(0, y, x) = s.label(0, sy, sx);
    }
  }
  s.image = std::move(img);
  s.label = std::move(lab);
}

void rotate_degrees(SegmentationSample& s, double degrees) {
  const Shape sh = s.image.shape();
  const double rad = degrees * 3.141592653589793 / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cy = (static_cast<double>(sh.h) - 1) / 2;
  const double cx = (static_cast<double>(sh.w) - 1) / 2;
  Tensor img(sh);
  Labels lab(1, sh.h, sh.w);
  for (std::size_t y = 0; y < sh.h; ++y) {
    for (std::size_t x = 0; x < sh.w; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      const long nx = std::lround(sx);
      const long ny = std::lround(sy);
      if (nx >= 0 && ny >= 0 && nx < static_cast<long>(sh.w) && ny < static_cast<long>(sh.h)) {
        lab(0, y, x) = s.label(0, static_cast<std::size_t>(ny), static_cast<std::size_t>(nx));
      }
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double tx = sx - fx;
      const double ty = sy - fy;
      for (std::size_t c = 0; c < sh.c; ++c) {
        auto sample = [&](double yy, double xx) -> double {
          if (xx < 0 || yy < 0 || xx >= static_cast<double>(sh.w) || yy >= static_cast<double>(sh.h)) {
            return 0.0;
          }
          return s.image(0, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        };
        const double v = (1 - ty) * ((1 - tx) * sample(fy, fx) + tx * sample(fy, fx + 1)) +
                         ty * ((1 - tx) * sample(fy + 1, fx) + tx * sample(fy + 1, fx + 1));
        img(0, c, y, x) = static_cast<Real>(v);
      }
    }
  }
  s.image = std::move(img);
  s.label = std::move(lab);
}

SegmentationSample augment(SegmentationSample s, const AugmentConfig& cfg, Rng& rng) {
  // Every draw happens regardless of outcome so the stream stays aligned.
  const bool do_h = rng.bernoulli(cfg.p_hflip);
  const bool do_v = rng.bernoulli(cfg.p_vflip);
  const bool do_r = rng.bernoulli(cfg.p_rotate);
  const std::uint64_t quarter_turns = 1 + rng.below(3);
  const double angle = rng.uniform(-cfg.max_angle_deg, cfg.max_angle_deg);
  if (do_h) hflip(s);
  if (do_v) vflip(s);
  if (do_r) {
    if (cfg.arbitrary_rotation) {
      rotate_degrees(s, angle);
    } else {
      // Non-square inputs only admit the half turn without changing dims.
      const std::uint64_t k = s.label.h == s.label.w ? quarter_turns : 2;
      for (std::uint64_t i = 0; i < k; ++i) rot90(s);
    }
  }
  return s;
}

std::string EpochRecord::to_line() const {
  std::ostringstream os;
  os << epoch << '\t' << std::setprecision(9) << lr << '\t' << std::setprecision(9) << train_loss
     << '\t' << std::fixed << std::setprecision(6) << val_dsc << '\t' << val_iou;
  return os.str();
}

TrainResult train_loop(Model& model, const std::vector<SegmentationSample>& train,
                       const std::vector<SegmentationSample>& val, const TrainConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train.empty()) throw data::DataError(data::DataError::Kind::empty, "training split is empty");
  if (val.empty()) throw data::DataError(data::DataError::Kind::empty, "validation split is empty");

  ParameterRegistry& registry = model.parameters();
  Adam adam(registry, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  Rng rng(cfg.seed);
  const losses::LossWeights weights{static_cast<Real>(cfg.w_ce), static_cast<Real>(cfg.w_dice),
                                    static_cast<Real>(cfg.dice_epsilon)};
  const std::size_t batches = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t max_iter = cfg.epochs * batches;

  TrainResult result;
  std::size_t iter = 0;
  std::vector<std::size_t> order(train.size());
  registry.zero_grad();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<SegmentationSample> batch;
      for (std::size_t i = b * cfg.batch_size; i < std::min(train.size(), (b + 1) * cfg.batch_size); ++i) {
        batch.push_back(cfg.augment ? augment(train[order[i]], cfg.aug, rng) : train[order[i]]);
      }
      auto [images, labels] = data::stack(batch, 0, batch.size());
      const double lr = poly_lr(iter, max_iter, cfg.lr0, cfg.poly_power);
      if (b == 0) rec.lr = lr;
      result.lr_trace.push_back(lr);

      Tape tape;
      TapeScope scope(tape);
      const Var logits = model.forward(Var(std::move(images)));
      const Var loss = losses::total_loss(logits, labels, weights);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError(epoch, "non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                                      std::to_string(iter) + " (lr " + std::to_string(lr) + ")");
      }
      loss_sum += value;
      tape.backward(loss);
      adam.step(lr);
      registry.zero_grad();
      ++iter;
    }
    rec.train_loss = loss_sum / static_cast<double>(batches);

    const auto report = metrics::evaluate(model, val, model.config().n_classes,
                                          metrics::EvalOptions{false, cfg.batch_size});
    rec.val_dsc = report.mean_dsc;
    rec.val_iou = report.mean_iou;
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    // Strictly better IoU displaces; ties keep the earlier epoch.
    auto pos = std::find_if(result.best.begin(), result.best.end(),
                            [&](const RetainedCheckpoint& c) { return rec.val_iou > c.val_iou; });
    if (pos != result.best.end() || result.best.size() < cfg.keep_best) {
      result.best.insert(pos, RetainedCheckpoint{epoch, rec.val_iou, serialize_checkpoint(model)});
      if (result.best.size() > cfg.keep_best) result.best.pop_back();
    }
  }
  return result;
}

std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& cfg,
                                      const std::vector<SegmentationSample>& train,
                                      const std::vector<SegmentationSample>& val,
                                      const std::vector<SegmentationSample>& test) {
  std::vector<AblationRow> rows;
  for (const bool mpca : {false, true}) {
    for (const bool fsa : {false, true}) {
      ModelConfig mc = base;
      mc.use_mpca = mpca;
      mc.use_fsa = fsa;
      Model model(mc);
      AblationRow row;
      row.variant = std::string(mpca ? "+mpca" : "-mpca") + (fsa ? "+fsa" : "-fsa");
      row.use_mpca = mpca;
      row.use_fsa = fsa;
      row.parameters = model.parameters().count();
      const TrainResult r = train_loop(model, train, val, cfg);
      row.best_epoch = r.best.front().epoch;
      row.val_iou = r.best.front().val_iou;
      load_into(model, parse_checkpoint(r.best.front().bytes));
      row.test = metrics::evaluate(model, test, mc.n_classes,
                                   metrics::EvalOptions{true, cfg.batch_size});
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant\tmpca\tfsa\tparams\tbest_epoch\tval_iou\ttest_dsc\ttest_iou\ttest_hd95\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << r.variant << '\t' << (r.use_mpca ? "on" : "off") << '\t' << (r.use_fsa ? "on" : "off")
       << '\t' << r.parameters << '\t' << r.best_epoch << '\t' << r.val_iou << '\t'
       << r.test.mean_dsc << '\t' << r.test.mean_iou << '\t' << r.test.mean_hd95 << '\n';
  }
  return os.str();
}

}  // namespace sfunet::training
