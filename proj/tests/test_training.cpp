#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "sfunet/training.hpp"

using namespace sfunet;
using namespace sfunet::training;

namespace {

SegmentationSample random_sample(std::size_t h, std::size_t w, Rng& rng) {
  SegmentationSample s{oracle::random_tensor(Shape{1, 2, h, w}, rng), Labels(1, h, w), "r"};
  for (int& v : s.label.values) v = static_cast<int>(rng.below(3));
  return s;
}

bool same(const SegmentationSample& a, const SegmentationSample& b) {
  return a.label == b.label && a.image.shape() == b.image.shape() &&
         std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin());
}

std::map<int, std::size_t> histogram(const Labels& l) {
  std::map<int, std::size_t> h;
  for (int v : l.values) ++h[v];
  return h;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.input_h = c.input_w = 32;
  return c;
}

std::vector<SegmentationSample> synth(std::size_t count, std::uint64_t seed) {
  data::SynthOptions opt;
  opt.count = count;
  opt.seed = seed;
  std::vector<SegmentationSample> out;
  for (auto& r : data::synth_dataset(opt)) out.push_back(std::move(r.sample));
  return out;
}

}  // namespace

TEST_CASE("poly schedule") {
  CHECK(poly_lr(0, 100, 1e-4, 0.9) == doctest::Approx(1e-4));
  CHECK(poly_lr(50, 100, 1e-4, 0.9) == doctest::Approx(1e-4 * std::pow(0.5, 0.9)));
  CHECK(poly_lr(100, 100, 1e-4, 0.9) == 0);
  CHECK(poly_lr(99, 100, 1e-4, 0.9) > 0);
  CHECK_THROWS_AS(poly_lr(101, 100, 1e-4, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(poly_lr(0, 0, 1e-4, 0.9), std::invalid_argument);
}

TEST_CASE("Adam first step moves each weight by lr against the gradient sign") {
  // After one step m_hat = g and v_hat = g^2, so the update is
  // lr * g / (|g| + eps).
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 3}, std::vector<Real>{1, 2, 3}));
  p.grad = Tensor(Shape{1, 1, 1, 3}, std::vector<Real>{0.5, -4, 0});
  Adam adam(reg);
  adam.step(0.01);
  CHECK(p.value[0] == doctest::Approx(1 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p.value[1] == doctest::Approx(2 + 0.01 * 4 / (4 + 1e-8)).epsilon(1e-14));
  CHECK(p.value[2] == 3);
  CHECK(adam.state().step == 1);
  CHECK(adam.state().m[0][0] == doctest::Approx(0.05));
  CHECK(adam.state().v[0][1] == doctest::Approx(0.001 * 16));
}

TEST_CASE("Adam second step follows the bias-corrected recurrence") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 1}, Real{0}));
  Adam adam(reg, 0.9, 0.999, 1e-8);
  p.grad[0] = 1;
  adam.step(0.1);
  p.grad[0] = -2;
  adam.step(0.1);
  const double m = 0.9 * 0.1 + 0.1 * -2, v = 0.999 * 0.001 + 0.001 * 4;
  const double want = -0.1 * 1 / (1 + 1e-8) - 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.998001)) + 1e-8);
  CHECK(p.value[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("Adam leaves weights alone without gradient and decays when asked") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 2, 2}, Real{2}));
  reg.add("frozen", Tensor(Shape{1, 1, 1, 1}, Real{5}), false);
  Adam plain(reg);
  plain.step(0.1);
  for (Real v : p.value.data()) CHECK(v == 2);
  Adam decayed(reg, 0.9, 0.999, 1e-8, 0.5);
  decayed.step(0.1);
  for (Real v : p.value.data()) CHECK(v == doctest::Approx(2 - 0.1 * 0.5 * 2));
  CHECK(reg.at("frozen").value[0] == 5);
  CHECK(plain.state().m.size() == 1);
}

TEST_CASE("Adam state exports and imports") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 2}, Real{1}));
  Adam a(reg);
  p.grad.fill(0.3);
  a.step(0.01);
  const auto state = a.export_state();
  CHECK(state.size() == 3);
  Adam b(reg);
  b.import_state(state);
  CHECK(b.state().step == 1);
  CHECK(b.state().m[0][1] == a.state().m[0][1]);
  CHECK_THROWS_AS(b.import_state({}), std::invalid_argument);
}

TEST_CASE("flips and rotations permute pixels and labels together") {
  Rng rng(1);
  const SegmentationSample s = random_sample(5, 7, rng);
  SegmentationSample t = s;
  hflip(t);
  CHECK(t.label(0, 2, 0) == s.label(0, 2, 6));
  CHECK(t.image(0, 1, 3, 1) == s.image(0, 1, 3, 5));
  hflip(t);
  CHECK(same(t, s));
  vflip(t);
  CHECK(t.label(0, 0, 3) == s.label(0, 4, 3));
  vflip(t);
  CHECK(same(t, s));
  rot90(t);
  CHECK(t.image.shape() == Shape{1, 2, 7, 5});
  // Counter-clockwise: the top-right corner moves to the top-left.
  CHECK(t.label(0, 0, 0) == s.label(0, 0, 6));
  CHECK(t.image(0, 0, 6, 4) == s.image(0, 0, 4, 0));
  for (int i = 0; i < 3; ++i) rot90(t);
  CHECK(same(t, s));
}

TEST_CASE("augmentation preserves the label histogram") {
  Rng rng(2);
  AugmentConfig always{1, 1, 1, false, 30};
  for (int t = 0; t < 20; ++t) {
    const SegmentationSample sq = random_sample(6, 6, rng);
    CHECK(histogram(augment(sq, always, rng).label) == histogram(sq.label));
    const SegmentationSample rect = random_sample(4, 6, rng);
    const SegmentationSample out = augment(rect, always, rng);
    CHECK(out.image.shape() == rect.image.shape());
    CHECK(histogram(out.label) == histogram(rect.label));
  }
  AugmentConfig never{0, 0, 0, false, 30};
  const SegmentationSample s = random_sample(4, 4, rng);
  CHECK(same(augment(s, never, rng), s));
}

TEST_CASE("arbitrary rotation by zero degrees is the identity") {
  Rng rng(3);
  const SegmentationSample s = random_sample(6, 8, rng);
  SegmentationSample t = s;
  rotate_degrees(t, 0);
  CHECK(t.label == s.label);
  for (std::size_t i = 0; i < s.image.numel(); ++i) CHECK(t.image[i] == doctest::Approx(s.image[i]));
  rotate_degrees(t, 17);
  for (int v : t.label.values) CHECK((v >= 0 && v <= 2));
}

TEST_CASE("train config validation and keys") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.set("lr0", "0.5"));
  CHECK(c.lr0 == 0.5);
  CHECK_FALSE(c.set("lr", "1"));
  CHECK_THROWS_AS(c.set("epochs", "-1"), ConfigError);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.aug.p_hflip = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training is reproducible and reduces the loss") {
  const auto train = synth(2, 5), val = synth(1, 6);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 2;
  cfg.keep_best = 1;
  cfg.augment = false;
  {
    Model a(tiny_model());
    const TrainResult ra = train_loop(a, train, val, cfg);
    REQUIRE(ra.log.size() == 10);
    CHECK(ra.lr_trace.size() == 10);
    CHECK(ra.lr_trace.front() == doctest::Approx(cfg.lr0));
    CHECK(ra.log.back().train_loss < ra.log.front().train_loss);
    CHECK(ra.best.size() == 1);
  }
  cfg.epochs = 2;
  cfg.augment = true;
  std::vector<double> losses;
  std::vector<char> bytes;
  for (int run = 0; run < 2; ++run) {
    Model m(tiny_model());
    const TrainResult r = train_loop(m, train, val, cfg);
    if (run == 0) {
      for (const auto& rec : r.log) losses.push_back(rec.train_loss);
      bytes = r.best.front().bytes;
    } else {
      for (std::size_t i = 0; i < 2; ++i) CHECK(r.log[i].train_loss == losses[i]);
      CHECK(r.best.front().bytes == bytes);
    }
  }
}

TEST_CASE("a diverging run raises NumericError") {
  const auto train = synth(2, 7);
  TrainConfig cfg;
  cfg.lr0 = 1e12;
  cfg.epochs = 3;
  cfg.batch_size = 1;
  cfg.keep_best = 1;
  Model m(tiny_model());
  CHECK_THROWS_AS(train_loop(m, train, train, cfg), NumericError);
  CHECK_THROWS_AS(train_loop(m, {}, train, cfg), data::DataError);
}
