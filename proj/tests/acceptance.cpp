// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sfunet/checkpoint.hpp"
#include "sfunet/config_file.hpp"
#include "sfunet/fourier.hpp"
#include "sfunet/gradcheck.hpp"
#include "sfunet/metrics.hpp"
#include "sfunet/training.hpp"

using namespace sfunet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::vector<SegmentationSample> samples_of(std::vector<data::SynthRecord> records) {
  std::vector<SegmentationSample> out;
  for (auto& r : records) out.push_back(std::move(r.sample));
  return out;
}

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

constexpr std::size_t kEncoderSizes[] = {7, 14, 28, 56, 112, 224};

// 1. FFT against the direct double sum.
Outcome dft_correctness() {
  Rng rng(101);
  double worst = 0;
  auto random_plane = [&](std::size_t h, std::size_t w) {
    ComplexTensor x(Shape{1, 1, h, w});
    for (auto& v : x.data()) v = Complex(Real(rng.uniform(-1, 1)), Real(rng.uniform(-1, 1)));
    return x;
  };
  for (std::size_t h = 1; h <= 16; ++h) {
    for (std::size_t w = 1; w <= 16; ++w) {
      const ComplexTensor x = random_plane(h, w);
      worst = std::max(worst, max_abs_diff(fourier::dft2(x), oracle::direct_dft2(x)));
    }
  }
  for (int t = 0; t < 50; ++t) {
    const std::size_t h = kEncoderSizes[rng.below(6)], w = kEncoderSizes[rng.below(6)];
    const ComplexTensor x = random_plane(h, w);
    const ComplexTensor want = h * w <= 256 * 16 ? oracle::direct_dft2(x) : oracle::direct_dft2_separable(x);
    worst = std::max(worst, max_abs_diff(fourier::dft2(x), want));
  }
  return {worst < 1e-10, "max abs error " + fmt(worst) + " (tol 1e-10)"};
}

// 2. Round trip through the differentiable path, and Parseval.
Outcome roundtrip_parseval() {
  Rng rng(102);
  double worst_rt = 0, worst_energy = 0;
  for (int t = 0; t < 100; ++t) {
    const bool encoder_size = t % 2 == 0;
    const std::size_t h = encoder_size ? kEncoderSizes[rng.below(6)] : 1 + rng.below(40);
    const std::size_t w = encoder_size ? kEncoderSizes[rng.below(6)] : 1 + rng.below(40);
    const Tensor x = oracle::random_tensor(Shape{1, 1, h, w}, rng);
    const CVar f = fourier::dft2(Var(x));
    const Tensor back = fourier::take_real(fourier::idft2(f)).value();
    double ex = 0, ef = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      worst_rt = std::max(worst_rt, std::abs(double(back[i] - x[i])));
      ex += double(x[i]) * double(x[i]);
    }
    for (const Complex& c : f.value().data()) ef += std::norm(c);
    worst_energy = std::max(worst_energy, std::abs(ef - double(h * w) * ex) / (double(h * w) * ex));
  }
  return {worst_rt < 1e-10 && worst_energy < 1e-8,
          "roundtrip " + fmt(worst_rt) + " (tol 1e-10), energy rel " + fmt(worst_energy) + " (tol 1e-8)"};
}

// 3. Masks of the default 224x224 model.
Outcome mask_algebra(Model& model) {
  Rng rng(103);
  bool ok = true;
  std::string sides;
  for (std::size_t level = 1; level <= 4; ++level) {
    const auto& m = model.fsa(level).masks();
    for (std::size_t i = 0; i < m.low.numel(); ++i) {
      ok = ok && m.low[i] + m.high[i] == 1 && m.low[i] * m.high[i] == 0;
    }
    const std::size_t s = m.low.shape().h;
    const CVar f = fourier::dft2(Var(oracle::random_tensor(Shape{2, 3, s, s}, rng)));
    const ComplexTensor sum =
        fourier::add(fourier::apply_mask(f, m.low), fourier::apply_mask(f, m.high)).value();
    for (std::size_t i = 0; i < sum.numel(); ++i) ok = ok && sum[i] == f.value()[i];
    sides += (level > 1 ? "," : "") + std::to_string(s) + ":" + std::to_string(m.side_n);
  }
  return {ok, "levels size:n " + sides + ", complementary, bit-exact recombination"};
}

// 4. Unit filter with zeroed spatial attention gives 1.5x.
Outcome fsa_identity(Model& model) {
  Rng rng(104);
  double worst = 0;
  for (std::size_t level = 1; level <= 4; ++level) {
    blocks::FSABlock& fsa = model.fsa(level);
    fsa.filter().values->value.fill(Real{1});
    fsa.spatial().conv().weight().value.fill(Real{0});
    const std::size_t s = 224 >> (level - 1);
    const Tensor x = oracle::random_tensor(Shape{2, blocks::kStageChannels[level - 1], s, s}, rng);
    NoGradScope off;
    const Tensor y = fsa.forward(Var(x)).value();
    for (std::size_t i = 0; i < x.numel(); ++i) worst = std::max(worst, std::abs(double(y[i] - 1.5 * x[i])));
  }
  std::string detail = "double max error " + fmt(worst) + " (tol 1e-10)";
  bool ok = worst < 1e-10;
#ifdef SFUNET_SINGLE_CHECK
  const int rc = std::system(SFUNET_SINGLE_CHECK);
  ok = ok && rc == 0;
  detail += rc == 0 ? "; single precision within 1e-6" : "; single precision FAILED";
#endif
  return {ok, detail};
}

// 5. Finite differences for every block.
Outcome gradient_checks() {
  bool ok = true;
  double worst = 0;
  std::string failed;
  for (const std::string& id : gradcheck::block_ids()) {
    const auto r = gradcheck::run(id, 4, 4, 1e-4, 0);
    worst = std::max(worst, r.max_error());
    if (!r.pass()) {
      ok = false;
      failed += " " + id;
    }
  }
  return {ok, std::to_string(gradcheck::block_ids().size()) + " blocks, max rel error " + fmt(worst) +
                  " (tol 1e-4)" + (failed.empty() ? "" : ", failed:" + failed)};
}

// 6. Output and encoder feature shapes.
Outcome shape_contracts() {
  Rng rng(106);
  bool ok = true;
  for (std::size_t hw : {224, 32}) {
    for (std::size_t k : {2, 4}) {
      ModelConfig c;
      c.input_h = c.input_w = hw;
      c.n_classes = k;
      const Model m(c);
      const Tensor x = oracle::random_tensor(Shape{1, 3, hw, hw}, rng, 0, 1);
      ok = ok && m.infer(x).shape() == Shape{1, k, hw, hw};
      NoGradScope off;
      const auto f = m.encoder().forward(Var(x));
      for (std::size_t i = 0; i < 5; ++i) {
        ok = ok && f[i].shape() == Shape{1, blocks::kStageChannels[i], hw >> i, hw >> i};
      }
    }
  }
  return {ok, "224 and 32, 2 and 4 classes, encoder level i at H/2^(i-1)"};
}

// 7. Parameter budget of the default model.
Outcome parameter_budget(const Model& model) {
  const auto b = model.parameter_breakdown();
  return {b.fsa < 100000, "FSA " + std::to_string(b.fsa) + " (< 100000), MPCA " + std::to_string(b.mpca) +
                              " (reported only; reference delta 3.95M), total " + std::to_string(b.total)};
}

// 8. Metrics against brute force.
Outcome metric_oracles() {
  Rng rng(108);
  double dsc_err = 0, iou_err = 0, hd_err = 0, ident_err = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t h = 1 + rng.below(16), w = 1 + rng.below(16);
    const auto p = oracle::random_mask(h, w, rng.uniform(0, 0.7), rng);
    const auto g = oracle::random_mask(h, w, rng.uniform(0, 0.7), rng);
    const double d = metrics::dsc(p, g), j = metrics::iou(p, g);
    dsc_err = std::max(dsc_err, std::abs(d - oracle::dsc(p, g)));
    iou_err = std::max(iou_err, std::abs(j - oracle::iou(p, g)));
    hd_err = std::max(hd_err, std::abs(metrics::hd95(p, g) - oracle::hd95(p, g)));
    ident_err = std::max(ident_err, std::abs(j - d / (2 - d)));
  }
  const bool ok = dsc_err < 1e-12 && iou_err < 1e-12 && hd_err < 1e-9 && ident_err < 1e-12;
  return {ok, "200 pairs: dsc " + fmt(dsc_err) + ", iou " + fmt(iou_err) + ", hd95 " + fmt(hd_err) +
                  " (tol 1e-9), iou=dsc/(2-dsc) " + fmt(ident_err)};
}

// 9. A small model memorizes eight samples.
Outcome overfit() {
  const RunConfig run = read_run_config(SFUNET_CONFIG_DIR "/toy.cfg");
  data::SynthOptions so;
  so.count = 8;
  so.classes = run.model.n_classes;
  so.h = run.model.input_h;
  so.w = run.model.input_w;
  const auto train = samples_of(data::synth_dataset(so));
  training::TrainConfig tc = run.train;
  tc.epochs = 60;  // one batch of 8 per epoch: 60 iterations
  tc.batch_size = 8;
  tc.augment = false;
  tc.keep_best = 1;
  Model model(run.model);
  training::train_loop(model, train, train, tc);
  const auto report = metrics::evaluate(model, train, run.model.n_classes, {false, 8});
  return {report.mean_dsc >= 0.95, "training DSC " + fmt(report.mean_dsc) + " after 60 iterations (>= 0.95)"};
}

// 10. Seeded runs repeat exactly; checkpoints survive a file round trip.
Outcome determinism() {
  data::SynthOptions so;
  so.count = 6;
  const auto all = samples_of(data::synth_dataset(so));
  const std::vector<SegmentationSample> train(all.begin(), all.begin() + 4), val(all.begin() + 4, all.end());
  ModelConfig mc;
  mc.input_h = mc.input_w = 32;
  mc.seed = 7;
  training::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.seed = 7;
  tc.keep_best = 1;
  std::vector<std::string> logs[2];
  std::vector<char> ckpt[2];
  for (int r = 0; r < 2; ++r) {
    Model m(mc);
    const auto res = training::train_loop(m, train, val, tc);
    for (const auto& e : res.log) logs[r].push_back(e.to_line());
    ckpt[r] = serialize_checkpoint(m);
  }
  const bool same_runs = logs[0] == logs[1] && ckpt[0] == ckpt[1];
  const auto dir = std::filesystem::temp_directory_path() / "sfunet_acceptance";
  std::filesystem::create_directories(dir);
  Model restored(parse_checkpoint(ckpt[0]).config);
  load_into(restored, parse_checkpoint(ckpt[0]));
  save_checkpoint(restored, dir / "ck.sfun");
  const bool roundtrip = serialize_checkpoint(load_model(dir / "ck.sfun")) == ckpt[0];
  std::filesystem::remove_all(dir);
  return {same_runs && roundtrip, std::string("logs and checkpoints ") + (same_runs ? "identical" : "DIFFER") +
                                      ", save/load " + (roundtrip ? "bit-exact" : "MISMATCH")};
}

// 11. The four MPCA/FSA variants train and report.
Outcome ablation() {
  data::SynthOptions so;
  so.count = 200;
  so.seed = 11;
  const auto records = data::synth_dataset(so);
  std::vector<SegmentationSample> train, val, test;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (i < 160 ? train : i < 180 ? val : test).push_back(records[i].sample);
  }
  ModelConfig mc;
  mc.input_h = mc.input_w = 32;
  training::TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.keep_best = 1;
  const auto rows = training::run_ablation(mc, tc, train, val, test);
  std::cout << training::ablation_table(rows);
  bool ok = rows.size() == 4;
  for (const auto& r : rows) ok = ok && r.test.images == test.size() && std::isfinite(r.test.mean_dsc);
  return {ok, std::to_string(rows.size()) + " variants on 160/20/20 samples, table above"};
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
              << " [" << fmt(secs) << " s]\n";
  };

  Model reference{ModelConfig{}};
  report(1, "DFT matches direct sum", dft_correctness);
  report(2, "roundtrip and Parseval", roundtrip_parseval);
  report(3, "mask algebra at 224", [&] { return mask_algebra(reference); });
  report(4, "FSA identity", [&] { return fsa_identity(reference); });
  report(5, "gradient checks", gradient_checks);
  report(6, "shape contracts", shape_contracts);
  report(7, "parameter budget", [&] { return parameter_budget(reference); });
  report(8, "metric oracles", metric_oracles);
  report(9, "overfit smoke test", overfit);
  report(10, "determinism", determinism);
  report(11, "ablation harness", ablation);
  std::cout << (failures == 0 ? "all criteria passed\n" : std::to_string(failures) + " criteria failed\n");
  return failures == 0 ? 0 : 1;
}
