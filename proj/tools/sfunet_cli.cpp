// Command-line front end: train, eval, predict, gradcheck, synth, spectrum,
// build and ablation.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration, 3 data,
// 4 numeric failure (non-finite loss, failed gradient check).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfunet/checkpoint.hpp"
#include "sfunet/config_file.hpp"
#include "sfunet/data.hpp"
#include "sfunet/fourier.hpp"
#include "sfunet/gradcheck.hpp"
#include "sfunet/metrics.hpp"
#include "sfunet/network.hpp"
#include "sfunet/pnm.hpp"
#include "sfunet/training.hpp"

namespace fs = std::filesystem;
using namespace sfunet;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data::DataError(data::DataError::Kind::io, "cannot write " + path.string());
  out << text;
}

void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data::DataError(data::DataError::Kind::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

data::Manifest open_manifest(const fs::path& data_dir, const std::string& name) {
  fs::path p(name);
  if (p.is_relative()) p = data_dir / p;
  return data::read_manifest(p);
}

std::vector<SegmentationSample> load(const data::Manifest& m, const std::string& split,
                                     const ModelConfig& mc) {
  return data::load_split(m, data::parse_split(split), mc.input_channels, mc.n_classes,
                          mc.input_h, mc.input_w);
}

void write_gray(const fs::path& path, std::size_t h, std::size_t w,
                std::vector<std::uint8_t> pixels) {
  pnm::Image img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.pixels = std::move(pixels);
  pnm::write(path, img);
}

std::vector<std::uint8_t> mask_pixels(const Tensor& mask) {
  std::vector<std::uint8_t> px(mask.numel());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask[i] != Real{0} ? 255 : 0;
  return px;
}

// Settings shared by train and ablation: config file, then --seed.
RunConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed) {
  RunConfig cfg = path.empty() ? RunConfig{} : read_run_config(path);
  if (seed) {
    cfg.model.seed = *seed;
    cfg.train.seed = *seed;
  }
  return cfg;
}

struct TrainArgs {
  std::string config, data, out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.seed);
  const auto manifest = open_manifest(a.data, cfg.data.manifest);
  const auto train = load(manifest, cfg.data.train_split, cfg.model);
  const auto val = load(manifest, cfg.data.val_split, cfg.model);

  fs::create_directories(a.out);
  std::ofstream log(a.out / fs::path("train.log"), std::ios::binary);
  log << "epoch\tlr\ttrain_loss\tval_dsc\tval_iou\n";
  Model model(cfg.model);
  training::TrainResult result;
  try {
    result = training::train_loop(model, train, val, cfg.train, [&](const training::EpochRecord& r) {
      log << r.to_line() << '\n';
      log.flush();
      std::cout << r.to_line() << '\n';
    });
  } catch (const training::NumericError& e) {
    log << "aborted at epoch " << e.epoch() << ": " << e.what() << '\n';
    throw;
  }
  for (std::size_t i = 0; i < result.best.size(); ++i) {
    const auto& b = result.best[i];
    const fs::path p = a.out / fs::path("best_" + std::to_string(i + 1) + ".sfun");
    write_bytes(p, b.bytes);
    std::cout << p.string() << "\tepoch " << b.epoch << "\tval_iou " << b.val_iou << '\n';
  }
  write_text(a.out / fs::path("config.txt"), cfg.to_text());
  return kOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& manifest_name,
             const std::string& split, const std::string& out, bool no_hd95, std::size_t batch) {
  const Model model = load_model(ckpt);
  const auto manifest = open_manifest(data_dir, manifest_name);
  const auto samples = load(manifest, split, model.config());
  const auto report = metrics::evaluate(model, samples, model.config().n_classes,
                                        metrics::EvalOptions{!no_hd95, batch});
  std::cout << report.to_tsv();
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / ("metrics_" + split + ".tsv"), report.to_tsv());
    write_text(fs::path(out) / ("metrics_" + split + ".txt"), report.to_text());
  }
  return kOk;
}

int cmd_predict(const std::string& ckpt, const std::string& image, const std::string& out) {
  const Model model = load_model(ckpt);
  const auto& mc = model.config();
  const Tensor x = data::load_image(image, mc.input_channels, mc.input_h, mc.input_w);
  const Labels pred = metrics::argmax(model.infer(x));
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  data::save_label(p, pred);
  return kOk;
}

int cmd_gradcheck(const std::string& block, std::size_t size, double tol, std::uint64_t seed) {
  std::vector<std::string> ids;
  if (block == "all") {
    ids = gradcheck::block_ids();
  } else {
    ids.push_back(block);
  }
  bool ok = true;
  for (const auto& id : ids) {
    const auto report = gradcheck::run(id, size, size, tol, seed);
    std::cout << report.to_text();
    ok = ok && report.pass();
  }
  std::cout << (ok ? "gradcheck: pass\n" : "gradcheck: FAIL\n");
  return ok ? kOk : kNumeric;
}

int cmd_synth(const data::SynthOptions& opt, const std::string& out) {
  const auto m = data::synth_generate(opt, out);
  std::cout << "wrote " << m.entries.size() << " samples to " << out << '\n';
  return kOk;
}

int cmd_spectrum(const std::string& ckpt, std::size_t level, const std::string& image,
                 const std::string& out) {
  const Model model = load_model(ckpt);
  const auto& mc = model.config();
  if (!mc.use_fsa) throw ConfigError("checkpoint was trained without FSA blocks");
  if (level < 1 || level > 4) throw ConfigError("level must be 1..4, got " + std::to_string(level));
  const auto& block = model.fsa(level);
  const Tensor& low = block.masks().low;
  const std::size_t h = low.shape().h;
  const std::size_t w = low.shape().w;
  fs::create_directories(out);
  const fs::path dir(out);
  write_gray(dir / "mask_low.pgm", h, w, mask_pixels(low));
  write_gray(dir / "mask_high.pgm", h, w, mask_pixels(block.masks().high));

  // Filter magnitude, averaged over channels in per-channel mode.
  const Tensor& f = block.filter().values->value;
  std::vector<Real> mag(h * w, Real{0});
  for (std::size_t c = 0; c < f.shape().c; ++c) {
    const auto plane = f.plane(0, c);
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] += std::abs(plane[i]);
  }
  for (Real& v : mag) v /= static_cast<Real>(f.shape().c);
  write_gray(dir / "filter.pgm", h, w, fourier::log_magnitude_image(mag));

  if (!image.empty()) {
    // Magnitude spectrum of the input resized to the level, averaged over channels.
    const Tensor x = data::load_image(image, mc.input_channels, h, w);
    const ComplexTensor spec = fourier::dft2(x);
    std::vector<Real> smag(h * w, Real{0});
    for (std::size_t c = 0; c < x.shape().c; ++c) {
      for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
          smag[fourier::centered_index(u, h) * w + fourier::centered_index(v, w)] +=
              std::abs(spec(0, c, u, v)) / static_cast<Real>(x.shape().c);
        }
      }
    }
    write_gray(dir / "image_spectrum.pgm", h, w, fourier::log_magnitude_image(smag));
  }
  std::cout << "level " << level << ": " << h << "x" << w << ", low band side "
            << block.masks().side_n << '\n';
  return kOk;
}

int cmd_build(const std::string& config, const std::vector<std::string>& sets) {
  RunConfig cfg = config.empty() ? RunConfig{} : read_run_config(config);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || !cfg.model.set(kv.substr(0, eq), kv.substr(eq + 1))) {
      throw ConfigError("bad --set '" + kv + "' (expected a model key=value)");
    }
  }
  cfg.model.validate();
  const Model model(cfg.model);
  const auto b = model.parameter_breakdown();
  std::cout << cfg.model.to_text() << '\n';
  std::cout << "encoder\t" << b.encoder << "\nmpca\t" << b.mpca << "\nfsa\t" << b.fsa
            << "\ndecoder\t" << b.decoder << "\nhead\t" << b.head << "\ntotal\t" << b.total << '\n';
  for (std::size_t level = 1; level <= 4; ++level) {
    const std::string l = std::to_string(level);
    const auto& reg = model.parameters();
    if (cfg.model.use_mpca) std::cout << "mpca" << l << '\t' << reg.count("mpca" + l + ".") << '\n';
    if (cfg.model.use_fsa) {
      std::cout << "fsa" << l << ".filter\t" << reg.count("fsa" + l + ".filter") << '\n'
                << "fsa" << l << ".sa\t" << reg.count("fsa" + l + ".sa") << '\n';
    }
  }
  return kOk;
}

int cmd_ablation(const TrainArgs& a, const std::string& test_split) {
  const RunConfig cfg = resolve_config(a.config, a.seed);
  const auto manifest = open_manifest(a.data, cfg.data.manifest);
  const auto train = load(manifest, cfg.data.train_split, cfg.model);
  const auto val = load(manifest, cfg.data.val_split, cfg.model);
  const auto test = load(manifest, test_split, cfg.model);
  const auto rows = training::run_ablation(cfg.model, cfg.train, train, val, test);
  const std::string table = training::ablation_table(rows);
  std::cout << table;
  fs::create_directories(a.out);
  write_text(a.out / fs::path("ablation.tsv"), table);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SF-UNet segmentation toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "Train and keep the top checkpoints by validation IoU");
  train->add_option("--config", train_args.config, "Run config file")->required();
  train->add_option("--data", train_args.data, "Dataset directory holding the manifest")->required();
  train->add_option("--out", train_args.out, "Output directory")->required();
  auto* train_seed_opt = train->add_option("--seed", train_seed, "Seed for init, shuffling and augmentation");

  std::string ckpt, data_dir, split = "test", out, manifest = "manifest.tsv";
  bool no_hd95 = false;
  std::size_t eval_batch = 4;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--split", split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--manifest", manifest)->capture_default_str();
  eval->add_option("--out", out, "Directory for report files");
  eval->add_option("--batch", eval_batch)->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_flag("--no-hd95", no_hd95);

  std::string image;
  auto* predict = app.add_subcommand("predict", "Write the argmax label map of one image");
  predict->add_option("--ckpt", ckpt)->required();
  predict->add_option("--image", image)->required();
  predict->add_option("--out", out, "Output PGM path")->required();

  std::string block = "all";
  std::size_t gc_size = 4;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of block gradients");
  gc->add_option("--block", block, "Block id or 'all'")->capture_default_str();
  gc->add_option("--size", gc_size, "Spatial size of the test tensors")->capture_default_str();
  gc->add_option("--tol", gc_tol)->capture_default_str();
  gc->add_option("--seed", gc_seed)->capture_default_str();

  data::SynthOptions synth_opt;
  std::size_t synth_size = synth_opt.h;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ellipse dataset");
  synth->add_option("--count", synth_opt.count)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--classes", synth_opt.classes)->capture_default_str()->check(CLI::Range(2, 4));
  synth->add_option("--size", synth_size, "Image height and width")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--channels", synth_opt.channels)->capture_default_str()->check(CLI::IsMember({1, 3}));
  synth->add_option("--seed", synth_opt.seed)->capture_default_str();
  synth->add_option("--out", out)->required();

  std::size_t level = 1;
  auto* spectrum = app.add_subcommand("spectrum", "Dump FSA masks and filter magnitude");
  spectrum->add_option("--ckpt", ckpt)->required();
  spectrum->add_option("--level", level)->capture_default_str();
  spectrum->add_option("--image", image, "Also dump this image's spectrum");
  spectrum->add_option("--out", out)->required();

  std::string build_config;
  std::vector<std::string> build_sets;
  auto* build = app.add_subcommand("build", "Construct the model and report parameter counts");
  build->add_option("--config", build_config);
  build->add_option("--set", build_sets, "Model override key=value (repeatable)");

  TrainArgs abl_args;
  std::uint64_t abl_seed = 0;
  std::string abl_test = "test";
  auto* ablation = app.add_subcommand("ablation", "Train and compare the four MPCA/FSA variants");
  ablation->add_option("--config", abl_args.config, "Run config file");
  ablation->add_option("--data", abl_args.data)->required();
  ablation->add_option("--out", abl_args.out)->required();
  ablation->add_option("--test-split", abl_test)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  auto* abl_seed_opt = ablation->add_option("--seed", abl_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train) {
      if (*train_seed_opt) train_args.seed = train_seed;
      return cmd_train(train_args);
    }
    if (*eval) return cmd_eval(ckpt, data_dir, manifest, split, out, no_hd95, eval_batch);
    if (*predict) return cmd_predict(ckpt, image, out);
    if (*gc) return cmd_gradcheck(block, gc_size, gc_tol, gc_seed);
    if (*synth) {
      synth_opt.h = synth_opt.w = synth_size;
      return cmd_synth(synth_opt, out);
    }
    if (*spectrum) return cmd_spectrum(ckpt, level, image, out);
    if (*build) return cmd_build(build_config, build_sets);
    if (*ablation) {
      if (*abl_seed_opt) abl_args.seed = abl_seed;
      return cmd_ablation(abl_args, abl_test);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return e.kind() == CheckpointError::Kind::config_mismatch ||
                   e.kind() == CheckpointError::Kind::tensor_mismatch
               ? kConfig
               : kData;
  } catch (const data::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const pnm::PnmError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const training::NumericError& e) {
    std::cerr << "numeric error at epoch " << e.epoch() << ": " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    // Unknown gradcheck block ids and similar argument errors.
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
