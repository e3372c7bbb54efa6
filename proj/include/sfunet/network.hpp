#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfunet/blocks.hpp"

namespace sfunet {

/// Raised for invalid model/train/CLI configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t input_channels = 3;
  std::size_t n_classes = 2;
  std::size_t input_h = 224;
  std::size_t input_w = 224;
  double mask_rho = 0.5;
  fourier::FilterMode filter_mode = fourier::FilterMode::broadcast;
  /// Ablation switches: without MPCA the encoder feature is the skip; without
  /// FSA the skip passes through unchanged.
  bool use_mpca = true;
  bool use_fsa = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first violated field.
  void validate() const;

  /// `key = value` lines; the format echoed into checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  /// Applies one `key = value` setting; returns false for unknown keys.
  bool set(const std::string& key, const std::string& value);

  /// Same architecture (everything except the seed).
  bool compatible_with(const ModelConfig& other) const;
};

const char* precision_name();

struct ParameterBreakdown {
  std::size_t encoder = 0;
  std::size_t mpca = 0;
  std::size_t fsa = 0;
  std::size_t decoder = 0;
  std::size_t head = 0;
  std::size_t total = 0;
};

/// Encoder, four MPCA and FSA blocks, decoder chain D4..D1, prediction head.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterRegistry& parameters() { return registry_; }
  const ParameterRegistry& parameters() const { return registry_; }

  /// Logits [N, n_classes, H, W]. Records onto the active tape, if any.
  Var forward(const Var& image) const;

  /// Forward without recording.
  Tensor infer(const Tensor& image) const;

  ParameterBreakdown parameter_breakdown() const;

  const blocks::Encoder& encoder() const { return encoder_; }
  blocks::MPCABlock& mpca(std::size_t level) { return mpca_.at(level - 1); }
  blocks::FSABlock& fsa(std::size_t level) { return fsa_.at(level - 1); }
  const blocks::FSABlock& fsa(std::size_t level) const { return fsa_.at(level - 1); }

 private:
  // Constructs MPCA/FSA/decoder blocks in registry order; returns the head.
  blocks::PredictionHead build_levels();

  ModelConfig config_;
  ParameterRegistry registry_;
  Rng init_rng_;
  blocks::Encoder encoder_;
  std::vector<blocks::MPCABlock> mpca_;
  std::vector<blocks::FSABlock> fsa_;
  std::vector<blocks::DecoderBlock> decoders_;  // index 0 is D1
  blocks::PredictionHead head_;
};

}  // namespace sfunet
