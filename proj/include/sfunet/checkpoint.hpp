#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfunet/network.hpp"

namespace sfunet {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_version, truncated, config_mismatch, tensor_mismatch };

  CheckpointError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Binary layout (all integers little-endian):
///   "SFUN" | u32 version=1 | u32 len + config text |
///   u32 count | per tensor: u16 name len, name, u8 dtype (0=f32, 1=f64),
///   u8 rank, rank x u32 dims, raw scalars
/// followed, when optimizer state is saved, by a second table of the same
/// layout.
std::vector<char> serialize_checkpoint(const Model& model,
                                       const std::vector<NamedTensor>* optimizer = nullptr);
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::vector<NamedTensor>* optimizer = nullptr);

struct LoadedCheckpoint {
  ModelConfig config;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> optimizer;  // empty when none was saved
};

LoadedCheckpoint parse_checkpoint(const std::vector<char>& bytes);
LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

/// Builds a model from the checkpoint's config and restores its parameters.
Model load_model(const std::filesystem::path& path);

/// Restores into an existing model after checking config compatibility and
/// every tensor's name and dims. Returns the optimizer table.
std::vector<NamedTensor> load_into(Model& model, const LoadedCheckpoint& ckpt);

}  // namespace sfunet
