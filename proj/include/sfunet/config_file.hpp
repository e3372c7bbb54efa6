#pragma once

#include <filesystem>
#include <string>

#include "sfunet/network.hpp"
#include "sfunet/training.hpp"

namespace sfunet {

struct DataSettings {
  /// Relative paths resolve against the --data directory.
  std::string manifest = "manifest.tsv";
  std::string train_split = "train";
  std::string val_split = "val";
  std::size_t eval_batch = 4;

  bool set(const std::string& key, const std::string& value);
};

/// Sections [model], [train] and [data] of `key = value` lines. `#` starts a
/// comment; blank lines are ignored.
struct RunConfig {
  ModelConfig model;
  training::TrainConfig train;
  DataSettings data;

  std::string to_text() const;
};

/// Throws ConfigError citing `source:line` for syntax errors, unknown
/// sections or keys and bad values; validates the result.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig read_run_config(const std::filesystem::path& path);

}  // namespace sfunet
