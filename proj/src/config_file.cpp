#include "sfunet/config_file.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sfunet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool DataSettings::set(const std::string& key, const std::string& value) {
  if (key == "manifest") {
    manifest = value;
  } else if (key == "train_split") {
    train_split = value;
  } else if (key == "val_split") {
    val_split = value;
  } else if (key == "eval_batch") {
    std::size_t v = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc{} || ptr != end || v == 0) {
      throw ConfigError("invalid value for eval_batch: '" + value + "'");
    }
    eval_batch = v;
  } else {
    return false;
  }
  return true;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "[model]\n" << model.to_text();
  os << "\n[train]\n";
  os << std::setprecision(17);
  os << "lr0 = " << train.lr0 << "\nepochs = " << train.epochs
     << "\nbatch_size = " << train.batch_size << "\npoly_power = " << train.poly_power
     << "\nbeta1 = " << train.beta1 << "\nbeta2 = " << train.beta2 << "\neps = " << train.eps
     << "\nweight_decay = " << train.weight_decay << "\ndice_epsilon = " << train.dice_epsilon
     << "\nw_ce = " << train.w_ce << "\nw_dice = " << train.w_dice << "\nseed = " << train.seed
     << "\naugment = " << (train.augment ? "true" : "false")
     << "\np_hflip = " << train.aug.p_hflip << "\np_vflip = " << train.aug.p_vflip
     << "\np_rotate = " << train.aug.p_rotate
     << "\narbitrary_rotation = " << (train.aug.arbitrary_rotation ? "true" : "false")
     << "\nmax_angle_deg = " << train.aug.max_angle_deg << "\nkeep_best = " << train.keep_best;
  os << "\n\n[data]\nmanifest = " << data.manifest << "\ntrain_split = " << data.train_split
     << "\nval_split = " << data.val_split << "\neval_batch = " << data.eval_batch << '\n';
  return os.str();
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "data") {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any section");
    bool known = false;
    try {
      if (section == "model") known = cfg.model.set(key, value);
      else if (section == "train") known = cfg.train.set(key, value);
      else known = cfg.data.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (!known) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

}  // namespace sfunet
