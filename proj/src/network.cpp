#include "sfunet/network.hpp"

#include <charconv>
#include <iterator>
#include <sstream>

#include "sfunet/ops.hpp"

namespace sfunet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

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

const char* precision_name() { return sizeof(Real) == sizeof(double) ? "double" : "single"; }

void ModelConfig::validate() const {
  if (input_channels == 0) throw ConfigError("model.input_channels must be >= 1");
  if (n_classes < 2) throw ConfigError("model.n_classes must be >= 2");
  if (input_h == 0 || input_h % 16 != 0) {
    throw ConfigError("model.input_h must be a positive multiple of 16");
  }
  if (input_w == 0 || input_w % 16 != 0) {
    throw ConfigError("model.input_w must be a positive multiple of 16");
  }
  if (!(mask_rho > 0.0 && mask_rho <= 1.0)) throw ConfigError("model.mask_rho must lie in (0, 1]");
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "input_channels") {
    input_channels = parse_number<std::size_t>(key, value);
  } else if (key == "n_classes") {
    n_classes = parse_number<std::size_t>(key, value);
  } else if (key == "input_h") {
    input_h = parse_number<std::size_t>(key, value);
  } else if (key == "input_w") {
    input_w = parse_number<std::size_t>(key, value);
  } else if (key == "input_hw") {
    input_h = input_w = parse_number<std::size_t>(key, value);
  } else if (key == "mask_rho") {
    mask_rho = parse_number<double>(key, value);
  } else if (key == "filter_mode") {
    if (value == "broadcast") {
      filter_mode = fourier::FilterMode::broadcast;
    } else if (value == "per-channel" || value == "per_channel") {
      filter_mode = fourier::FilterMode::per_channel;
    } else {
      throw ConfigError("invalid filter_mode '" + value + "' (broadcast | per-channel)");
    }
  } else if (key == "use_mpca") {
    use_mpca = parse_bool(key, value);
  } else if (key == "use_fsa") {
    use_fsa = parse_bool(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "precision") {
    if (value != precision_name()) {
      throw ConfigError(std::string("precision '") + value + "' does not match this build (" +
                        precision_name() + ")");
    }
  } else {
    return false;
  }
  return true;
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "input_channels = " << input_channels << "\n"
     << "n_classes = " << n_classes << "\n"
     << "input_h = " << input_h << "\n"
     << "input_w = " << input_w << "\n"
     << "mask_rho = " << mask_rho << "\n"
     << "filter_mode = "
     << (filter_mode == fourier::FilterMode::broadcast ? "broadcast" : "per-channel") << "\n"
     << "use_mpca = " << (use_mpca ? "true" : "false") << "\n"
     << "use_fsa = " << (use_fsa ? "true" : "false") << "\n"
     << "seed = " << seed << "\n"
     << "precision = " << precision_name() << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (!cfg.set(key, trim(line.substr(eq + 1)))) {
      throw ConfigError("unknown model config key: " + key);
    }
  }
  return cfg;
}

bool ModelConfig::compatible_with(const ModelConfig& o) const {
  return input_channels == o.input_channels && n_classes == o.n_classes &&
         input_h == o.input_h && input_w == o.input_w && mask_rho == o.mask_rho &&
         filter_mode == o.filter_mode && use_mpca == o.use_mpca && use_fsa == o.use_fsa;
}

namespace {
const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}
}  // namespace

Model::Model(const ModelConfig& config)
    : config_(validated(config)),
      init_rng_(config.seed),
      encoder_(registry_, config.input_channels, init_rng_),
      head_(build_levels()) {}

blocks::PredictionHead Model::build_levels() {
  using blocks::kStageChannels;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string level = std::to_string(i + 1);
    if (config_.use_mpca) {
      mpca_.emplace_back(registry_, "mpca" + level, kStageChannels[i], kStageChannels[i + 1],
                         init_rng_);
    }
    if (config_.use_fsa) {
      fsa_.emplace_back(registry_, "fsa" + level, kStageChannels[i], config_.input_h >> i,
                        config_.input_w >> i, config_.mask_rho, config_.filter_mode, init_rng_);
    }
  }
  std::vector<blocks::DecoderBlock> top_down;
  for (std::size_t i = 4; i-- > 0;) {
    top_down.emplace_back(registry_, "dec" + std::to_string(i + 1), kStageChannels[i],
                          kStageChannels[i + 1], kStageChannels[i], init_rng_);
  }
  decoders_.assign(std::make_move_iterator(top_down.rbegin()),
                   std::make_move_iterator(top_down.rend()));
  return blocks::PredictionHead(registry_, "head", kStageChannels[0], config_.n_classes,
                                init_rng_);
}

Var Model::forward(const Var& image) const {
  const Shape& s = image.shape();
  if (s.c != config_.input_channels || s.h != config_.input_h || s.w != config_.input_w) {
    shape_error("model: input must match the configured channels and resolution", s,
                Shape{s.n, config_.input_channels, config_.input_h, config_.input_w});
  }
  const auto features = encoder_.forward(image);
  std::array<Var, 4> skips;
  for (std::size_t i = 0; i < 4; ++i) {
    Var skip = config_.use_mpca ? mpca_[i].forward(features[i], features[i + 1]) : features[i];
    skips[i] = config_.use_fsa ? fsa_[i].forward(skip) : skip;
  }
  Var d = features[4];
  for (std::size_t i = 4; i-- > 0;) d = decoders_[i].forward(skips[i], d);
  return head_.forward(d);
}

Tensor Model::infer(const Tensor& image) const {
  NoGradScope no_grad;
  return forward(Var(image)).value();
}

ParameterBreakdown Model::parameter_breakdown() const {
  ParameterBreakdown b;
  b.encoder = registry_.count("enc");
  b.mpca = registry_.count("mpca");
  b.fsa = registry_.count("fsa");
  b.decoder = registry_.count("dec");
  b.head = registry_.count("head");
  b.total = registry_.count();
  return b;
}

}  // namespace sfunet
