#include "sfunet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sfunet {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'U', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtype = sizeof(Real) == sizeof(double) ? 1 : 0;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<char> take() { return std::move(out_); }

 private:
  std::vector<char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& in) : in_(in) {}

  void bytes(void* p, std::size_t n) {
    if (n > in_.size() - pos_) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            "truncated checkpoint: needed " + std::to_string(n) +
                                " bytes at offset " + std::to_string(pos_));
    }
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T scalar() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<char>& in_;
  std::size_t pos_ = 0;
};

void write_table(Writer& w, const std::vector<std::pair<std::string, const Tensor*>>& table) {
  w.u32(static_cast<std::uint32_t>(table.size()));
  for (const auto& [name, t] : table) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(kDtype);
    w.u8(4);
    const Shape& s = t->shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(t->data().data(), t->numel() * sizeof(Real));
  }
}

std::vector<NamedTensor> read_table(Reader& r) {
  const auto count = r.scalar<std::uint32_t>();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.str(r.scalar<std::uint16_t>());
    const auto dtype = r.scalar<std::uint8_t>();
    if (dtype != kDtype) {
      throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                            "tensor " + nt.name + " has dtype tag " + std::to_string(dtype) +
                                " but this build uses " + std::to_string(kDtype));
    }
    const auto rank = r.scalar<std::uint8_t>();
    if (rank == 0 || rank > 4) {
      throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                            "tensor " + nt.name + " has unsupported rank " + std::to_string(rank));
    }
    std::size_t dims[4] = {1, 1, 1, 1};
    for (std::size_t d = 4 - rank; d < 4; ++d) dims[d] = r.scalar<std::uint32_t>();
    nt.value = Tensor(Shape{dims[0], dims[1], dims[2], dims[3]});
    r.bytes(nt.value.data().data(), nt.value.numel() * sizeof(Real));
    out.push_back(std::move(nt));
  }
  return out;
}

}  // namespace

std::vector<char> serialize_checkpoint(const Model& model,
                                       const std::vector<NamedTensor>* optimizer) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.str32(model.config().to_text());
  std::vector<std::pair<std::string, const Tensor*>> table;
  for (const Parameter* p : model.parameters().params()) table.emplace_back(p->name, &p->value);
  write_table(w, table);
  if (optimizer != nullptr) {
    table.clear();
    for (const auto& nt : *optimizer) table.emplace_back(nt.name, &nt.value);
    write_table(w, table);
  }
  return w.take();
}

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::vector<NamedTensor>* optimizer) {
  const auto bytes = serialize_checkpoint(model, optimizer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::io,
                          "cannot open checkpoint for writing: " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed: " + path.string());
}

LoadedCheckpoint parse_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "not a checkpoint (missing SFUN magic)");
  }
  Reader r(bytes);
  r.str(4);
  const auto version = r.scalar<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  LoadedCheckpoint ck;
  const std::string text = r.str(r.scalar<std::uint32_t>());
  try {
    ck.config = ModelConfig::from_text(text);
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::config_mismatch,
                          std::string("checkpoint config rejected: ") + e.what());
  }
  ck.parameters = read_table(r);
  if (!r.done()) ck.optimizer = read_table(r);
  if (!r.done()) {
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "trailing bytes after checkpoint tables");
  }
  return ck;
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint: " + path.string());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

std::vector<NamedTensor> load_into(Model& model, const LoadedCheckpoint& ckpt) {
  if (!model.config().compatible_with(ckpt.config)) {
    throw CheckpointError(CheckpointError::Kind::config_mismatch,
                          "checkpoint config does not match model config:\n--- checkpoint\n" +
                              ckpt.config.to_text() + "--- model\n" + model.config().to_text());
  }
  const auto params = model.parameters().params();
  if (params.size() != ckpt.parameters.size()) {
    throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                          "checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                              " tensors, model has " + std::to_string(params.size()));
  }
  for (const auto& nt : ckpt.parameters) {
    Parameter* p = model.parameters().find(nt.name);
    if (p == nullptr) {
      throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                            "checkpoint tensor " + nt.name + " has no model parameter");
    }
    if (p->value.shape() != nt.value.shape()) {
      throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                            "tensor " + nt.name + " dims " + to_string(nt.value.shape()) +
                                " vs model " + to_string(p->value.shape()));
    }
  }
  for (const auto& nt : ckpt.parameters) model.parameters().at(nt.name).value = nt.value;
  return ckpt.optimizer;
}

Model load_model(const std::filesystem::path& path) {
  const LoadedCheckpoint ck = read_checkpoint(path);
  Model model(ck.config);
  load_into(model, ck);
  return model;
}

}  // namespace sfunet
