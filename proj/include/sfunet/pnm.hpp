#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfunet::pnm {

class PnmError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_header, truncated };

  PnmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// 8-bit interleaved image: P5 (channels = 1) or P6 (channels = 3).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  unsigned maxval = 255;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
};

Image decode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode(const Image& img);

Image read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Image& img);

}  // namespace sfunet::pnm
