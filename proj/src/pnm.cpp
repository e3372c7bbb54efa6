#include "sfunet/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

namespace sfunet::pnm {

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(const std::vector<std::uint8_t>& b) : b_(b) {}

  // Skips whitespace and '#' comments, then reads a decimal integer.
  std::size_t number(const char* field) {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ >= b_.size()) {
      throw PnmError(PnmError::Kind::truncated, std::string("truncated header before ") + field);
    }
    if (!std::isdigit(b_[pos_])) {
      throw PnmError(PnmError::Kind::bad_header, std::string("expected a number for ") + field);
    }
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (v > (1u << 24)) throw PnmError(PnmError::Kind::bad_header, std::string(field) + " too large");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) {
      throw PnmError(PnmError::Kind::truncated, "missing whitespace before raster");
    }
    return pos_ + 1;
  }

  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw PnmError(PnmError::Kind::bad_magic, "unknown image magic (expected binary P5 or P6)");
  }
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  HeaderParser p(bytes);
  p.skip(2);
  img.width = p.number("width");
  img.height = p.number("height");
  const std::size_t maxval = p.number("maxval");
  if (img.width == 0 || img.height == 0) throw PnmError(PnmError::Kind::bad_header, "zero image size");
  if (maxval == 0 || maxval > 255) {
    throw PnmError(PnmError::Kind::bad_header,
                   "only 8-bit images are supported (maxval " + std::to_string(maxval) + ")");
  }
  img.maxval = static_cast<unsigned>(maxval);
  const std::size_t start = p.raster_start();
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - start < need) {
    throw PnmError(PnmError::Kind::truncated, "truncated raster: expected " + std::to_string(need) +
                                                  " bytes, found " +
                                                  std::to_string(bytes.size() - start));
  }
  img.pixels.assign(bytes.begin() + static_cast<long>(start),
                    bytes.begin() + static_cast<long>(start + need));
  return img;
}

std::vector<std::uint8_t> encode(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("pnm::encode: channels must be 1 or 3");
  }
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw std::invalid_argument("pnm::encode: pixel buffer size mismatch");
  }
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                             std::to_string(img.maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

Image read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PnmError(PnmError::Kind::io, "cannot open image: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const PnmError& e) {
    throw PnmError(e.kind(), path.string() + ": " + e.what());
  }
}

void write(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PnmError(PnmError::Kind::io, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PnmError(PnmError::Kind::io, "write failed: " + path.string());
}

}  // namespace sfunet::pnm
