#include "msv/pgm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

class HeaderParser {
 public:
  HeaderParser(std::span<const std::uint8_t> b, std::size_t start)
      : b_(b), pos_(start) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1u << 24) {
        throw FormatError(std::string("pgm: ") + what + " too large at byte " +
                          std::to_string(start));
      }
      ++pos_;
    }
    if (pos_ == start) {
      throw FormatError(std::string("pgm: expected ") + what + " at byte " +
                        std::to_string(start));
    }
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("pgm: bad magic at byte 0 (expected \"P5\")");
  }
  HeaderParser p(bytes, 2);
  GrayImage img;
  img.width = p.number("width");
  img.height = p.number("height");
  p.skip_space_and_comments();
  const std::size_t maxval_at = p.pos();
  const std::size_t maxval = p.number("maxval");
  if (maxval != 255) {
    throw FormatError("pgm: unsupported maxval " + std::to_string(maxval) +
                      " at byte " + std::to_string(maxval_at) + " (need 255)");
  }
  if (img.width == 0 || img.height == 0) {
    throw FormatError("pgm: zero extent in header");
  }
  const std::size_t sep = p.pos();
  if (sep >= bytes.size() || !std::isspace(bytes[sep])) {
    throw FormatError("pgm: expected whitespace after maxval at byte " +
                      std::to_string(sep));
  }
  const std::size_t data = sep + 1;
  const std::size_t need = img.width * img.height;
  if (bytes.size() - data < need) {
    throw IntegrityError("pgm: payload truncated at byte " +
                         std::to_string(bytes.size()) + ", expected " +
                         std::to_string(data + need));
  }
  img.pixels.assign(bytes.begin() + data, bytes.begin() + data + need);
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    throw ShapeError("pgm: pixel count does not match extents");
  }
  const std::string header = "P5\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const IntegrityError& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Tensor image_to_tensor(const GrayImage& image) {
  std::vector<real> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<real>(image.pixels[i]) / real(255);
  }
  return Tensor(Shape{1, 1, image.height, image.width}, std::move(v));
}

Tensor mask_to_tensor(const GrayImage& mask) {
  std::vector<real> v(mask.pixels.begin(), mask.pixels.end());
  return Tensor(Shape{1, 1, mask.height, mask.width}, std::move(v));
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
