#include "arrange/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace arrange {

namespace {

std::uint8_t to_byte(double x) { return static_cast<std::uint8_t>(std::clamp(std::round(x), 0.0, 255.0)); }

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string header_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char ch = bytes[pos];
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

int header_int(const std::string& bytes, std::size_t& pos, const char* what) {
  const std::string tok = header_token(bytes, pos);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw FormatError(std::string("netpbm: bad ") + what + " in header");
  }
  return std::stoi(tok);
}

struct Header {
  int width;
  int height;
  int maxval;
  std::size_t data;
};

Header read_header(const std::string& bytes, const char* magic) {
  std::size_t pos = 0;
  if (header_token(bytes, pos) != magic) throw FormatError(std::string("netpbm: expected magic ") + magic);
  Header h{};
  h.width = header_int(bytes, pos, "width");
  h.height = header_int(bytes, pos, "height");
  h.maxval = header_int(bytes, pos, "maxval");
  if (h.maxval < 1 || h.maxval > 65535) throw FormatError("netpbm: maxval out of range");
  if (pos >= bytes.size()) throw FormatError("netpbm: truncated header");
  h.data = pos + 1;  // exactly one whitespace byte follows maxval
  return h;
}

}  // namespace

std::string encode_ppm(const Grid2D& rgb) {
  if (rgb.channels() != 3) throw ShapeError("encode_ppm: need a 3-channel grid");
  std::string out = "P6\n" + std::to_string(rgb.width()) + " " + std::to_string(rgb.height()) + "\n255\n";
  out.reserve(out.size() + rgb.size());
  for (double x : rgb.data()) out.push_back(static_cast<char>(to_byte(x)));
  return out;
}

Grid2D decode_ppm(const std::string& bytes) {
  const Header h = read_header(bytes, "P6");
  if (h.maxval > 255) throw FormatError("decode_ppm: only 8-bit PPM is supported");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() < h.data + n) throw FormatError("decode_ppm: truncated pixel data");
  Grid2D g(h.height, h.width, 3);
  for (std::size_t i = 0; i < n; ++i) g.data()[i] = static_cast<unsigned char>(bytes[h.data + i]);
  return g;
}

std::string encode_pgm(const GrayImage& image) {
  if (image.values.size() != static_cast<std::size_t>(image.height) * image.width) {
    throw ShapeError("encode_pgm: value count does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" +
                    std::to_string(image.maxval) + "\n";
  const bool wide = image.maxval > 255;
  for (std::uint16_t v : image.values) {
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  const Header h = read_header(bytes, "P5");
  const bool wide = h.maxval > 255;
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data + n * (wide ? 2 : 1)) throw FormatError("decode_pgm: truncated pixel data");
  GrayImage img{h.height, h.width, h.maxval, std::vector<std::uint16_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    if (wide) {
      img.values[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[h.data + 2 * i]) << 8) |
                                                 static_cast<unsigned char>(bytes[h.data + 2 * i + 1]));
    } else {
      img.values[i] = static_cast<unsigned char>(bytes[h.data + i]);
    }
  }
  return img;
}

GrayImage score_map_to_gray16(const Grid2D& scores) {
  if (scores.channels() != 1) throw ShapeError("score_map_to_gray16: need a single-channel map");
  GrayImage img{scores.height(), scores.width(), 65535, {}};
  img.values.reserve(scores.size());
  for (double s : scores.data()) {
    const double v = std::round((std::clamp(s, -1.0, 1.0) + 1.0) / 2.0 * 65535.0);
    img.values.push_back(static_cast<std::uint16_t>(v));
  }
  return img;
}

GrayImage to_gray8(const Grid2D& scores) {
  if (scores.channels() != 1) throw ShapeError("to_gray8: need a single-channel map");
  GrayImage img{scores.height(), scores.width(), 255, {}};
  const auto d = scores.data();
  if (d.empty()) return img;
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double span = *hi - *lo;
  for (double s : d) img.values.push_back(span > 0 ? static_cast<std::uint16_t>(std::round((s - *lo) / span * 255.0)) : 0);
  return img;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace arrange
