#include "evdi/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "evdi/errors.hpp"

namespace evdi {

namespace {

int quantize(double v, int maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<int>(std::lround(c * maxval));
}

// Reads the next whitespace-delimited header integer, skipping '#' comments.
int read_header_int(std::istream& in, const std::string& path) {
  int ch = in.get();
  while (in && (std::isspace(ch) || ch == '#')) {
    if (ch == '#') {
      while (in && ch != '\n') ch = in.get();
    }
    ch = in.get();
  }
  if (!in || !std::isdigit(ch)) throw IoError("malformed PNM header", path);
  long value = 0;
  while (in && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    if (value > 1'000'000) throw IoError("PNM header value too large", path);
    ch = in.get();
  }
  return static_cast<int>(value);
}

}  // namespace

void quantize_unit(Tensor& t, int maxval) {
  for (double& v : t.values()) v = static_cast<double>(quantize(v, maxval)) / maxval;
}

void write_pnm(const std::string& path, const Tensor& image, int maxval) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ArgumentError("write_pnm: expected [1|3, H, W] image, got " + image.shape_string());
  }
  if (maxval < 1 || maxval > 65535) throw ArgumentError("write_pnm: maxval out of range");
  const int channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing", path);
  out << (channels == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << '\n' << maxval << '\n';
  const bool wide = maxval > 255;
  std::vector<unsigned char> buf;
  buf.reserve(static_cast<std::size_t>(h) * w * channels * (wide ? 2 : 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const int q = quantize(image.at(c, y, x), maxval);
        if (wide) buf.push_back(static_cast<unsigned char>(q >> 8));
        buf.push_back(static_cast<unsigned char>(q & 0xff));
      }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed", path);
}

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading", path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError("not a binary PGM/PPM file", path);
  }
  const int channels = magic[1] == '5' ? 1 : 3;
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw IoError("invalid PNM header", path);
  const bool wide = maxval > 255;
  const std::size_t n = static_cast<std::size_t>(h) * w * channels * (wide ? 2 : 1);
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw IoError("truncated PNM pixel data", path);
  Tensor image({channels, h, w});
  std::size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        int q = buf[i++];
        if (wide) q = (q << 8) | buf[i++];
        image.at(c, y, x) = static_cast<double>(q) / maxval;
      }
  return image;
}

}  // namespace evdi
