#include "depthfit/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dfit {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// Reads the next whitespace/comment-delimited token of a PNM header.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

} // namespace

void write_ppm(const std::string& path, const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("write_ppm: 3-channel image required");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) row[3 * x + c] = to_byte(img.at(x, y, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = next_token(in);
  if (magic != "P6" && magic != "P3") fail(path, "not a PPM file");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) fail(path, "bad PPM header");
  Image img(w, h, 3);
  if (magic == "P6") {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) fail(path, "truncated pixel data");
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / static_cast<double>(maxval);
  } else {
    for (auto& v : img.data) {
      const std::string tok = next_token(in);
      if (tok.empty()) fail(path, "truncated pixel data");
      v = std::stoi(tok) / static_cast<double>(maxval);
    }
  }
  return img;
}

void write_pgm(const std::string& path, const BinaryMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(mask.width));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) row[x] = mask.at(x, y) ? 255 : 0;
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

BinaryMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") fail(path, "not a PGM file");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) fail(path, "bad PGM header");
  BinaryMask mask(w, h);
  if (magic == "P5") {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) fail(path, "truncated pixel data");
    for (std::size_t i = 0; i < buf.size(); ++i) mask.data[i] = buf[i] * 2 > maxval ? 1 : 0;
  } else {
    for (auto& v : mask.data) {
      const std::string tok = next_token(in);
      if (tok.empty()) fail(path, "truncated pixel data");
      v = std::stoi(tok) * 2 > maxval ? 1 : 0;
    }
  }
  return mask;
}

namespace {

void write_pfm_raw(const std::string& path, const double* data, int w, int h, int channels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << (channels == 3 ? "PF" : "Pf") << "\n" << w << " " << h << "\n-1.0\n";
  // PFM stores rows bottom to top.
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    const double* src = data + static_cast<std::size_t>(y) * w * channels;
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(src[i]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail(path, "write failed");
}

void read_pfm_raw(const std::string& path, std::vector<double>& data, int& w, int& h,
                  int& channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string magic;
  in >> magic;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else fail(path, "not a PFM file");
  double scale;
  in >> w >> h >> scale;
  if (!in || w <= 0 || h <= 0) fail(path, "bad PFM header");
  if (scale >= 0) fail(path, "big-endian PFM not supported");
  in.get();  // single whitespace after the scale line
  data.resize(static_cast<std::size_t>(w) * h * channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) fail(path, "truncated pixel data");
    double* dst = data.data() + static_cast<std::size_t>(y) * w * channels;
    for (std::size_t i = 0; i < row.size(); ++i) dst[i] = row[i];
  }
}

} // namespace

void write_pfm(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pfm: 1 or 3 channels required");
  write_pfm_raw(path, img.data.data(), img.width, img.height, img.channels);
}

Image read_pfm(const std::string& path) {
  Image img;
  read_pfm_raw(path, img.data, img.width, img.height, img.channels);
  return img;
}

void write_pfm_depth(const std::string& path, const DepthMap& depth) {
  write_pfm_raw(path, depth.data.data(), depth.width, depth.height, 1);
}

DepthMap read_pfm_depth(const std::string& path) {
  DepthMap d;
  int channels = 1;
  read_pfm_raw(path, d.data, d.width, d.height, channels);
  if (channels != 1) fail(path, "expected single-channel PFM");
  return d;
}

} // namespace dfit
