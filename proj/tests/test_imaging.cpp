#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "depthfit/image_io.hpp"
#include "depthfit/imaging.hpp"

using dfit::BinaryMask;
using dfit::DepthMap;
using dfit::Image;
using dfit::PixelCoord;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, c);
  for (auto& v : img.data) v = u(rng);
  return img;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("depthfit_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("bilinear sampling at integer coordinates is exact") {
  Image img = random_image(7, 5, 3, 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      const auto s = dfit::bilinear_sample(img, {double(x), double(y)});
      CHECK(!s.out_of_bounds);
      for (int c = 0; c < 3; ++c) CHECK(s.value[c] == img.at(x, y, c));
    }
}

TEST_CASE("bilinear sampling at a horizontal midpoint averages") {
  Image img(4, 1, 1);
  img.at(1, 0) = 0.2;
  img.at(2, 0) = 0.6;
  const auto s = dfit::bilinear_sample(img, {1.5, 0.0});
  CHECK(s.value[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(!s.out_of_bounds);
}

TEST_CASE("bilinear sampling clamps to the border and flags it") {
  Image img = random_image(6, 6, 1, 2);
  const auto s = dfit::bilinear_sample(img, {-5.0, 2.0});
  CHECK(s.out_of_bounds);
  CHECK(s.value[0] == img.at(0, 2));
  const auto t = dfit::bilinear_sample(img, {2.0, 9.0});
  CHECK(t.out_of_bounds);
  CHECK(t.value[0] == img.at(2, 5));
  // Just inside is fine.
  CHECK(!dfit::bilinear_sample(img, {0.0, 0.0}).out_of_bounds);
  CHECK(!dfit::bilinear_sample(img, {5.0, 5.0}).out_of_bounds);
}

TEST_CASE("sampling is Lipschitz in the coordinates") {
  Image img = random_image(16, 16, 1, 3);
  double lip = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 15; ++x)
      lip = std::max(lip, std::abs(img.at(x + 1, y) - img.at(x, y)));
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 16; ++x)
      lip = std::max(lip, std::abs(img.at(x, y + 1) - img.at(x, y)));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 15.0), d(-0.4, 0.4);
  for (int i = 0; i < 500; ++i) {
    const PixelCoord p{u(rng), u(rng)};
    const double du = d(rng), dv = d(rng);
    const double a = dfit::bilinear_sample(img, p).value[0];
    const double b = dfit::bilinear_sample(img, {p.u + du, p.v + dv}).value[0];
    CHECK(std::abs(a - b) <= lip * (std::abs(du) + std::abs(dv)) + 1e-12);
  }
}

TEST_CASE("analytic sampling derivative matches finite differences") {
  Image img = random_image(12, 12, 3, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.3, 10.7);
  const double h = 1e-4;
  for (int i = 0; i < 300; ++i) {
    PixelCoord p{u(rng), u(rng)};
    // keep away from integer-coordinate kinks
    if (std::abs(p.u - std::round(p.u)) < 5 * h) p.u += 10 * h;
    if (std::abs(p.v - std::round(p.v)) < 5 * h) p.v += 10 * h;
    const auto g = dfit::bilinear_sample_grad(img, p);
    for (int c = 0; c < 3; ++c) {
      const double fdu = (dfit::bilinear_sample(img, {p.u + h, p.v}).value[c] -
                          dfit::bilinear_sample(img, {p.u - h, p.v}).value[c]) / (2 * h);
      const double fdv = (dfit::bilinear_sample(img, {p.u, p.v + h}).value[c] -
                          dfit::bilinear_sample(img, {p.u, p.v - h}).value[c]) / (2 * h);
      CHECK(g.du[c] == doctest::Approx(fdu).epsilon(1e-4));
      CHECK(g.dv[c] == doctest::Approx(fdv).epsilon(1e-4));
    }
  }
}

TEST_CASE("sampling derivative is zero along a clamped axis") {
  Image img = random_image(8, 8, 1, 7);
  const auto g = dfit::bilinear_sample_grad(img, {-3.0, 4.5});
  CHECK(g.du[0] == 0.0);
  const auto g2 = dfit::bilinear_sample_grad(img, {4.5, 12.0});
  CHECK(g2.dv[0] == 0.0);
}

TEST_CASE("downsample box-averages 2x2 blocks") {
  Image c(6, 4, 1, 0.37);
  const Image half = dfit::downsample(c);
  CHECK(half.width == 3);
  CHECK(half.height == 2);
  for (double v : half.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));

  Image checker(2, 2, 1);
  checker.at(0, 0) = 0;
  checker.at(1, 0) = 1;
  checker.at(0, 1) = 1;
  checker.at(1, 1) = 0;
  const Image one = dfit::downsample(checker);
  CHECK(one.width == 1);
  CHECK(one.height == 1);
  CHECK(one.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  Image tiny(1, 1, 1);
  CHECK_THROWS(dfit::downsample(tiny));
}

TEST_CASE("pyramid of 64x64 has levels 64, 32, 16, 8") {
  const Image img = random_image(64, 64, 3, 8);
  const auto pyr = dfit::build_pyramid(img, 4);
  REQUIRE(pyr.levels.size() == 4);
  CHECK(pyr.levels[0].width == 64);
  CHECK(pyr.levels[1].width == 32);
  CHECK(pyr.levels[2].width == 16);
  CHECK(pyr.levels[3].width == 8);
  CHECK(pyr.levels[3].height == 8);
  // level 0 is the source, bit-exact
  CHECK(pyr.levels[0].data == img.data);
}

TEST_CASE("nearest mask downsample preserves the partition") {
  std::mt19937_64 rng(12);
  BinaryMask a(10, 8), b(10, 8), c(10, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x) {
      const int owner = int(rng() % 3);
      (owner == 0 ? a : owner == 1 ? b : c).at(x, y) = 1;
    }
  const BinaryMask ha = dfit::downsample_nearest(a);
  const BinaryMask hb = dfit::downsample_nearest(b);
  const BinaryMask hc = dfit::downsample_nearest(c);
  REQUIRE(ha.width == 5);
  REQUIRE(ha.height == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      CHECK(int(ha.at(x, y)) + int(hb.at(x, y)) + int(hc.at(x, y)) == 1);
      // top-left rule
      CHECK(ha.at(x, y) == a.at(2 * x, 2 * y));
    }
}

TEST_CASE("image gradients: constant, ramp, checkerboard") {
  const Image flat(9, 9, 1, 0.5);
  for (double v : dfit::gradient_x(flat).data) CHECK(v == 0.0);
  for (double v : dfit::gradient_y(flat).data) CHECK(v == 0.0);

  const int w = 10, h = 6;
  Image ramp(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) ramp.at(x, y) = double(x) / w;
  const Image gx = dfit::gradient_x(ramp);
  const Image gy = dfit::gradient_y(ramp);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) CHECK(gx.at(x, y) == doctest::Approx(1.0 / w).epsilon(1e-12));
      else CHECK(gx.at(x, y) == 0.0);
      CHECK(gy.at(x, y) == (y + 1 < h ? doctest::Approx(0.0) : doctest::Approx(0.0)));
    }

  Image checker(6, 6, 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) checker.at(x, y) = (x + y) % 2;
  const Image cgx = dfit::gradient_x(checker);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 5; ++x) CHECK(std::abs(cgx.at(x, y)) == 1.0);
}

TEST_CASE("identity synthesis reproduces the source bit-exactly") {
  const Image src = random_image(12, 9, 3, 20);
  dfit::WarpField warp(12, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x)
      warp.coords[std::size_t(y) * 12 + x] = {double(x), double(y)};
  BinaryMask all(12, 9, 1);
  BinaryMask invalid;
  const Image out = dfit::synthesize_view(src, {warp}, {all}, &invalid);
  CHECK(out.data == src.data);
  for (auto v : invalid.data) CHECK(v == 0);
}

TEST_CASE("synthesis composes per-region warps") {
  const int w = 20, h = 16;
  const Image src = random_image(w, h, 1, 21);
  // region block: 10x10 starting at (2,2), shifted horizontally by +2 pixels
  BinaryMask block(w, h, 0), bg(w, h, 1);
  for (int y = 2; y < 12; ++y)
    for (int x = 2; x < 12; ++x) {
      block.at(x, y) = 1;
      bg.at(x, y) = 0;
    }
  dfit::WarpField wid(w, h), wshift(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      wid.coords[std::size_t(y) * w + x] = {double(x), double(y)};
      wshift.coords[std::size_t(y) * w + x] = {double(x + 2), double(y)};
    }
  BinaryMask invalid;
  const Image out = dfit::synthesize_view(src, {wshift, wid}, {block, bg}, &invalid);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (block.at(x, y)) CHECK(out.at(x, y) == src.at(x + 2, y));
      else CHECK(out.at(x, y) == src.at(x, y));
      CHECK(invalid.at(x, y) == 0);
    }
}

TEST_CASE("synthesis flags out-of-source warps invalid") {
  const Image src = random_image(8, 8, 1, 22);
  dfit::WarpField warp(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      warp.coords[std::size_t(y) * 8 + x] = {double(x + 6), double(y)};
  BinaryMask all(8, 8, 1), invalid;
  dfit::synthesize_view(src, {warp}, {all}, &invalid);
  for (int y = 0; y < 8; ++y) {
    CHECK(invalid.at(0, y) == 0);  // lands at x = 6, in range
    CHECK(invalid.at(5, y) == 1);  // lands at x = 11, clamped
  }
}

TEST_CASE("synthesis rejects masks that do not partition the frame") {
  const Image src = random_image(4, 4, 1, 23);
  dfit::WarpField warp(4, 4);
  BinaryMask holes(4, 4, 0);
  CHECK_THROWS(dfit::synthesize_view(src, {warp}, {holes}));
  BinaryMask a(4, 4, 1), b(4, 4, 1);
  dfit::WarpField w2(4, 4);
  CHECK_THROWS(dfit::synthesize_view(src, {warp, w2}, {a, b}));
}

TEST_CASE("PFM depth round trip is bit-exact") {
  TempDir tmp;
  DepthMap d(13, 7);
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(0.1, 80.0);
  for (auto& v : d.data) v = u(rng);
  const std::string p1 = tmp.file("a.pfm");
  dfit::write_pfm_depth(p1, d);
  const DepthMap r = dfit::read_pfm_depth(p1);
  REQUIRE(r.width == d.width);
  REQUIRE(r.height == d.height);
  for (std::size_t i = 0; i < d.data.size(); ++i)
    CHECK(r.data[i] == double(float(d.data[i])));  // float32 storage
  // write-read-write produces identical bytes
  const std::string p2 = tmp.file("b.pfm");
  dfit::write_pfm_depth(p2, r);
  CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("PPM and PGM round trips") {
  TempDir tmp;
  const Image img = random_image(9, 5, 3, 31);
  dfit::write_ppm(tmp.file("img.ppm"), img);
  const Image back = dfit::read_ppm(tmp.file("img.ppm"));
  REQUIRE(back.width == 9);
  REQUIRE(back.height == 5);
  REQUIRE(back.channels == 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255 + 1e-12);

  BinaryMask m(6, 4);
  for (int i = 0; i < 6 * 4; ++i) m.data[i] = std::uint8_t(i % 2);
  dfit::write_pgm(tmp.file("m.pgm"), m);
  const BinaryMask mb = dfit::read_pgm(tmp.file("m.pgm"));
  CHECK(mb.data == m.data);
}

TEST_CASE("malformed raster files are rejected") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("bad.pfm"), std::ios::binary);
    out << "P5\n3 3\n255\n";
  }
  CHECK_THROWS(dfit::read_pfm_depth(tmp.file("bad.pfm")));
  CHECK_THROWS(dfit::read_ppm(tmp.file("does_not_exist.ppm")));
}
