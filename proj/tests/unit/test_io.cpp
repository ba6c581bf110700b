#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "lfv/io.hpp"
#include "support/oracles.hpp"

using namespace lfv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lfv_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

// float32-exact values so round trips can be compared with ==.
Tensor float_tensor(Shape shape, unsigned seed) {
  Tensor t(std::move(shape));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-50.f, 50.f);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

TEST(Pfm, SingleChannelRoundTripBitExact) {
  const Tensor t = float_tensor({13, 21}, 1);
  const auto path = scratch("one.pfm").string();
  write_pfm(path, t);
  const Tensor r = read_pfm(path);
  ASSERT_EQ(r.shape(), (Shape{13, 21, 1}));
  for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(r[i], t[i]);
}

TEST(Pfm, ThreeChannelRoundTripBitExact) {
  const Tensor t = float_tensor({7, 5, 3}, 2);
  const auto path = scratch("three.pfm").string();
  write_pfm(path, t);
  const Tensor r = read_pfm(path);
  ASSERT_EQ(r.shape(), t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(r[i], t[i]);
}

TEST(Pfm, BigEndianFixtureIsByteSwapped) {
  // 2x2 "Pf", scale +1 (big endian), rows bottom to top.
  const float vals[4] = {1.5f, -2.25f, 3.0f, 0.125f};  // bottom row, then top row
  std::string bytes = "Pf\n2 2\n1.0\n";
  for (float f : vals) {
    unsigned char b[4];
    std::memcpy(b, &f, 4);
    for (int k = 3; k >= 0; --k) bytes.push_back(static_cast<char>(b[k]));  // host is little endian
  }
  const auto path = scratch("be.pfm").string();
  std::ofstream(path, std::ios::binary) << bytes;
  const Tensor r = read_pfm(path);
  EXPECT_EQ(r[0], 3.0);     // top-left
  EXPECT_EQ(r[1], 0.125);   // top-right
  EXPECT_EQ(r[2], 1.5);     // bottom-left
  EXPECT_EQ(r[3], -2.25);   // bottom-right
}

TEST(Pfm, MalformedHeaderAndTruncation) {
  const auto bad = scratch("bad.pfm").string();
  std::ofstream(bad, std::ios::binary) << "P6\n2 2\n255\n";
  EXPECT_THROW(read_pfm(bad), Error);
  const auto short_file = scratch("short.pfm").string();
  std::ofstream(short_file, std::ios::binary) << "Pf\n4 4\n-1.0\nabc";
  EXPECT_THROW(read_pfm(short_file), Error);
  EXPECT_THROW(read_pfm(scratch("missing.pfm").string()), Error);
}

TEST(Flo, RoundTripBitExact) {
  FlowField f(float_tensor({9, 11, 2}, 3));
  const auto path = scratch("f.flo").string();
  write_flo(path, f);
  const FlowField r = read_flo(path);
  ASSERT_EQ(r.tensor().shape(), f.tensor().shape());
  for (std::size_t i = 0; i < f.tensor().size(); ++i) ASSERT_EQ(r.tensor()[i], f.tensor()[i]);
  EXPECT_EQ(fs::file_size(path), 12u + 9u * 11u * 8u);
}

TEST(Flo, BadMagicRejected) {
  const auto path = scratch("bad.flo").string();
  std::ofstream(path, std::ios::binary) << "PIEH____________";
  EXPECT_THROW(read_flo(path), Error);
}

TEST(Png, RoundTripWithinQuantization) {
  Image img(10, 12, 3);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& v : img.tensor().values()) v = dist(rng);
  const auto path = scratch("img.png").string();
  write_png(path, img);
  const Image r = read_png(path);
  const Image q = quantize8(img);
  for (std::size_t i = 0; i < img.tensor().size(); ++i) {
    EXPECT_LE(std::abs(r.tensor()[i] - img.tensor()[i]), 0.5 / 255 + 1e-12);
    EXPECT_EQ(r.tensor()[i], q.tensor()[i]);
  }
}

TEST(LfGrid, RoundTripWithin8BitQuantization) {
  LightField L(AngularGrid(3, 5), 8, 6);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& v : L.tensor().values()) v = dist(rng);
  const auto path = scratch("grid.png").string();
  save_lf_grid(L, path);
  const LightField r = load_lf_grid(path, 3, 5);
  ASSERT_EQ(r.tensor().shape(), L.tensor().shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < L.tensor().size(); ++i) worst = std::max(worst, std::abs(r.tensor()[i] - L.tensor()[i]));
  EXPECT_LE(worst, 1.0 / 255);
}

TEST(LfGrid, SevenBySevenOf64Tiles) {
  Image img(448, 448, 3);
  for (int y = 0; y < 448; ++y)
    for (int x = 0; x < 448; ++x) img.at(y, x, 0) = ((y / 64) * 7 + x / 64) / 48.0;
  const auto path = scratch("grid7.png").string();
  write_png(path, img);
  const LightField L = load_lf_grid(path, 7, 7);
  EXPECT_EQ(L.grid().U, 7);
  EXPECT_EQ(L.grid().V, 7);
  EXPECT_EQ(L.height(), 64);
  EXPECT_EQ(L.width(), 64);
  // Tile row is the u index, tile column the v index.
  EXPECT_NEAR(L.at(2, 5, 10, 10, 0), (2 * 7 + 5) / 48.0, 0.5 / 255);
}

TEST(LfGrid, WrongSizeIsAParseError) {
  const auto path = scratch("odd.png").string();
  write_png(path, Image(450, 448, 3));
  EXPECT_THROW(load_lf_grid(path, 7, 7), Error);
}

TEST(LfDir, RoundTrip) {
  LightField L(AngularGrid(3, 3), 4, 5);
  for (std::size_t i = 0; i < L.tensor().size(); ++i) L.tensor()[i] = (i % 256) / 255.0;
  const auto dir = scratch("lfdir").string();
  fs::remove_all(dir);
  save_lf_dir(L, dir);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "view_-1_+1.png"));
  const LightField r = load_lf_dir(dir);
  ASSERT_EQ(r.tensor().shape(), L.tensor().shape());
  for (std::size_t i = 0; i < L.tensor().size(); ++i) ASSERT_NEAR(r.tensor()[i], L.tensor()[i], 1e-12);
}

TEST(Manifest, ParsesCommentsAndRelativePaths) {
  const auto dir = scratch("manifest");
  fs::create_directories(dir);
  const auto path = (dir / "train.txt").string();
  std::ofstream(path) << "# header\n\na.png,8,1\n/abs/b.png, 4 ,2  # tail\n";
  const auto m = read_manifest(path);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].lf_path, (dir / "a.png").string());
  EXPECT_EQ(m[0].frames, 8);
  EXPECT_EQ(m[1].lf_path, "/abs/b.png");
  EXPECT_EQ(m[1].frames, 4);
  EXPECT_EQ(m[1].seed, 2u);

  std::ofstream(path) << "a.png;8;1\n";
  EXPECT_THROW(read_manifest(path), Error);
}
