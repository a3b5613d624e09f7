// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "textmonkey/split.hpp"

namespace txm = textmonkey;
using txm::Tensor;

namespace {

txm::RawImage noise_image(std::size_t h, std::size_t w, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  txm::RawImage img(h, w);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(byte(gen));
  return img;
}

}  // namespace

TEST(Resize, SameSizeIsBitwiseNoOp) {
  const txm::RawImage img = noise_image(448, 448, 1);
  EXPECT_EQ(txm::resize_image(img, 448, 448), img);
}

TEST(Resize, CheckerboardUpscaleMatchesHandComputation) {
  // Half-pixel centers: destination columns sample source x = 0, 0.25, 0.75, 1.
  txm::RawImage img(2, 2);
  for (std::size_t c = 0; c < 3; ++c) {
    img.at(0, 1, c) = 255;
    img.at(1, 0, c) = 255;
  }
  const txm::RawImage out = txm::resize_bilinear(img, 4, 4);
  const int row0[4] = {0, 64, 191, 255};
  for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out.at(0, x, 0), row0[x]) << x;
  EXPECT_EQ(out.at(3, 3, 0), 0);
  EXPECT_EQ(out.at(3, 0, 0), 255);
  // 0.75·63.75 + 0.25·191.25 = 95.625.
  EXPECT_EQ(out.at(1, 1, 0), 96);
}

TEST(Resize, SolidColorStaysSolid) {
  txm::RawImage img(37, 53);
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    img.data[i] = 12;
    img.data[i + 1] = 200;
    img.data[i + 2] = 77;
  }
  const txm::RawImage out = txm::resize_image(img, 448, 896);
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    ASSERT_EQ(out.data[i], 12);
    ASSERT_EQ(out.data[i + 1], 200);
    ASSERT_EQ(out.data[i + 2], 77);
  }
}

TEST(Resize, NonMultipleTargetIsConfigErrorOnResolution) {
  try {
    txm::resize_image(noise_image(10, 10, 2), 500, 448);
    FAIL() << "expected ConfigError";
  } catch (const txm::ConfigError& e) {
    EXPECT_EQ(e.key(), "resolution");
  }
}

TEST(SplitWindows, SingleWindowIsWholeImage) {
  const txm::RawImage img = noise_image(448, 448, 3);
  const txm::WindowGrid g = txm::split_windows(img);
  ASSERT_EQ(g.count(), 1u);
  EXPECT_EQ(g.windows[0], txm::image_to_tensor(img));
  EXPECT_EQ(g.global_view, txm::image_to_tensor(img));
}

TEST(SplitWindows, Grid896HasFourWindows) {
  const txm::WindowGrid g = txm::split_windows(noise_image(896, 896, 4));
  EXPECT_EQ(g.rows, 2u);
  EXPECT_EQ(g.cols, 2u);
  EXPECT_EQ(g.count(), 4u);
  EXPECT_EQ(g.global_view.shape(), (txm::Shape{448, 448, 3}));
}

TEST(SplitWindows, Grid896x1344ReassemblesExactly) {
  const txm::RawImage img = noise_image(896, 1344, 5);
  const txm::Normalization norm;
  const txm::WindowGrid g = txm::split_windows(img, norm);
  EXPECT_EQ(g.rows, 2u);
  EXPECT_EQ(g.cols, 3u);
  EXPECT_EQ(g.count(), 6u);
  EXPECT_EQ(txm::assemble_windows(g), txm::image_to_tensor(img, norm));
}

TEST(SplitWindows, WindowOrderIsRowMajor) {
  txm::RawImage img(896, 1344);
  img.at(448, 896, 0) = 255;  // top-left pixel of window (1, 2)
  const txm::WindowGrid g = txm::split_windows(img);
  EXPECT_EQ(g.windows[5](0, 0, 0), 1.0);
  for (std::size_t w = 0; w < 5; ++w) EXPECT_EQ(g.windows[w](0, 0, 0), 0.0);
}

TEST(SplitWindows, UnalignedImageRaises) {
  EXPECT_THROW(txm::split_windows(noise_image(448, 450, 6)), txm::ConfigError);
}

TEST(Normalization, StandardizesPerChannel) {
  const txm::Normalization n{{0.5, 0.5, 0.5}, {0.5, 0.25, 1.0}};
  EXPECT_DOUBLE_EQ(n.apply(255, 0), 1.0);
  EXPECT_DOUBLE_EQ(n.apply(255, 1), 2.0);
  EXPECT_DOUBLE_EQ(n.apply(0, 2), -0.5);
}

TEST(Patchify, ZeroWindowGivesZeroTokens) {
  std::mt19937 gen(7);
  std::normal_distribution<double> nd;
  Tensor proj({txm::kPatchDim, 8});
  for (double& v : proj.data()) v = nd(gen);
  const txm::PatchTokens p = txm::patchify(Tensor::zeros({448, 448, 3}), proj);
  EXPECT_EQ(p.tokens, Tensor::zeros({1024, 8}));
  EXPECT_EQ(p.grid_rows, 32u);
}

TEST(Patchify, IdentityProjectionFlattensTopLeftPatch) {
  const txm::RawImage img = noise_image(448, 448, 8);
  const Tensor win = txm::image_to_tensor(img);
  const txm::PatchTokens p = txm::patchify(win, Tensor::identity(txm::kPatchDim));
  std::size_t k = 0;
  for (std::size_t y = 0; y < 14; ++y)
    for (std::size_t x = 0; x < 14; ++x)
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(p.tokens(0, k++), win(y, x, c));
  // Token 33 is patch row 1, column 1.
  EXPECT_EQ(p.tokens(33, 0), win(14, 14, 0));
}

TEST(Patchify, SinglePixelOnlyTouchesFirstToken) {
  Tensor win = Tensor::zeros({448, 448, 3});
  win(0, 0, 0) = 1.0;
  const txm::PatchTokens p = txm::patchify(win, Tensor({txm::kPatchDim, 1}, 1.0));
  EXPECT_EQ(p.tokens(0, 0), 1.0);
  for (std::size_t i = 1; i < 1024; ++i) ASSERT_EQ(p.tokens(i, 0), 0.0) << i;
}

TEST(Patchify, RejectsBadShapes) {
  EXPECT_THROW(txm::patchify(Tensor::zeros({448, 448, 3}), Tensor::zeros({100, 4})), txm::DimensionError);
  EXPECT_THROW(txm::patchify(Tensor::zeros({440, 448, 3}), Tensor::zeros({588, 4})), txm::DimensionError);
}

TEST(PatchGrid, PlacesWindowsSideBySide) {
  std::vector<txm::PatchTokens> ws;
  for (std::size_t w = 0; w < 2; ++w) {
    txm::PatchTokens p;
    p.window_id = w;
    p.grid_rows = p.grid_cols = 32;
    p.tokens = Tensor({1024, 1}, static_cast<double>(w + 1));
    ws.push_back(p);
  }
  const Tensor g = txm::assemble_patch_grid(ws, 1, 2);
  EXPECT_EQ(g.shape(), (txm::Shape{32, 64, 1}));
  EXPECT_EQ(g(5, 31, 0), 1.0);
  EXPECT_EQ(g(5, 32, 0), 2.0);
}

TEST(Ppm, BinaryAndAsciiRoundTrip) {
  const txm::RawImage img = noise_image(5, 7, 9);
  const auto path = std::filesystem::temp_directory_path() / "tm_split_test.ppm";
  txm::write_ppm(img, path.string());
  EXPECT_EQ(txm::read_ppm(path.string()), img);
  std::filesystem::remove(path);

  std::istringstream ascii("P3\n# comment\n2 1\n255\n1 2 3 4 5 6\n");
  const txm::RawImage a = txm::read_ppm(ascii);
  EXPECT_EQ(a.width, 2u);
  EXPECT_EQ(a.at(0, 1, 2), 6);
}

TEST(Ppm, RejectsOtherFormats) {
  std::istringstream p5("P5\n2 2\n255\n\x01\x02\x03\x04");
  EXPECT_THROW(txm::read_ppm(p5), txm::Error);
}
