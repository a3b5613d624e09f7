// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Image loading, resizing, 448×448 window tiling and 14×14 patch tokenization.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "textmonkey/error.hpp"
#include "textmonkey/numerics.hpp"

namespace textmonkey {

inline constexpr std::size_t kWindowSize = 448;
inline constexpr std::size_t kPatchSize = 14;
inline constexpr std::size_t kPatchesPerSide = kWindowSize / kPatchSize;             // 32
inline constexpr std::size_t kPatchesPerWindow = kPatchesPerSide * kPatchesPerSide;  // 1024
inline constexpr std::size_t kPatchDim = kPatchSize * kPatchSize * 3;                // 588

/// 8-bit interleaved RGB raster.
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;  // row-major, RGB interleaved

  RawImage() = default;
  RawImage(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w * 3, fill) {}
  RawImage(std::size_t h, std::size_t w, std::vector<std::uint8_t> pixels)
      : height(h), width(w), data(std::move(pixels)) {
    validate();
  }

  void validate() const {
    if (height == 0 || width == 0) throw DimensionError("image dimensions must be positive");
    if (data.size() != height * width * 3) {
      throw DimensionError("image data length " + std::to_string(data.size()) + " != " + std::to_string(height) +
                           "x" + std::to_string(width) + "x3");
    }
  }

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * 3 + c]; }

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

/// Per-channel standardization applied after scaling pixels to [0, 1].
struct Normalization {
  std::array<double, 3> mean{0.48145466, 0.4578275, 0.40821073};
  std::array<double, 3> stddev{0.26862954, 0.26130258, 0.27577711};

  static Normalization identity() { return {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}}; }

  double apply(std::uint8_t v, std::size_t channel) const {
    return (static_cast<double>(v) / 255.0 - mean[channel]) / stddev[channel];
  }
};

// ---------------------------------------------------------------------------
// PPM I/O (binary P6 and ASCII P3, maxval 255)

namespace detail {

inline std::string next_ppm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace detail

inline RawImage read_ppm(std::istream& in) {
  const std::string magic = detail::next_ppm_token(in);
  if (magic != "P6" && magic != "P3") throw IoError("unsupported image format '" + magic + "' (expected PPM P6/P3)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(detail::next_ppm_token(in));
    h = std::stoul(detail::next_ppm_token(in));
    maxval = std::stoul(detail::next_ppm_token(in));
  } catch (const std::exception&) {
    throw IoError("malformed PPM header");
  }
  if (maxval != 255) throw IoError("only 8-bit PPM (maxval 255) is supported");
  if (w == 0 || h == 0) throw IoError("PPM has zero dimension");
  RawImage img(h, w);
  if (magic == "P6") {
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.data.size())) throw IoError("truncated PPM pixel data");
  } else {
    for (auto& px : img.data) {
      const std::string tok = detail::next_ppm_token(in);
      if (tok.empty()) throw IoError("truncated PPM pixel data");
      const unsigned long v = std::stoul(tok);
      if (v > 255) throw IoError("PPM sample exceeds maxval");
      px = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

inline RawImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image '" + path + "'");
  return read_ppm(f);
}

inline void write_ppm(const RawImage& img, const std::string& path) {
  img.validate();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Resizing

/// Bilinear resample with half-pixel centers and edge clamping; any target size.
inline RawImage resize_bilinear(const RawImage& img, std::size_t target_h, std::size_t target_w) {
  img.validate();
  if (target_h == 0 || target_w == 0) throw ConfigError("resize target must be positive");
  RawImage out(target_h, target_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(target_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(target_w);

  auto source_coord = [](std::size_t dst, double s, std::size_t extent, std::size_t& i0, std::size_t& i1,
                         double& frac) {
    double src = (static_cast<double>(dst) + 0.5) * s - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, extent - 1);
    frac = src - static_cast<double>(i0);
  };

  for (std::size_t y = 0; y < target_h; ++y) {
    std::size_t y0, y1;
    double fy;
    source_coord(y, sy, img.height, y0, y1, fy);
    for (std::size_t x = 0; x < target_w; ++x) {
      std::size_t x0, x1;
      double fx;
      source_coord(x, sx, img.width, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
        const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
        const double v = top * (1.0 - fy) + bottom * fy;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

/// Resizes to a pipeline resolution; both target dims must be positive multiples of 448.
inline RawImage resize_image(const RawImage& img, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0 || target_h % kWindowSize || target_w % kWindowSize) {
    throw ConfigError("resize target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                          " is not a positive multiple of 448",
                      "resolution");
  }
  if (img.height == target_h && img.width == target_w) return img;
  return resize_bilinear(img, target_h, target_w);
}

/// Converts to a standardized Tensor[H×W×3].
inline Tensor image_to_tensor(const RawImage& img, const Normalization& norm = Normalization::identity()) {
  img.validate();
  Tensor t({img.height, img.width, 3});
  for (std::size_t i = 0; i < img.data.size(); ++i) t[i] = norm.apply(img.data[i], i % 3);
  return t;
}

// ---------------------------------------------------------------------------
// Window tiling

/// An image cut into 448×448 windows (row-major window order) plus a global view.
struct WindowGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Tensor> windows;  // each [448×448×3]
  Tensor global_view;           // [448×448×3]
  std::size_t source_height = 0;
  std::size_t source_width = 0;

  std::size_t count() const noexcept { return windows.size(); }
};

inline WindowGrid split_windows(const RawImage& img, const Normalization& norm = Normalization::identity()) {
  img.validate();
  if (img.height % kWindowSize || img.width % kWindowSize) {
    throw ConfigError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                          " is not aligned to 448-pixel windows",
                      "resolution");
  }
  WindowGrid grid;
  grid.rows = img.height / kWindowSize;
  grid.cols = img.width / kWindowSize;
  grid.source_height = img.height;
  grid.source_width = img.width;
  grid.windows.reserve(grid.rows * grid.cols);
  for (std::size_t wr = 0; wr < grid.rows; ++wr) {
    for (std::size_t wc = 0; wc < grid.cols; ++wc) {
      Tensor win({kWindowSize, kWindowSize, 3});
      for (std::size_t y = 0; y < kWindowSize; ++y)
        for (std::size_t x = 0; x < kWindowSize; ++x)
          for (std::size_t c = 0; c < 3; ++c)
            win(y, x, c) = norm.apply(img.at(wr * kWindowSize + y, wc * kWindowSize + x, c), c);
      grid.windows.push_back(std::move(win));
    }
  }
  grid.global_view = image_to_tensor(resize_bilinear(img, kWindowSize, kWindowSize), norm);
  return grid;
}

/// Inverse of the tiling: stitches the windows back into Tensor[H×W×3].
inline Tensor assemble_windows(const WindowGrid& grid) {
  if (grid.windows.size() != grid.rows * grid.cols) throw DimensionError("window grid is inconsistent");
  Tensor out({grid.rows * kWindowSize, grid.cols * kWindowSize, 3});
  for (std::size_t wr = 0; wr < grid.rows; ++wr)
    for (std::size_t wc = 0; wc < grid.cols; ++wc) {
      const Tensor& win = grid.windows[wr * grid.cols + wc];
      for (std::size_t y = 0; y < kWindowSize; ++y)
        for (std::size_t x = 0; x < kWindowSize; ++x)
          for (std::size_t c = 0; c < 3; ++c) out(wr * kWindowSize + y, wc * kWindowSize + x, c) = win(y, x, c);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Patch tokenization

struct PatchTokens {
  std::size_t window_id = 0;
  Tensor tokens;  // [grid_rows*grid_cols × D], row-major over the patch grid
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
};

/// Flattens each 14×14×3 patch (row, column, channel order) into one row.
inline Tensor extract_patches(const Tensor& window) {
  if (window.rank() != 3 || window.dim(2) != 3 || window.dim(0) % kPatchSize || window.dim(1) % kPatchSize) {
    throw DimensionError("patchify expects [H×W×3] with H, W multiples of 14, got " + shape_string(window.shape()));
  }
  const std::size_t gr = window.dim(0) / kPatchSize, gc = window.dim(1) / kPatchSize;
  Tensor patches({gr * gc, kPatchDim});
  for (std::size_t pr = 0; pr < gr; ++pr)
    for (std::size_t pc = 0; pc < gc; ++pc) {
      auto row = patches.row(pr * gc + pc);
      std::size_t k = 0;
      for (std::size_t y = 0; y < kPatchSize; ++y)
        for (std::size_t x = 0; x < kPatchSize; ++x)
          for (std::size_t c = 0; c < 3; ++c) row[k++] = window(pr * kPatchSize + y, pc * kPatchSize + x, c);
    }
  return patches;
}

inline PatchTokens patchify(const Tensor& window, const Tensor& patch_proj, std::size_t window_id = 0) {
  if (patch_proj.rank() != 2 || patch_proj.dim(0) != kPatchDim) {
    throw DimensionError("patch projection must be [588×D], got " + shape_string(patch_proj.shape()));
  }
  PatchTokens out;
  out.window_id = window_id;
  out.grid_rows = window.dim(0) / kPatchSize;
  out.grid_cols = window.dim(1) / kPatchSize;
  out.tokens = matmul(extract_patches(window), patch_proj);
  return out;
}

/// Lays per-window patch tokens out as one [Hp×Wp×D] grid, Hp = rows·32, Wp = cols·32.
inline Tensor assemble_patch_grid(const std::vector<PatchTokens>& windows, std::size_t rows, std::size_t cols) {
  if (windows.size() != rows * cols || windows.empty()) throw DimensionError("assemble_patch_grid: window count");
  const std::size_t pr = windows.front().grid_rows, pc = windows.front().grid_cols, d = windows.front().tokens.cols();
  Tensor grid({rows * pr, cols * pc, d});
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& pt = windows[w];
    if (pt.grid_rows != pr || pt.grid_cols != pc || pt.tokens.cols() != d) {
      throw DimensionError("assemble_patch_grid: windows disagree in shape");
    }
    const std::size_t r0 = (w / cols) * pr, c0 = (w % cols) * pc;
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j)
        std::copy_n(pt.tokens.row(i * pc + j).begin(), d, grid.data().begin() + static_cast<std::ptrdiff_t>(((r0 + i) * grid.dim(1) + (c0 + j)) * d));
  }
  return grid;
}

}  // namespace textmonkey
