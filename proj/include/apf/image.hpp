// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <stdexcept>

#include "apf/types.hpp"

namespace apf {

/// Planar RGB raster. Plane (row, col) indexing; row 0 is the top of the
/// image. Values are nominally in [0,1] but are not clamped by the container.
template <typename Scalar>
struct Image {
  std::array<ArrayXX<Scalar>, 3> ch;

  Image() = default;
  Image(int height, int width) {
    for (auto& c : ch) c = ArrayXX<Scalar>::Zero(height, width);
  }

  static Image constant(int height, int width, Scalar r, Scalar g, Scalar b) {
    Image img(height, width);
    img.ch[0].setConstant(r);
    img.ch[1].setConstant(g);
    img.ch[2].setConstant(b);
    return img;
  }

  int height() const { return static_cast<int>(ch[0].rows()); }
  int width() const { return static_cast<int>(ch[0].cols()); }

  Vector3<Scalar> pixel(int row, int col) const {
    return {ch[0](row, col), ch[1](row, col), ch[2](row, col)};
  }

  void set_pixel(int row, int col, const Vector3<Scalar>& rgb) {
    ch[0](row, col) = rgb[0];
    ch[1](row, col) = rgb[1];
    ch[2](row, col) = rgb[2];
  }

  bool same_size(const Image& other) const {
    return height() == other.height() && width() == other.width();
  }
};

template <typename Scalar>
Image<Scalar> clamp01(const Image<Scalar>& img) {
  Image<Scalar> out = img;
  for (auto& c : out.ch) c = c.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return out;
}

/// Copies columns [col0, col1) of every channel.
template <typename Scalar>
Image<Scalar> crop_columns(const Image<Scalar>& img, int col0, int col1) {
  if (col0 < 0 || col1 > img.width() || col0 >= col1)
    throw std::invalid_argument("crop_columns: bad column range");
  Image<Scalar> out(img.height(), col1 - col0);
  for (int c = 0; c < 3; ++c)
    out.ch[c] = img.ch[c].middleCols(col0, col1 - col0);
  return out;
}

/// Z-depth raster paired with a validity mask. Invalid pixels mark rays that
/// hit no geometry; they are excluded from every average.
template <typename Scalar>
struct DepthMap {
  ArrayXX<Scalar> values;
  ArrayXXb valid;

  DepthMap() = default;
  DepthMap(int height, int width)
      : values(ArrayXX<Scalar>::Zero(height, width)),
        valid(ArrayXXb::Constant(height, width, false)) {}

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }
};

}  // namespace apf
