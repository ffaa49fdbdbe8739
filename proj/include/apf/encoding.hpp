// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "apf/types.hpp"

namespace apf {

/// Which quantity feeds the local-feature slot of the decoder input.
/// `xyz` is the hash-grid path; the rest replace it with sine/cosine
/// positional encodings of degenerate per-pixel quantities, padded or
/// truncated so the decoder input width never changes.
enum class EncodingKind { xyz, uv, depth, uv_depth, color };

inline std::string to_string(EncodingKind k) {
  switch (k) {
    case EncodingKind::xyz: return "xyz";
    case EncodingKind::uv: return "uv";
    case EncodingKind::depth: return "depth";
    case EncodingKind::uv_depth: return "uv_depth";
    case EncodingKind::color: return "color";
  }
  throw std::invalid_argument("unknown EncodingKind");
}

inline EncodingKind encoding_kind_from_string(const std::string& s) {
  if (s == "xyz") return EncodingKind::xyz;
  if (s == "uv") return EncodingKind::uv;
  if (s == "depth") return EncodingKind::depth;
  if (s == "uv_depth") return EncodingKind::uv_depth;
  if (s == "color") return EncodingKind::color;
  throw std::invalid_argument("unknown encoding kind: " + s);
}

struct AblationEncoding {
  EncodingKind kind = EncodingKind::xyz;
  int pe_frequencies = 16;
  // Depths are divided by this before encoding; defaults to the grid domain
  // diagonal when the model is assembled.
  double depth_scale = 1.0;
};

namespace detail {

/// Writes the sine/cosine bands of `inputs` into `out` (length `out_len`).
/// Band layout is frequency-major: for frequency j and input i the pair
/// (sin(2^j pi q_i), cos(2^j pi q_i)) lands at 2*(j*k + i). Bands past
/// out_len are truncated; unwritten tail entries stay zero.
template <typename Scalar, int N>
VectorX<Scalar> positional_encode(const Eigen::Matrix<Scalar, N, 1>& inputs, int frequencies,
                                  int out_len) {
  VectorX<Scalar> out = VectorX<Scalar>::Zero(out_len);
  int idx = 0;
  for (int j = 0; j < frequencies && idx < out_len; ++j) {
    const Scalar freq = std::ldexp(Scalar(1), j) * static_cast<Scalar>(EIGEN_PI);
    for (int i = 0; i < N && idx < out_len; ++i) {
      const Scalar arg = freq * inputs[i];
      out[idx++] = std::sin(arg);
      if (idx < out_len) out[idx++] = std::cos(arg);
    }
  }
  return out;
}

}  // namespace detail

/// Encodes the degenerate per-pixel quantities selected by `enc.kind` into a
/// feature vector of exactly `out_len` entries. All inputs are normalized to
/// [0,1] first: uv by the image size, depth by enc.depth_scale; colors are
/// assumed already normalized.
template <typename Scalar>
VectorX<Scalar> ablation_encode(const AblationEncoding& enc, Scalar u, Scalar v, Scalar depth,
                                const Vector3<Scalar>& color, int width, int height,
                                int out_len) {
  const auto clamp01 = [](Scalar q) { return std::min(Scalar(1), std::max(Scalar(0), q)); };
  const Scalar un = clamp01(u / static_cast<Scalar>(width));
  const Scalar vn = clamp01(v / static_cast<Scalar>(height));
  const Scalar dn = clamp01(depth / static_cast<Scalar>(enc.depth_scale));
  switch (enc.kind) {
    case EncodingKind::uv:
      return detail::positional_encode(Vector2<Scalar>(un, vn), enc.pe_frequencies, out_len);
    case EncodingKind::depth:
      return detail::positional_encode(Eigen::Matrix<Scalar, 1, 1>(dn), enc.pe_frequencies,
                                       out_len);
    case EncodingKind::uv_depth:
      return detail::positional_encode(Vector3<Scalar>(un, vn, dn), enc.pe_frequencies,
                                       out_len);
    case EncodingKind::color: {
      const Vector3<Scalar> c(clamp01(color[0]), clamp01(color[1]), clamp01(color[2]));
      return detail::positional_encode(c, enc.pe_frequencies, out_len);
    }
    case EncodingKind::xyz:
      throw std::invalid_argument("ablation_encode: xyz uses the hash grids");
  }
  throw std::invalid_argument("ablation_encode: unknown kind");
}

}  // namespace apf
