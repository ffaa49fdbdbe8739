// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>

#include "apf/image.hpp"
#include "apf/types.hpp"

namespace apf {

struct Lambda2Schedule {
  int warmup_iters = 5000;
  double peak = 0.3;
  double final_value = 0.2;
  int total_iters = 30000;
};

struct LossConfig {
  double lambda1 = 0.2;
  Lambda2Schedule lambda2;
  int ssim_window = 11;
  double ssim_sigma = 1.5;

  void validate() const {
    if (lambda1 < 0.0 || lambda1 > 1.0)
      throw std::invalid_argument("LossConfig: lambda1 must be in [0,1]");
    if (lambda2.final_value < 0.0 || lambda2.peak < lambda2.final_value)
      throw std::invalid_argument("LossConfig: need peak >= final >= 0");
    if (lambda2.warmup_iters < 0 || lambda2.warmup_iters > lambda2.total_iters)
      throw std::invalid_argument("LossConfig: need 0 <= warmup <= total iters");
    if (ssim_window < 1 || ssim_window % 2 == 0)
      throw std::invalid_argument("LossConfig: ssim_window must be odd and >= 1");
  }
};

/// Regularizer weight at an iteration: linear ramp from 0 to `peak` over the
/// warmup, then a half-cosine decay to `final_value` at `total_iters`.
inline double lambda2_at(int iter, const Lambda2Schedule& s) {
  if (iter <= s.warmup_iters) {
    if (s.warmup_iters == 0) return s.peak;
    return s.peak * static_cast<double>(iter) / s.warmup_iters;
  }
  const int span = s.total_iters - s.warmup_iters;
  const double t = span > 0
                       ? static_cast<double>(iter - s.warmup_iters) / span
                       : 1.0;
  return s.final_value + (s.peak - s.final_value) * 0.5 * (1.0 + std::cos(EIGEN_PI * t));
}

template <typename Scalar>
void check_same_size(const Image<Scalar>& a, const Image<Scalar>& b, const char* what) {
  if (!a.same_size(b)) throw std::invalid_argument(std::string(what) + ": size mismatch");
}

/// Mean absolute difference over all pixels and channels.
template <typename Scalar>
Scalar l1_loss(const Image<Scalar>& a, const Image<Scalar>& b) {
  check_same_size(a, b, "l1_loss");
  Scalar sum = 0;
  for (int c = 0; c < 3; ++c) sum += (a.ch[c] - b.ch[c]).abs().sum();
  return sum / static_cast<Scalar>(3 * a.height() * a.width());
}

template <typename Scalar>
Image<Scalar> l1_loss_backward(const Image<Scalar>& a, const Image<Scalar>& b) {
  check_same_size(a, b, "l1_loss_backward");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(3 * a.height() * a.width());
  Image<Scalar> grad(a.height(), a.width());
  for (int c = 0; c < 3; ++c)
    grad.ch[c] = (a.ch[c] - b.ch[c]).sign() * inv;
  return grad;
}

namespace detail {

// Mirror index into [0, n): ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

template <typename Scalar>
VectorX<Scalar> gaussian_kernel(int window, double sigma) {
  VectorX<Scalar> k(window);
  const int radius = window / 2;
  for (int i = 0; i < window; ++i)
    k[i] = static_cast<Scalar>(std::exp(-0.5 * std::pow((i - radius) / sigma, 2)));
  return k / k.sum();
}

template <typename Scalar>
ArrayXX<Scalar> blur_separable(const ArrayXX<Scalar>& in, const VectorX<Scalar>& kernel) {
  const int rows = static_cast<int>(in.rows());
  const int cols = static_cast<int>(in.cols());
  const int radius = static_cast<int>(kernel.size()) / 2;
  ArrayXX<Scalar> tmp(rows, cols), out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      Scalar acc = 0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * in(r, reflect_index(c + k, cols));
      tmp(r, c) = acc;
    }
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) {
      Scalar acc = 0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * tmp(reflect_index(r + k, rows), c);
      out(r, c) = acc;
    }
  return out;
}

/// Adjoint of blur_separable under the same mirror padding: scatters each
/// output's kernel taps back onto the pixels they read from.
template <typename Scalar>
ArrayXX<Scalar> blur_adjoint(const ArrayXX<Scalar>& grad_out, const VectorX<Scalar>& kernel) {
  const int rows = static_cast<int>(grad_out.rows());
  const int cols = static_cast<int>(grad_out.cols());
  const int radius = static_cast<int>(kernel.size()) / 2;
  ArrayXX<Scalar> tmp = ArrayXX<Scalar>::Zero(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      for (int k = -radius; k <= radius; ++k)
        tmp(reflect_index(r + k, rows), c) += kernel[k + radius] * grad_out(r, c);
  ArrayXX<Scalar> grad_in = ArrayXX<Scalar>::Zero(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int k = -radius; k <= radius; ++k)
        grad_in(r, reflect_index(c + k, cols)) += kernel[k + radius] * tmp(r, c);
  return grad_in;
}

}  // namespace detail

/// Structural similarity with a Gaussian window and mirror padding,
/// channel-averaged. When `grad_a` is non-null it receives d(ssim)/d(a).
template <typename Scalar>
Scalar ssim(const Image<Scalar>& a, const Image<Scalar>& b, const LossConfig& cfg = {},
            Image<Scalar>* grad_a = nullptr) {
  check_same_size(a, b, "ssim");
  const Scalar C1 = Scalar(0.01 * 0.01);
  const Scalar C2 = Scalar(0.03 * 0.03);
  const auto kernel = detail::gaussian_kernel<Scalar>(cfg.ssim_window, cfg.ssim_sigma);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(3 * a.height() * a.width());
  if (grad_a) *grad_a = Image<Scalar>(a.height(), a.width());
  Scalar total = 0;
  for (int c = 0; c < 3; ++c) {
    const ArrayXX<Scalar>& x = a.ch[c];
    const ArrayXX<Scalar>& y = b.ch[c];
    const ArrayXX<Scalar> u1 = detail::blur_separable(x, kernel);
    const ArrayXX<Scalar> u2 = detail::blur_separable(y, kernel);
    const ArrayXX<Scalar> w11 = detail::blur_separable<Scalar>(x * x, kernel);
    const ArrayXX<Scalar> w22 = detail::blur_separable<Scalar>(y * y, kernel);
    const ArrayXX<Scalar> w12 = detail::blur_separable<Scalar>(x * y, kernel);
    const ArrayXX<Scalar> a1 = 2 * u1 * u2 + C1;
    const ArrayXX<Scalar> a2 = 2 * (w12 - u1 * u2) + C2;
    const ArrayXX<Scalar> b1 = u1 * u1 + u2 * u2 + C1;
    const ArrayXX<Scalar> b2 = (w11 - u1 * u1) + (w22 - u2 * u2) + C2;
    const ArrayXX<Scalar> s = (a1 * a2) / (b1 * b2);
    total += s.sum() * inv_n;
    if (grad_a) {
      const ArrayXX<Scalar> r_u1 =
          inv_n * (2 * u2 * (a2 - a1) / (b1 * b2) - 2 * u1 * s * (1 / b1 - 1 / b2));
      const ArrayXX<Scalar> r_w11 = inv_n * (-s / b2);
      const ArrayXX<Scalar> r_w12 = inv_n * (2 * a1 / (b1 * b2));
      grad_a->ch[c] = detail::blur_adjoint(r_u1, kernel) +
                      2 * x * detail::blur_adjoint(r_w11, kernel) +
                      y * detail::blur_adjoint(r_w12, kernel);
    }
  }
  return total;
}

/// Structural dissimilarity (1 - ssim) / 2; gradient scaled accordingly.
template <typename Scalar>
Scalar d_ssim(const Image<Scalar>& a, const Image<Scalar>& b, const LossConfig& cfg = {},
              Image<Scalar>* grad_a = nullptr) {
  const Scalar s = ssim(a, b, cfg, grad_a);
  if (grad_a)
    for (auto& ch : grad_a->ch) ch *= Scalar(-0.5);
  return (Scalar(1) - s) / Scalar(2);
}

/// Peak signal-to-noise ratio in dB, capped at 99 so identical images stay
/// finite in report tables. Expects values already clamped to [0,1].
template <typename Scalar>
double psnr(const Image<Scalar>& a, const Image<Scalar>& b) {
  check_same_size(a, b, "psnr");
  double sq = 0;
  for (int c = 0; c < 3; ++c)
    sq += ((a.ch[c] - b.ch[c]) * (a.ch[c] - b.ch[c])).template cast<double>().sum();
  const double mse = sq / (3.0 * a.height() * a.width());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

template <typename Scalar>
struct ColorCorrection {
  Image<Scalar> corrected;
  Matrix34<Scalar> matrix;
  bool bias_only = false;
};

/// Least-squares affine color fit of `rendered` onto `reference`, applied and
/// clamped. Falls back to a bias-only fit when the normal equations are rank
/// deficient, and never returns a fit worse than leaving the image alone.
template <typename Scalar>
ColorCorrection<Scalar> color_correct(const Image<Scalar>& rendered,
                                      const Image<Scalar>& reference) {
  check_same_size(rendered, reference, "color_correct");
  const int h = rendered.height(), w = rendered.width();
  Eigen::Matrix<Scalar, 4, 4> gram = Eigen::Matrix<Scalar, 4, 4>::Zero();
  Matrix34<Scalar> rhs = Matrix34<Scalar>::Zero();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      Vector4<Scalar> hvec(rendered.ch[0](r, c), rendered.ch[1](r, c), rendered.ch[2](r, c),
                           Scalar(1));
      gram.noalias() += hvec * hvec.transpose();
      rhs.noalias() += reference.pixel(r, c) * hvec.transpose();
    }

  ColorCorrection<Scalar> out;
  Eigen::FullPivLU<Eigen::Matrix<Scalar, 4, 4>> lu(gram);
  if (lu.rank() == 4) {
    out.matrix = (lu.solve(rhs.transpose())).transpose();
  } else {
    out.bias_only = true;
    out.matrix = identity_transform<Scalar>();
    for (int c = 0; c < 3; ++c)
      out.matrix(c, 3) = reference.ch[c].mean() - rendered.ch[c].mean();
  }

  const auto sse_for = [&](const Matrix34<Scalar>& m) {
    Scalar sse = 0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        Vector4<Scalar> hvec(rendered.ch[0](r, c), rendered.ch[1](r, c),
                             rendered.ch[2](r, c), Scalar(1));
        sse += (m * hvec - reference.pixel(r, c)).squaredNorm();
      }
    return sse;
  };
  if (sse_for(out.matrix) > sse_for(identity_transform<Scalar>())) {
    out.matrix = identity_transform<Scalar>();
    out.bias_only = false;
  }

  out.corrected = Image<Scalar>(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      Vector4<Scalar> hvec(rendered.ch[0](r, c), rendered.ch[1](r, c), rendered.ch[2](r, c),
                           Scalar(1));
      out.corrected.set_pixel(r, c, out.matrix * hvec);
    }
  out.corrected = clamp01(out.corrected);
  return out;
}

}  // namespace apf
