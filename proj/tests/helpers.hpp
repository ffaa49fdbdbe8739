// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "apf/appearance.hpp"
#include "apf/camera.hpp"
#include "apf/hash_grid.hpp"
#include "apf/image.hpp"
#include "apf/training.hpp"
#include "apf/types.hpp"

namespace apftest {

/// Identity-pose pinhole camera at the origin looking down +z.
inline apf::Camera<double> axis_camera(int width, int height, double focal = 0.0) {
  apf::Camera<double> cam;
  cam.fx = cam.fy = focal > 0.0 ? focal : static_cast<double>(width);
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

/// Camera on a horizontal circle of `radius` at angle `theta`, fixating the
/// origin.
inline apf::Camera<double> orbit_camera(int width, int height, double theta, double radius,
                                        double focal = 0.0) {
  apf::Camera<double> cam = axis_camera(width, height, focal);
  const Eigen::Vector3d eye(radius * std::cos(theta), 0.0, radius * std::sin(theta));
  cam.rotation = apf::look_at_rotation<double>(eye, Eigen::Vector3d::Zero(),
                                               Eigen::Vector3d(0, 1, 0));
  cam.translation = eye;
  return cam;
}

inline apf::Image<double> random_image(int height, int width, std::uint64_t seed,
                                       double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  apf::Image<double> img(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) img.set_pixel(r, c, {u(rng), u(rng), u(rng)});
  return img;
}

inline apf::DepthMap<double> constant_depth(int height, int width, double value) {
  apf::DepthMap<double> d(height, width);
  d.values.setConstant(value);
  d.valid.setConstant(true);
  return d;
}

inline apf::DepthMap<double> random_depth(int height, int width, std::uint64_t seed,
                                          double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  apf::DepthMap<double> d(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) d.values(r, c) = u(rng);
  d.valid.setConstant(true);
  return d;
}

inline double rel_err(double a, double b) {
  const double mag = std::max(std::abs(a), std::abs(b));
  if (mag < 1e-12) return 0.0;
  return std::abs(a - b) / mag;
}

/// True when `analytic` and `fd` agree to `rel_tol`, with an absolute floor
/// for gradients that are themselves numerically zero.
inline bool grad_close(double analytic, double fd, double rel_tol, double abs_floor = 1e-9) {
  const double mag = std::max(std::abs(analytic), std::abs(fd));
  return std::abs(analytic - fd) <= std::max(abs_floor, rel_tol * mag);
}

/// Central difference of `f` with respect to the storage slot `x`.
inline double central_diff(const std::function<double()>& f, double& x, double h) {
  const double orig = x;
  x = orig + h;
  const double fp = f();
  x = orig - h;
  const double fm = f();
  x = orig;
  return (fp - fm) / (2.0 * h);
}

/// Two-level grid small enough for exhaustive checks; level 0 (res 4) indexes
/// densely, level 1 (res 8) hashes, so both code paths are exercised.
inline apf::AppearanceConfig tiny_config() {
  apf::AppearanceConfig c;
  c.grid.levels = 2;
  c.grid.features_per_level = 2;
  c.grid.table_size = 128;
  c.grid.base_resolution = 4;
  c.grid.growth_factor = apf::growth_for_finest(2, 4, 8);
  c.grid.domain_min = Eigen::Vector3d::Constant(-1.0);
  c.grid.domain_max = Eigen::Vector3d::Constant(1.0);
  c.mlp_hidden = {8};
  c.embedding_dim = 4;
  return c;
}

/// Moves every trainable block away from the identity-producing init so that
/// gradients flow through the whole chain.
inline void randomize_model(apf::AppearanceModel<double>& model, std::uint64_t seed,
                            double scale = 0.3, double grid_scale = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& layer : model.mlp.layers) {
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        layer.weights(r, c) += scale * u(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] += scale * u(rng);
  }
  for (Eigen::Index c = 0; c < model.embeddings.cols(); ++c)
    for (Eigen::Index r = 0; r < model.embeddings.rows(); ++r)
      model.embeddings(r, c) = scale * u(rng);
  if (grid_scale > 0.0)
    for (auto& table : model.grids.tables)
      for (Eigen::Index c = 0; c < table.cols(); ++c)
        for (Eigen::Index r = 0; r < table.rows(); ++r) table(r, c) += grid_scale * u(rng);
}

/// 4x4-pixel, two-view problem with every parameter group active, small
/// enough that exhaustive finite differencing stays under a second.
struct ToyProblem {
  apf::AppearanceModel<double> model;
  std::vector<apf::FrameBundle<double>> frames;
  apf::LossConfig loss;
  double lambda2 = 0.3;
  int cell_size = 2;
};

inline ToyProblem make_toy_problem(std::uint64_t seed) {
  ToyProblem p;
  p.model = apf::create_appearance_model<double>(tiny_config(), {"view_a", "view_b"}, seed);
  randomize_model(p.model, seed + 17, 0.3, 0.01);

  apf::Camera<double> cam0 = axis_camera(4, 4, 4.0);
  apf::Camera<double> cam1 = cam0;
  cam1.rotation = Eigen::AngleAxisd(0.15, Eigen::Vector3d(0.2, 1.0, 0.1).normalized())
                      .toRotationMatrix();
  cam1.translation = Eigen::Vector3d(0.15, -0.1, -0.2);

  const apf::Camera<double> cams[2] = {cam0, cam1};
  for (int v = 0; v < 2; ++v) {
    apf::FrameBundle<double> f;
    f.view_id = v == 0 ? "view_a" : "view_b";
    f.rendered = random_image(4, 4, seed + 100 + v, 0.1, 0.9);
    f.ground_truth = random_image(4, 4, seed + 200 + v, 0.0, 1.0);
    f.depth = random_depth(4, 4, seed + 300 + v, 0.6, 1.1);
    f.camera = cams[v];
    f.validate();
    p.frames.push_back(std::move(f));
  }
  return p;
}

/// Sum of both views' totals; the objective every gradient check differentiates.
inline double toy_total(const ToyProblem& p) {
  double total = 0.0;
  for (int v = 0; v < 2; ++v) {
    const auto& f = p.frames[v];
    const apf::TransformField<double> field = apf::build_transform_field(
        p.model, f.depth, f.camera, v, p.cell_size, &f.rendered);
    const apf::Image<double> transformed = apf::transform_image(f.rendered, field);
    total += apf::view_loss(transformed, f.ground_truth, field, p.loss, p.lambda2, false).total;
  }
  return total;
}

/// Analytic gradients of toy_total for every parameter group.
inline void toy_backward(const ToyProblem& p, apf::MlpGrads<double>& mlp_grads,
                         apf::HashGridGrads<double>& grid_grads,
                         apf::MatrixX<double>& embedding_grads) {
  for (int v = 0; v < 2; ++v) {
    const auto& f = p.frames[v];
    apf::FieldCache<double> cache;
    const apf::TransformField<double> field = apf::build_transform_field(
        p.model, f.depth, f.camera, v, p.cell_size, &f.rendered, &cache);
    const apf::Image<double> transformed = apf::transform_image(f.rendered, field);
    const apf::ViewLoss<double> loss =
        apf::view_loss(transformed, f.ground_truth, field, p.loss, p.lambda2, true);
    std::vector<apf::Matrix34<double>> cell_grads =
        apf::transform_image_backward(f.rendered, field, loss.grad_transformed);
    apf::identity_regularizer_backward(field, p.lambda2, cell_grads);
    apf::field_backward(p.model, cache, v, cell_grads, mlp_grads, &grid_grads, embedding_grads);
  }
}

inline bool images_equal(const apf::Image<double>& a, const apf::Image<double>& b) {
  if (!a.same_size(b)) return false;
  for (int c = 0; c < 3; ++c)
    if (!(a.ch[c] == b.ch[c]).all()) return false;
  return true;
}

inline double image_max_abs_diff(const apf::Image<double>& a, const apf::Image<double>& b) {
  double m = 0.0;
  for (int c = 0; c < 3; ++c) m = std::max(m, (a.ch[c] - b.ch[c]).abs().maxCoeff());
  return m;
}

}  // namespace apftest
