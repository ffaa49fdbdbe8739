// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "apf/camera.hpp"
#include "apf/image.hpp"
#include "apf/parallel.hpp"
#include "apf/training.hpp"
#include "apf/types.hpp"

namespace apf {

struct Primitive {
  enum class Kind { plane, sphere };
  Kind kind = Kind::sphere;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();   // plane point or sphere center
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ(); // planes only
  double radius = 1.0;                               // spheres only
  int texture_id = 0;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  Eigen::Vector3d bounds_min = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d bounds_max = Eigen::Vector3d::Constant(1.0);
  std::uint64_t seed = 0;

  void validate() const {
    if (!(bounds_min.array() < bounds_max.array()).all())
      throw std::invalid_argument("SceneSpec: empty bounds box");
    for (const auto& p : primitives) {
      Eigen::Vector3d lo = p.point, hi = p.point;
      if (p.kind == Primitive::Kind::sphere) {
        lo.array() -= p.radius;
        hi.array() += p.radius;
      }
      if ((lo.array() < bounds_min.array()).any() || (hi.array() > bounds_max.array()).any())
        throw std::invalid_argument("SceneSpec: primitive outside bounds");
    }
  }
};

/// Sinusoidal albedo field parameters. Amplitudes are bounded so every albedo
/// stays inside [0.15, 0.85], leaving headroom for appearance variation
/// before values clip.
struct TextureParams {
  Eigen::Matrix3d wave;  // row c = wave vector for channel c
  Eigen::Vector3d phase;
  Eigen::Vector3d amplitude;
};

inline TextureParams texture_params(std::uint64_t scene_seed, int texture_id) {
  std::mt19937_64 rng(scene_seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(texture_id));
  std::uniform_real_distribution<double> dir(-1.0, 1.0);
  std::uniform_real_distribution<double> freq(0.3, 1.2);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * EIGEN_PI);
  std::uniform_real_distribution<double> amp(0.1, 0.35);
  TextureParams t;
  for (int c = 0; c < 3; ++c) {
    Eigen::Vector3d d(dir(rng), dir(rng), dir(rng));
    if (d.norm() < 1e-6) d = Eigen::Vector3d::UnitX();
    t.wave.row(c) = (d.normalized() * freq(rng)).transpose();
    t.phase[c] = ph(rng);
    t.amplitude[c] = amp(rng);
  }
  return t;
}

inline Eigen::Vector3d albedo_at(const TextureParams& t, const Eigen::Vector3d& p) {
  Eigen::Vector3d c;
  for (int i = 0; i < 3; ++i)
    c[i] = 0.5 + t.amplitude[i] * std::sin(t.wave.row(i).dot(p) + t.phase[i]);
  return c;
}

/// Enclosed scene: a large textured sphere surrounding the cameras plus a
/// small central sphere for parallax. Every ray from inside hits something,
/// so all depths are valid.
inline SceneSpec scene_room(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.bounds_min = Eigen::Vector3d::Constant(-15.5);
  s.bounds_max = Eigen::Vector3d::Constant(15.5);
  Primitive shell;
  shell.kind = Primitive::Kind::sphere;
  shell.point = Eigen::Vector3d::Zero();
  shell.radius = 15.0;
  shell.texture_id = 0;
  Primitive core;
  core.kind = Primitive::Kind::sphere;
  core.point = Eigen::Vector3d::Zero();
  core.radius = 1.2;
  core.texture_id = 1;
  s.primitives = {shell, core};
  return s;
}

/// A single infinite backdrop plane; smooth depth everywhere, all pixels
/// valid for cameras facing it.
inline SceneSpec scene_backdrop(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.bounds_min = Eigen::Vector3d(-40.0, -40.0, -1.0);
  s.bounds_max = Eigen::Vector3d(40.0, 40.0, 9.0);
  Primitive plane;
  plane.kind = Primitive::Kind::plane;
  plane.point = Eigen::Vector3d(0.0, 0.0, 8.0);
  plane.normal = Eigen::Vector3d(0.0, 0.0, -1.0);
  plane.texture_id = 0;
  s.primitives = {plane};
  return s;
}

/// A lone sphere in empty space; rays past the silhouette miss and produce
/// invalid depths.
inline SceneSpec scene_open(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.bounds_min = Eigen::Vector3d::Constant(-2.0);
  s.bounds_max = Eigen::Vector3d::Constant(2.0);
  Primitive core;
  core.kind = Primitive::Kind::sphere;
  core.point = Eigen::Vector3d::Zero();
  core.radius = 1.0;
  core.texture_id = 0;
  s.primitives = {core};
  return s;
}

namespace detail {

/// Nearest intersection along o + t*d with t > eps; returns t or a negative
/// number on miss. The direction is unnormalized with unit camera-forward
/// component, so t is the z-depth directly.
inline double intersect(const Primitive& prim, const Eigen::Vector3d& o,
                        const Eigen::Vector3d& d) {
  constexpr double eps = 1e-9;
  if (prim.kind == Primitive::Kind::plane) {
    const double denom = prim.normal.dot(d);
    if (std::abs(denom) < 1e-12) return -1.0;
    const double t = prim.normal.dot(prim.point - o) / denom;
    return t > eps ? t : -1.0;
  }
  const Eigen::Vector3d oc = o - prim.point;
  const double a = d.squaredNorm();
  const double b = 2.0 * d.dot(oc);
  const double k = oc.squaredNorm() - prim.radius * prim.radius;
  const double disc = b * b - 4.0 * a * k;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  if (t0 > eps) return t0;
  const double t1 = (-b + sq) / (2.0 * a);
  return t1 > eps ? t1 : -1.0;
}

}  // namespace detail

/// Analytic ray casting: nearest hit per pixel gives the procedural albedo
/// and exact z-depth; misses are marked invalid.
template <typename Scalar>
std::pair<Image<Scalar>, DepthMap<Scalar>> render_oracle(const SceneSpec& scene,
                                                         const Camera<Scalar>& camera,
                                                         int threads = 1) {
  scene.validate();
  camera.validate();
  std::vector<TextureParams> textures;
  for (const auto& p : scene.primitives)
    textures.push_back(texture_params(scene.seed, p.texture_id));

  Image<Scalar> img(camera.height, camera.width);
  DepthMap<Scalar> depth(camera.height, camera.width);
  const Eigen::Vector3d origin = camera.position().template cast<double>();
  const Eigen::Matrix3d rot = camera.rotation.template cast<double>();

  parallel_for(0, camera.height, threads, [&](int r) {
    for (int c = 0; c < camera.width; ++c) {
      const double u = c + 0.5, v = r + 0.5;
      const Eigen::Vector3d dir_cam((u - static_cast<double>(camera.cx)) / camera.fx,
                                    (v - static_cast<double>(camera.cy)) / camera.fy, 1.0);
      const Eigen::Vector3d dir = rot * dir_cam;
      double best_t = -1.0;
      int best = -1;
      for (size_t i = 0; i < scene.primitives.size(); ++i) {
        const double t = detail::intersect(scene.primitives[i], origin, dir);
        if (t > 0.0 && (best < 0 || t < best_t)) {
          best_t = t;
          best = static_cast<int>(i);
        }
      }
      if (best < 0) {
        depth.values(r, c) = Scalar(-1);
        depth.valid(r, c) = false;
        continue;
      }
      const Eigen::Vector3d hit = origin + best_t * dir;
      const Eigen::Vector3d albedo = albedo_at(textures[best], hit);
      img.set_pixel(r, c, albedo.cast<Scalar>());
      depth.values(r, c) = static_cast<Scalar>(best_t);
      depth.valid(r, c) = true;
    }
  });
  return {std::move(img), std::move(depth)};
}

struct LocalLight {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
  Eigen::Vector3d gain = Eigen::Vector3d::Ones();  // multiplicative, per channel
};

struct VariationSpec {
  std::vector<Matrix34<double>> global_affines;  // one per view
  std::vector<LocalLight> local_lights;
  std::uint64_t seed = 0;

  void validate() const {
    for (const auto& l : local_lights) {
      if (!(l.radius > 0.0)) throw std::invalid_argument("VariationSpec: radius must be > 0");
      if (!(l.gain.array() > 0.0).all())
        throw std::invalid_argument("VariationSpec: gains must be positive");
    }
  }
};

/// Per-view global affines spanned by two shared random basis matrices, with
/// latent coefficients on a circle of radius `strength`. Any view's affine,
/// including held-out ones, lies in the 2D span the model can learn.
inline std::vector<Matrix34<double>> make_latent_global_affines(int n_views, double strength,
                                                                std::uint64_t seed) {
  if (n_views < 1) throw std::invalid_argument("make_latent_global_affines: need views");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix34<double> basis[2];
  for (auto& b : basis)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) b(r, c) = u(rng) * (c == 3 ? 0.25 : 0.5);
  std::vector<Matrix34<double>> affines;
  for (int v = 0; v < n_views; ++v) {
    const double theta = 2.0 * EIGEN_PI * v / n_views + 0.7;
    affines.push_back(identity_transform<double>() + strength * std::cos(theta) * basis[0] +
                      strength * std::sin(theta) * basis[1]);
  }
  return affines;
}

/// Applies the view's global affine everywhere, then multiplies each local
/// light's gain with a smooth cosine falloff over pixels whose back-projected
/// world point lies inside the light's radius. Output is clamped to [0,1].
template <typename Scalar>
Image<Scalar> inject_variation(const Image<Scalar>& clean, const DepthMap<Scalar>& depth,
                               const Camera<Scalar>& camera, int view,
                               const VariationSpec& spec) {
  spec.validate();
  if (clean.height() != depth.height() || clean.width() != depth.width())
    throw std::invalid_argument("inject_variation: image/depth size mismatch");
  if (view < 0 || view >= static_cast<int>(spec.global_affines.size()))
    throw std::out_of_range("inject_variation: no global affine for view");
  const Matrix34<Scalar> affine = spec.global_affines[view].cast<Scalar>();

  Image<Scalar> out(clean.height(), clean.width());
  for (int r = 0; r < clean.height(); ++r)
    for (int c = 0; c < clean.width(); ++c) {
      const Vector3<Scalar> rgb = clean.pixel(r, c);
      Vector3<Scalar> varied =
          affine * Vector4<Scalar>(rgb[0], rgb[1], rgb[2], Scalar(1));
      if (depth.valid(r, c) && depth.values(r, c) > Scalar(0) && !spec.local_lights.empty()) {
        const Vector3<Scalar> world = back_project(
            camera, static_cast<Scalar>(c) + Scalar(0.5), static_cast<Scalar>(r) + Scalar(0.5),
            depth.values(r, c));
        for (const auto& light : spec.local_lights) {
          const double dist = (world.template cast<double>() - light.center).norm();
          if (dist >= light.radius) continue;
          const double falloff = 0.5 * (1.0 + std::cos(EIGEN_PI * dist / light.radius));
          for (int ch = 0; ch < 3; ++ch)
            varied[ch] *= static_cast<Scalar>(1.0 + (light.gain[ch] - 1.0) * falloff);
        }
      }
      for (int ch = 0; ch < 3; ++ch)
        varied[ch] = std::min(Scalar(1), std::max(Scalar(0), varied[ch]));
      out.set_pixel(r, c, varied);
    }
  return out;
}

struct OrbitSpec {
  int n_views = 8;
  double radius = 5.0;
  double bob = 0.5;  // vertical wobble amplitude, breaks coplanarity
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  int width = 128, height = 128;
  double fov_deg = 60.0;
};

/// Cameras on a horizontal orbit around `center`, all looking at it.
template <typename Scalar>
std::vector<Camera<Scalar>> make_orbit_cameras(const OrbitSpec& orbit) {
  if (orbit.n_views < 1) throw std::invalid_argument("make_orbit_cameras: need views");
  std::vector<Camera<Scalar>> cams;
  const double f = orbit.width / (2.0 * std::tan(0.5 * orbit.fov_deg * EIGEN_PI / 180.0));
  for (int v = 0; v < orbit.n_views; ++v) {
    const double theta = 2.0 * EIGEN_PI * v / orbit.n_views;
    const Eigen::Vector3d eye =
        orbit.center + Eigen::Vector3d(orbit.radius * std::cos(theta),
                                       orbit.bob * std::sin(2.0 * theta),
                                       orbit.radius * std::sin(theta));
    Camera<Scalar> cam;
    cam.fx = cam.fy = static_cast<Scalar>(f);
    cam.cx = static_cast<Scalar>(orbit.width) / 2;
    cam.cy = static_cast<Scalar>(orbit.height) / 2;
    cam.width = orbit.width;
    cam.height = orbit.height;
    cam.rotation = look_at_rotation<Scalar>(eye.cast<Scalar>(), orbit.center.cast<Scalar>(),
                                            Vector3<Scalar>(0, 1, 0));
    cam.translation = eye.cast<Scalar>();
    cam.validate();
    cams.push_back(cam);
  }
  return cams;
}

template <typename Scalar>
struct Dataset {
  std::vector<FrameBundle<Scalar>> frames;
  SceneSpec scene;
  VariationSpec variation;
  std::vector<Camera<Scalar>> cameras;
};

/// Renders every camera, injects that view's variation, and marks the listed
/// views as test. rendered = clean oracle image, ground_truth = varied image.
template <typename Scalar>
Dataset<Scalar> generate_dataset(const SceneSpec& scene, const std::vector<Camera<Scalar>>& cameras,
                                 const VariationSpec& variation,
                                 const std::vector<int>& test_views, int threads = 1) {
  if (cameras.size() < 2) throw std::invalid_argument("generate_dataset: need >= 2 views");
  if (variation.global_affines.size() != cameras.size())
    throw std::invalid_argument("generate_dataset: one global affine per view required");
  Dataset<Scalar> ds;
  ds.scene = scene;
  ds.variation = variation;
  ds.cameras = cameras;
  for (int v = 0; v < static_cast<int>(cameras.size()); ++v) {
    auto [clean, depth] = render_oracle(scene, cameras[v], threads);
    FrameBundle<Scalar> frame;
    char name[16];
    std::snprintf(name, sizeof(name), "view_%03d", v);
    frame.view_id = name;
    frame.ground_truth = inject_variation(clean, depth, cameras[v], v, variation);
    frame.rendered = std::move(clean);
    frame.depth = std::move(depth);
    frame.camera = cameras[v];
    frame.is_test = std::find(test_views.begin(), test_views.end(), v) != test_views.end();
    frame.validate();
    ds.frames.push_back(std::move(frame));
  }
  return ds;
}

}  // namespace apf
