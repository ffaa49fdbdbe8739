// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "apf/types.hpp"

namespace apf {

/// Pinhole camera. Pose is stored as world-from-camera; rotation columns are
/// the camera axes (x right, y down, z forward) expressed in world space.
///
/// Continuous pixel coordinates put the center of the integer pixel (i, j)
/// at (i + 0.5, j + 0.5), with u along the width axis and v along height.
/// Depth is z-depth: the distance along the camera forward axis, not the
/// Euclidean ray length.
template <typename Scalar>
struct Camera {
  Scalar fx = 0, fy = 0;
  Scalar cx = 0, cy = 0;
  int width = 0, height = 0;
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  void validate() const {
    if (!(fx > Scalar(0)) || !(fy > Scalar(0)))
      throw std::invalid_argument("Camera: focal lengths must be positive");
    if (width < 1 || height < 1)
      throw std::invalid_argument("Camera: resolution must be at least 1x1");
    const Matrix3<Scalar> rtr = rotation.transpose() * rotation;
    if ((rtr - Matrix3<Scalar>::Identity()).template lpNorm<Eigen::Infinity>() > Scalar(1e-6))
      throw std::invalid_argument("Camera: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - Scalar(1)) > Scalar(1e-6))
      throw std::invalid_argument("Camera: rotation determinant is not +1");
  }

  Vector3<Scalar> position() const { return translation; }
  Vector3<Scalar> forward() const { return rotation.col(2); }

  Vector3<Scalar> camera_from_world(const Vector3<Scalar>& p) const {
    return rotation.transpose() * (p - translation);
  }
  Vector3<Scalar> world_from_camera(const Vector3<Scalar>& p) const {
    return rotation * p + translation;
  }
};

/// Lifts a pixel at z-depth `depth` to world space.
template <typename Scalar>
Vector3<Scalar> back_project(const Camera<Scalar>& cam, Scalar u, Scalar v, Scalar depth) {
  if (!(depth > Scalar(0)))
    throw std::domain_error("back_project: depth must be positive");
  if (u < Scalar(0) || u > Scalar(cam.width) || v < Scalar(0) || v > Scalar(cam.height))
    throw std::domain_error("back_project: pixel outside image bounds");
  const Vector3<Scalar> p_cam(depth * (u - cam.cx) / cam.fx,
                              depth * (v - cam.cy) / cam.fy, depth);
  return cam.world_from_camera(p_cam);
}

/// Projects a world point; returns ((u, v), z-depth).
template <typename Scalar>
std::pair<Vector2<Scalar>, Scalar> project(const Camera<Scalar>& cam,
                                           const Vector3<Scalar>& point) {
  const Vector3<Scalar> p_cam = cam.camera_from_world(point);
  if (!(p_cam.z() > Scalar(0)))
    throw std::domain_error("project: point is behind the camera");
  const Scalar u = cam.fx * p_cam.x() / p_cam.z() + cam.cx;
  const Scalar v = cam.fy * p_cam.y() / p_cam.z() + cam.cy;
  return {Vector2<Scalar>(u, v), p_cam.z()};
}

template <typename Scalar>
nlohmann::json camera_to_json(const Camera<Scalar>& cam) {
  nlohmann::json j;
  j["fx"] = static_cast<double>(cam.fx);
  j["fy"] = static_cast<double>(cam.fy);
  j["cx"] = static_cast<double>(cam.cx);
  j["cy"] = static_cast<double>(cam.cy);
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::array<double, 9> rot;  // row-major
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = static_cast<double>(cam.rotation(r, c));
  j["rotation"] = rot;
  j["translation"] = std::array<double, 3>{static_cast<double>(cam.translation[0]),
                                           static_cast<double>(cam.translation[1]),
                                           static_cast<double>(cam.translation[2])};
  return j;
}

template <typename Scalar>
Camera<Scalar> camera_from_json(const nlohmann::json& j) {
  Camera<Scalar> cam;
  cam.fx = static_cast<Scalar>(j.at("fx").get<double>());
  cam.fy = static_cast<Scalar>(j.at("fy").get<double>());
  cam.cx = static_cast<Scalar>(j.at("cx").get<double>());
  cam.cy = static_cast<Scalar>(j.at("cy").get<double>());
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto rot = j.at("rotation").get<std::array<double, 9>>();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = static_cast<Scalar>(rot[3 * r + c]);
  const auto t = j.at("translation").get<std::array<double, 3>>();
  cam.translation = Vector3<Scalar>(static_cast<Scalar>(t[0]), static_cast<Scalar>(t[1]),
                                    static_cast<Scalar>(t[2]));
  cam.validate();
  return cam;
}

/// Builds a world-from-camera pose looking from `eye` toward `target`.
/// `world_up` fixes the roll; the camera y axis points away from it.
template <typename Scalar>
Matrix3<Scalar> look_at_rotation(const Vector3<Scalar>& eye, const Vector3<Scalar>& target,
                                 const Vector3<Scalar>& world_up) {
  const Vector3<Scalar> fwd = (target - eye).normalized();
  Vector3<Scalar> right = fwd.cross(world_up);
  const Scalar n = right.norm();
  if (n < Scalar(1e-9))
    throw std::invalid_argument("look_at_rotation: view direction parallel to up");
  right /= n;
  const Vector3<Scalar> down = fwd.cross(right);
  Matrix3<Scalar> rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = fwd;
  return rot;
}

}  // namespace apf
