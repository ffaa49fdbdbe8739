// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#include "apf/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "apf/image_io.hpp"

namespace apf {

namespace fs = std::filesystem;

nlohmann::json variation_to_json(const VariationSpec& v) {
  nlohmann::json affines = nlohmann::json::array();
  for (const auto& m : v.global_affines) {
    std::array<double, 12> row_major;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) row_major[4 * r + c] = m(r, c);
    affines.push_back(row_major);
  }
  nlohmann::json lights = nlohmann::json::array();
  for (const auto& l : v.local_lights)
    lights.push_back({{"center", {l.center.x(), l.center.y(), l.center.z()}},
                      {"radius", l.radius},
                      {"gain", {l.gain.x(), l.gain.y(), l.gain.z()}}});
  return {{"seed", v.seed}, {"global_affines", affines}, {"local_lights", lights}};
}

VariationSpec variation_from_json(const nlohmann::json& j) {
  VariationSpec v;
  v.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& a : j.at("global_affines")) {
    const auto row_major = a.get<std::array<double, 12>>();
    Matrix34<double> m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = row_major[4 * r + c];
    v.global_affines.push_back(m);
  }
  for (const auto& l : j.at("local_lights")) {
    LocalLight light;
    const auto center = l.at("center").get<std::array<double, 3>>();
    const auto gain = l.at("gain").get<std::array<double, 3>>();
    light.center = Eigen::Vector3d(center[0], center[1], center[2]);
    light.gain = Eigen::Vector3d(gain[0], gain[1], gain[2]);
    light.radius = l.at("radius").get<double>();
    v.local_lights.push_back(light);
  }
  v.validate();
  return v;
}

void save_dataset(const Dataset<double>& ds, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& frame : ds.frames) {
    const std::string base = frame.view_id;
    write_pfm(dir + "/" + base + "_render.pfm", frame.rendered);
    write_pfm(dir + "/" + base + "_gt.pfm", frame.ground_truth);
    write_depth_pfm(dir + "/" + base + "_depth.pfm", frame.depth);
    write_png(dir + "/" + base + "_render.png", frame.rendered);
    write_png(dir + "/" + base + "_gt.png", frame.ground_truth);
    {
      std::ofstream out(dir + "/" + base + "_camera.json", std::ios::trunc);
      if (!out) throw std::runtime_error("save_dataset: cannot write camera for " + base);
      out << camera_to_json(frame.camera).dump(2) << "\n";
    }
    frames.push_back({{"view_id", frame.view_id},
                      {"split", frame.is_test ? "test" : "train"},
                      {"rendered", base + "_render.pfm"},
                      {"ground_truth", base + "_gt.pfm"},
                      {"depth", base + "_depth.pfm"},
                      {"camera", base + "_camera.json"}});
  }

  nlohmann::json manifest = {
      {"version", 1},
      {"domain",
       {{"min", {ds.scene.bounds_min.x(), ds.scene.bounds_min.y(), ds.scene.bounds_min.z()}},
        {"max", {ds.scene.bounds_max.x(), ds.scene.bounds_max.y(), ds.scene.bounds_max.z()}}}},
      {"scene", {{"seed", ds.scene.seed}}},
      {"frames", frames},
      {"variation", variation_to_json(ds.variation)}};

  std::ofstream out(dir + "/manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("save_dataset: manifest write failed in " + dir);
}

LoadedDataset load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: invalid manifest: " + std::string(e.what()));
  }

  LoadedDataset ds;
  for (const auto& f : manifest.at("frames")) {
    FrameBundle<double> frame;
    frame.view_id = f.at("view_id").get<std::string>();
    frame.is_test = f.at("split").get<std::string>() == "test";
    frame.rendered = read_pfm(dir + "/" + f.at("rendered").get<std::string>());
    frame.ground_truth = read_pfm(dir + "/" + f.at("ground_truth").get<std::string>());
    frame.depth = read_depth_pfm(dir + "/" + f.at("depth").get<std::string>());
    std::ifstream cam_in(dir + "/" + f.at("camera").get<std::string>());
    if (!cam_in) throw std::runtime_error("load_dataset: missing camera for " + frame.view_id);
    nlohmann::json cam_json;
    cam_in >> cam_json;
    frame.camera = camera_from_json<double>(cam_json);
    frame.validate();
    ds.frames.push_back(std::move(frame));
  }
  if (ds.frames.empty()) throw std::runtime_error("load_dataset: manifest lists no frames");

  if (manifest.contains("domain")) {
    for (int a = 0; a < 3; ++a) {
      ds.domain_min[a] = manifest.at("domain").at("min").at(a).get<double>();
      ds.domain_max[a] = manifest.at("domain").at("max").at(a).get<double>();
    }
  } else {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
    for (const auto& frame : ds.frames)
      for (int r = 0; r < frame.depth.height(); ++r)
        for (int c = 0; c < frame.depth.width(); ++c) {
          if (!frame.depth.valid(r, c)) continue;
          const Vector3<double> p =
              back_project(frame.camera, c + 0.5, r + 0.5, frame.depth.values(r, c));
          lo = lo.cwiseMin(p);
          hi = hi.cwiseMax(p);
        }
    if ((lo.array() > hi.array()).any())
      throw std::runtime_error("load_dataset: no valid depths to infer a domain from");
    const Eigen::Vector3d pad = 0.05 * (hi - lo).cwiseMax(1e-6);
    ds.domain_min = lo - pad;
    ds.domain_max = hi + pad;
  }

  if (manifest.contains("variation"))
    ds.variation = variation_from_json(manifest.at("variation"));
  return ds;
}

}  // namespace apf
