// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "apf/appearance.hpp"
#include "apf/dataset.hpp"
#include "apf/synth.hpp"
#include "apf/training.hpp"

namespace apf {

struct DatasetConfig {
  std::string preset = "room";  // room | backdrop | open
  int n_views = 8;
  int width = 128, height = 128;
  double fov_deg = 60.0;
  double orbit_radius = 5.0;
  double bob = 0.5;
  std::vector<int> test_views = {0};
  double global_strength = 0.15;
  std::vector<LocalLight> lights;
};

struct EvalConfig {
  int fit_iters = 500;
  double fit_lr = 1e-2;
};

/// Fully resolved run parameters: config file values with CLI overrides
/// already applied. Every command writes this next to its outputs.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  DatasetConfig dataset;
  AppearanceConfig model;
  int finest_resolution = 512;  // growth factor is derived from this
  TrainConfig train;
  EvalConfig eval;
};

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> cell_size;
  std::optional<int> iters;
  std::optional<std::string> encoding;
};

/// Parses a JSON config file (empty path = all defaults) and applies CLI
/// overrides. Unknown keys anywhere in the file are rejected.
RunConfig load_run_config(const std::string& path, const CliOverrides& overrides);

nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Per-view evaluation under the left/right protocol: the embedding is fitted
/// on the left half, metrics are computed on the right half.
struct EvalRow {
  std::string view_id;
  double psnr = 0, ssim = 0, psnr_cc = 0, ssim_cc = 0;
  double fit_loss = 0;  // final left-half objective, reported separately
};

int cmd_generate(const RunConfig& cfg, const std::string& out_dir);
int cmd_train(const RunConfig& cfg, const std::string& dataset_dir, const std::string& out_dir,
              const std::string& resume_checkpoint = "");
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& dataset_dir, const std::string& out_dir, bool no_appearance);
int cmd_ablate(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& out_dir);

// Shared by cmd_eval, cmd_ablate, and the acceptance suite.
std::vector<EvalRow> evaluate_test_frames(const AppearanceModel<double>* model,
                                          const LoadedDataset& ds, const RunConfig& cfg,
                                          const std::string& image_out_dir = "");

}  // namespace apf
