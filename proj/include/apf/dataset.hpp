// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "apf/synth.hpp"
#include "apf/training.hpp"

namespace apf {

nlohmann::json variation_to_json(const VariationSpec& v);
VariationSpec variation_from_json(const nlohmann::json& j);

/// Writes per-frame PFM/PNG/JSON files plus manifest.json. The manifest is
/// written last so a failed run never leaves one behind.
void save_dataset(const Dataset<double>& ds, const std::string& dir);

struct LoadedDataset {
  std::vector<FrameBundle<double>> frames;
  Eigen::Vector3d domain_min = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d domain_max = Eigen::Vector3d::Constant(1.0);
  VariationSpec variation;  // empty when the manifest carries no record
};

/// Ingestion path: reads any directory laid out like save_dataset's output,
/// whether generated here or converted from an external renderer. When the
/// manifest lacks a world domain, one is recovered from the union of all
/// back-projected valid depths, padded by 5%.
LoadedDataset load_dataset(const std::string& dir);

}  // namespace apf
