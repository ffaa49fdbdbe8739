// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "apf/image.hpp"

namespace apf {

/// Color PFM ("PF"), float32, scale -1.0 (little-endian), bottom-up rows.
/// The canonical on-disk image format: float32 payloads round trip exactly.
void write_pfm(const std::string& path, const Image<double>& img);
Image<double> read_pfm(const std::string& path);

/// Grayscale PFM ("Pf") for depth; invalid pixels are stored as -1.
void write_depth_pfm(const std::string& path, const DepthMap<double>& depth);
DepthMap<double> read_depth_pfm(const std::string& path);

/// 8-bit RGB PNG for quick inspection; values are clamped then rounded.
void write_png(const std::string& path, const Image<double>& img);

}  // namespace apf
