// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "apf/types.hpp"

namespace apf {

/// Multi-resolution hashed voxel grids over an axis-aligned world-space box.
///
/// Level l has round(base_resolution * growth_factor^l) cells per axis, so
/// (res + 1) vertices per axis. Levels whose dense vertex count fits in
/// table_size are indexed directly (collision free); finer levels hash.
struct HashGridConfig {
  int levels = 16;
  int features_per_level = 2;
  int table_size = 1 << 19;  // slots per level, power of two
  int base_resolution = 16;
  double growth_factor = std::pow(32.0, 1.0 / 15.0);  // finest level 512 per axis
  Eigen::Vector3d domain_min = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d domain_max = Eigen::Vector3d::Constant(1.0);

  void validate() const {
    if (levels < 1) throw std::invalid_argument("HashGridConfig: levels must be >= 1");
    if (features_per_level < 1)
      throw std::invalid_argument("HashGridConfig: features_per_level must be >= 1");
    if (table_size < 1 || (table_size & (table_size - 1)) != 0)
      throw std::invalid_argument("HashGridConfig: table_size must be a power of two");
    if (base_resolution < 1)
      throw std::invalid_argument("HashGridConfig: base_resolution must be >= 1");
    if (!(growth_factor > 1.0))
      throw std::invalid_argument("HashGridConfig: growth_factor must be > 1");
    if (!(domain_min.array() < domain_max.array()).all())
      throw std::invalid_argument("HashGridConfig: domain_min must be < domain_max");
  }

  int level_resolution(int level) const {
    return std::max(1, static_cast<int>(std::lround(
                           base_resolution * std::pow(growth_factor, level))));
  }

  bool level_is_dense(int level) const {
    const std::int64_t verts = level_resolution(level) + 1;
    return verts * verts * verts <= table_size;
  }

  int level_table_entries(int level) const {
    const std::int64_t verts = level_resolution(level) + 1;
    const std::int64_t dense = verts * verts * verts;
    return static_cast<int>(std::min<std::int64_t>(dense, table_size));
  }

  int feature_length() const { return levels * features_per_level; }
};

/// Derives the growth factor that makes the finest level hit the requested
/// per-axis resolution.
inline double growth_for_finest(int levels, int base_resolution, int finest_resolution) {
  if (levels <= 1) return 2.0;
  return std::pow(static_cast<double>(finest_resolution) / base_resolution,
                  1.0 / (levels - 1));
}

/// Maps an integer vertex coordinate to a table slot. Dense levels index
/// directly; hashed levels use the xor-of-primes spatial hash.
inline int hash_vertex(int level_resolution, const Eigen::Vector3i& v, int table_size) {
  const std::int64_t verts = level_resolution + 1;
  if (verts * verts * verts <= table_size) {
    return static_cast<int>(v.x() + verts * (v.y() + verts * v.z()));
  }
  const std::uint32_t h = static_cast<std::uint32_t>(v.x()) ^
                          (static_cast<std::uint32_t>(v.y()) * 2654435761u) ^
                          (static_cast<std::uint32_t>(v.z()) * 805459861u);
  return static_cast<int>(h & static_cast<std::uint32_t>(table_size - 1));
}

template <typename Scalar>
struct HashGridStack {
  HashGridConfig config;
  // One table per level: features_per_level rows, level_table_entries columns.
  std::vector<MatrixX<Scalar>> tables;

  void init(std::uint64_t seed, Scalar scale = Scalar(1e-4)) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-static_cast<double>(scale),
                                                static_cast<double>(scale));
    tables.resize(config.levels);
    for (int l = 0; l < config.levels; ++l) {
      tables[l].resize(config.features_per_level, config.level_table_entries(l));
      for (Eigen::Index c = 0; c < tables[l].cols(); ++c)
        for (Eigen::Index r = 0; r < tables[l].rows(); ++r)
          tables[l](r, c) = static_cast<Scalar>(dist(rng));
    }
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& t : tables) n += t.size();
    return n;
  }
};

namespace detail {

/// Per-level interpolation stencil: the 8 surrounding vertices, their table
/// slots, trilinear weights, and the scaling from world units to level cells.
template <typename Scalar>
struct LevelStencil {
  std::array<int, 8> slot;
  std::array<Scalar, 8> weight;
  Vector3<Scalar> frac;
  Vector3<Scalar> pos_scale;  // d(level position)/d(world x); zero where clamped
};

template <typename Scalar>
LevelStencil<Scalar> level_stencil(const HashGridConfig& cfg, int level,
                                   const Vector3<Scalar>& x) {
  const int res = cfg.level_resolution(level);
  LevelStencil<Scalar> st;
  Eigen::Vector3i base;
  for (int a = 0; a < 3; ++a) {
    const Scalar lo = static_cast<Scalar>(cfg.domain_min[a]);
    const Scalar hi = static_cast<Scalar>(cfg.domain_max[a]);
    const Scalar extent = hi - lo;
    const Scalar clamped = std::min(hi, std::max(lo, x[a]));
    const Scalar pos = (clamped - lo) / extent * static_cast<Scalar>(res);
    int i0 = static_cast<int>(std::floor(pos));
    i0 = std::min(std::max(i0, 0), res - 1);
    base[a] = i0;
    st.frac[a] = pos - static_cast<Scalar>(i0);
    st.pos_scale[a] = (x[a] > lo && x[a] < hi) ? static_cast<Scalar>(res) / extent : Scalar(0);
  }
  for (int corner = 0; corner < 8; ++corner) {
    Eigen::Vector3i v = base;
    Scalar w = Scalar(1);
    for (int a = 0; a < 3; ++a) {
      if (corner & (1 << a)) {
        v[a] += 1;
        w *= st.frac[a];
      } else {
        w *= Scalar(1) - st.frac[a];
      }
    }
    st.slot[corner] = hash_vertex(res, v, cfg.table_size);
    st.weight[corner] = w;
  }
  return st;
}

}  // namespace detail

/// Interpolated features at a world point, concatenated level by level.
/// Points outside the domain are clamped to its boundary.
template <typename Scalar>
VectorX<Scalar> grid_query(const HashGridStack<Scalar>& grids, const Vector3<Scalar>& x) {
  const HashGridConfig& cfg = grids.config;
  const int F = cfg.features_per_level;
  VectorX<Scalar> out = VectorX<Scalar>::Zero(cfg.feature_length());
  for (int l = 0; l < cfg.levels; ++l) {
    const auto st = detail::level_stencil(cfg, l, x);
    auto seg = out.segment(l * F, F);
    for (int corner = 0; corner < 8; ++corner)
      seg += st.weight[corner] * grids.tables[l].col(st.slot[corner]);
  }
  return out;
}

/// Gradient accumulator for the grid tables. Buffers are dense per level but
/// only the touched slots carry nonzero values; `touched` records them in
/// scatter order so updates and clears stay deterministic.
template <typename Scalar>
struct HashGridGrads {
  std::vector<MatrixX<Scalar>> tables;
  std::vector<std::vector<int>> touched;
  std::vector<std::vector<std::uint8_t>> mark;

  explicit HashGridGrads(const HashGridConfig& cfg) {
    tables.resize(cfg.levels);
    touched.resize(cfg.levels);
    mark.resize(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) {
      tables[l] = MatrixX<Scalar>::Zero(cfg.features_per_level, cfg.level_table_entries(l));
      mark[l].assign(static_cast<std::size_t>(cfg.level_table_entries(l)), 0);
    }
  }

  void add(int level, int slot, const Eigen::Ref<const VectorX<Scalar>>& g) {
    tables[level].col(slot) += g;
    if (!mark[level][static_cast<std::size_t>(slot)]) {
      mark[level][static_cast<std::size_t>(slot)] = 1;
      touched[level].push_back(slot);
    }
  }

  void clear() {
    for (std::size_t l = 0; l < tables.size(); ++l) {
      for (int slot : touched[l]) {
        tables[l].col(slot).setZero();
        mark[l][static_cast<std::size_t>(slot)] = 0;
      }
      touched[l].clear();
    }
  }
};

/// Scatters `upstream` into the table gradients and returns the gradient of
/// the query with respect to the point itself.
template <typename Scalar>
Vector3<Scalar> grid_query_backward(const HashGridStack<Scalar>& grids,
                                    const Vector3<Scalar>& x,
                                    const VectorX<Scalar>& upstream,
                                    HashGridGrads<Scalar>& grads) {
  const HashGridConfig& cfg = grids.config;
  const int F = cfg.features_per_level;
  Vector3<Scalar> dx = Vector3<Scalar>::Zero();
  for (int l = 0; l < cfg.levels; ++l) {
    const auto st = detail::level_stencil(cfg, l, x);
    const auto up = upstream.segment(l * F, F);
    for (int corner = 0; corner < 8; ++corner) {
      grads.add(l, st.slot[corner], st.weight[corner] * up);
      // d(weight)/d(level position), then chain to world units.
      const Scalar dot = up.dot(grids.tables[l].col(st.slot[corner]));
      for (int a = 0; a < 3; ++a) {
        Scalar dw = (corner & (1 << a)) ? Scalar(1) : Scalar(-1);
        for (int b = 0; b < 3; ++b) {
          if (b == a) continue;
          dw *= (corner & (1 << b)) ? st.frac[b] : Scalar(1) - st.frac[b];
        }
        dx[a] += dot * dw * st.pos_scale[a];
      }
    }
  }
  return dx;
}

}  // namespace apf
