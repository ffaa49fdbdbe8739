// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "apf/appearance.hpp"

namespace apf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blocks are written as raw little-endian doubles");

inline nlohmann::json grid_config_to_json(const HashGridConfig& g) {
  return {{"levels", g.levels},
          {"features_per_level", g.features_per_level},
          {"table_size", g.table_size},
          {"base_resolution", g.base_resolution},
          {"growth_factor", g.growth_factor},
          {"domain_min", {g.domain_min.x(), g.domain_min.y(), g.domain_min.z()}},
          {"domain_max", {g.domain_max.x(), g.domain_max.y(), g.domain_max.z()}}};
}

inline HashGridConfig grid_config_from_json(const nlohmann::json& j) {
  HashGridConfig g;
  g.levels = j.at("levels").get<int>();
  g.features_per_level = j.at("features_per_level").get<int>();
  g.table_size = j.at("table_size").get<int>();
  g.base_resolution = j.at("base_resolution").get<int>();
  g.growth_factor = j.at("growth_factor").get<double>();
  for (int a = 0; a < 3; ++a) {
    g.domain_min[a] = j.at("domain_min").at(a).get<double>();
    g.domain_max[a] = j.at("domain_max").at(a).get<double>();
  }
  g.validate();
  return g;
}

inline nlohmann::json appearance_config_to_json(const AppearanceConfig& c) {
  return {{"grid", grid_config_to_json(c.grid)},
          {"mlp_hidden", c.mlp_hidden},
          {"embedding_dim", c.embedding_dim},
          {"encoding",
           {{"kind", to_string(c.encoding.kind)},
            {"pe_frequencies", c.encoding.pe_frequencies},
            {"depth_scale", c.encoding.depth_scale}}}};
}

inline AppearanceConfig appearance_config_from_json(const nlohmann::json& j) {
  AppearanceConfig c;
  c.grid = grid_config_from_json(j.at("grid"));
  c.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  const auto& e = j.at("encoding");
  c.encoding.kind = encoding_kind_from_string(e.at("kind").get<std::string>());
  c.encoding.pe_frequencies = e.at("pe_frequencies").get<int>();
  c.encoding.depth_scale = e.at("depth_scale").get<double>();
  c.validate();
  return c;
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'A', 'P', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr int kCheckpointVersion = 1;

template <typename Scalar>
void append_block(nlohmann::json& blocks, std::string& payload, const std::string& name,
                  const MatrixX<Scalar>& m) {
  blocks.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  payload.append(reinterpret_cast<const char*>(m.data()), sizeof(Scalar) * m.size());
}

template <typename Scalar>
MatrixX<Scalar> read_block(const std::string& bytes, size_t& offset, const nlohmann::json& desc) {
  const auto rows = desc.at("rows").get<Eigen::Index>();
  const auto cols = desc.at("cols").get<Eigen::Index>();
  const size_t n = sizeof(Scalar) * static_cast<size_t>(rows) * static_cast<size_t>(cols);
  if (offset + n > bytes.size())
    throw std::runtime_error("checkpoint: truncated block " + desc.at("name").get<std::string>());
  MatrixX<Scalar> m(rows, cols);
  std::memcpy(m.data(), bytes.data() + offset, n);
  offset += n;
  return m;
}

}  // namespace detail

/// Single-file container: 8-byte magic, little-endian u64 header length, JSON
/// header (config, view ids, iteration, block table), then raw column-major
/// double blocks in header order. Round trips are bitwise exact.
template <typename Scalar>
void save_checkpoint(const AppearanceModel<Scalar>& model, int iter, const std::string& path) {
  static_assert(sizeof(Scalar) == 8, "checkpoints store 64-bit scalars");
  nlohmann::json blocks = nlohmann::json::array();
  std::string payload;
  if (model.config.encoding.kind == EncodingKind::xyz)
    for (size_t l = 0; l < model.grids.tables.size(); ++l)
      detail::append_block(blocks, payload, "grid_" + std::to_string(l),
                           model.grids.tables[l]);
  for (size_t i = 0; i < model.mlp.layers.size(); ++i) {
    detail::append_block(blocks, payload, "mlp_w" + std::to_string(i),
                         model.mlp.layers[i].weights);
    const MatrixX<Scalar> b = model.mlp.layers[i].bias;
    detail::append_block(blocks, payload, "mlp_b" + std::to_string(i), b);
  }
  detail::append_block(blocks, payload, "embeddings", model.embeddings);

  nlohmann::json header = {{"version", detail::kCheckpointVersion},
                           {"scalar", "f64"},
                           {"iter", iter},
                           {"config", appearance_config_to_json(model.config)},
                           {"view_ids", model.view_ids},
                           {"blocks", blocks}};
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  const std::uint64_t len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename Scalar>
struct LoadedCheckpoint {
  AppearanceModel<Scalar> model;
  int iter = 0;
};

template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::string& path) {
  static_assert(sizeof(Scalar) == 8, "checkpoints store 64-bit scalars");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(detail::kCheckpointMagic) + sizeof(std::uint64_t))
    throw std::runtime_error("checkpoint: file too short: " + path);
  if (std::memcmp(bytes.data(), detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + sizeof(detail::kCheckpointMagic), sizeof(header_len));
  size_t offset = sizeof(detail::kCheckpointMagic) + sizeof(std::uint64_t);
  if (offset + header_len > bytes.size())
    throw std::runtime_error("checkpoint: truncated header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(offset, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: invalid header: " + std::string(e.what()));
  }
  offset += header_len;
  if (header.at("version").get<int>() != detail::kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             header.at("version").dump());
  if (header.at("scalar").get<std::string>() != "f64")
    throw std::runtime_error("checkpoint: unsupported scalar type");

  LoadedCheckpoint<Scalar> loaded;
  loaded.iter = header.at("iter").get<int>();
  AppearanceModel<Scalar>& model = loaded.model;
  model.config = appearance_config_from_json(header.at("config"));
  model.view_ids = header.at("view_ids").get<std::vector<std::string>>();
  model.grids.config = model.config.grid;

  size_t bi = 0;
  const auto& blocks = header.at("blocks");
  const auto next_block = [&](const std::string& expect) -> MatrixX<Scalar> {
    if (bi >= blocks.size()) throw std::runtime_error("checkpoint: missing block " + expect);
    const auto& desc = blocks.at(bi++);
    if (desc.at("name").get<std::string>() != expect)
      throw std::runtime_error("checkpoint: expected block " + expect + ", found " +
                               desc.at("name").get<std::string>());
    return detail::read_block<Scalar>(bytes, offset, desc);
  };

  if (model.config.encoding.kind == EncodingKind::xyz) {
    model.grids.tables.resize(model.config.grid.levels);
    for (int l = 0; l < model.config.grid.levels; ++l)
      model.grids.tables[l] = next_block("grid_" + std::to_string(l));
  }
  model.mlp.activation = Activation::relu;
  const size_t n_layers = model.config.mlp_hidden.size() + 1;
  model.mlp.layers.resize(n_layers);
  for (size_t i = 0; i < n_layers; ++i) {
    model.mlp.layers[i].weights = next_block("mlp_w" + std::to_string(i));
    model.mlp.layers[i].bias = next_block("mlp_b" + std::to_string(i));
  }
  model.embeddings = next_block("embeddings");
  if (bi != blocks.size()) throw std::runtime_error("checkpoint: unexpected extra blocks");
  if (offset != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes: " + path);

  if (model.embeddings.cols() != static_cast<Eigen::Index>(model.view_ids.size()) ||
      model.embeddings.rows() != model.config.embedding_dim)
    throw std::runtime_error("checkpoint: embedding table shape mismatch");
  if (model.mlp.input_size() != model.config.feature_length() || model.mlp.output_size() != 12)
    throw std::runtime_error("checkpoint: decoder shape mismatch");
  return loaded;
}

}  // namespace apf
