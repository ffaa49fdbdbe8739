// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "apf/adam.hpp"
#include "apf/appearance.hpp"
#include "apf/camera.hpp"
#include "apf/image.hpp"
#include "apf/losses.hpp"

namespace apf {

struct TrainConfig {
  int total_iters = 2000;
  double lr_grids = 1e-2;       // 0 freezes the hash tables
  double lr_mlp = 1e-3;         // 0 freezes the decoder
  double lr_embeddings = 1e-3;  // 0 freezes the per-view embeddings
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
  std::uint64_t seed = 1;
  int cell_size = 8;
  int threads = 1;
  LossConfig loss;

  void validate() const {
    if (total_iters < 1) throw std::invalid_argument("TrainConfig: total_iters must be >= 1");
    if (lr_grids < 0 || lr_mlp < 0 || lr_embeddings < 0)
      throw std::invalid_argument("TrainConfig: learning rates must be >= 0");
    if (cell_size < 1) throw std::invalid_argument("TrainConfig: cell_size must be >= 1");
    loss.validate();
  }

  AdamConfig adam_for(double lr) const { return AdamConfig{lr, beta1, beta2, eps}; }
};

/// One view's worth of training input: the clean render the transform acts
/// on, its depth and camera, and the appearance-varied reference.
template <typename Scalar>
struct FrameBundle {
  std::string view_id;
  Image<Scalar> rendered;
  Image<Scalar> ground_truth;
  DepthMap<Scalar> depth;
  Camera<Scalar> camera;
  bool is_test = false;

  void validate() const {
    if (!rendered.same_size(ground_truth) || rendered.height() != depth.height() ||
        rendered.width() != depth.width() || camera.height != rendered.height() ||
        camera.width != rendered.width())
      throw std::invalid_argument("FrameBundle: raster dimensions disagree for " + view_id);
    camera.validate();
  }
};

struct LossRow {
  int iter = 0;
  double l1 = 0, dssim = 0, lid = 0, lambda2 = 0, total = 0;
};

struct TrainResult {
  std::vector<LossRow> log;
};

template <typename Scalar>
struct OptimizerState {
  std::vector<AdamMoments<MatrixX<Scalar>>> mlp_weights;
  std::vector<AdamMoments<VectorX<Scalar>>> mlp_bias;
  AdamMoments<MatrixX<Scalar>> embeddings;
  std::vector<AdamMoments<MatrixX<Scalar>>> grid_tables;
  int step = 0;
};

/// Optimizes the model in place. Each iteration processes one frame in a
/// seed-shuffled round-robin order: field build, image transform, loss with
/// the scheduled regularizer weight, full backward, per-group Adam updates
/// (dense for MLP and embeddings, touched-columns-only for the hash tables).
/// Iteration numbering continues from `start_iter` when resuming.
template <typename Scalar>
TrainResult train(AppearanceModel<Scalar>& model, const std::vector<FrameBundle<Scalar>>& frames,
                  const TrainConfig& cfg, int start_iter = 0) {
  cfg.validate();
  if (frames.empty()) throw std::invalid_argument("train: no frames");
  std::vector<int> view_of_frame;
  for (const auto& f : frames) {
    f.validate();
    view_of_frame.push_back(model.view_index(f.view_id));  // throws on missing embedding
  }

  std::vector<int> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);

  OptimizerState<Scalar> state;
  state.mlp_weights.resize(model.mlp.layers.size());
  state.mlp_bias.resize(model.mlp.layers.size());
  state.grid_tables.resize(model.grids.tables.size());
  state.step = start_iter;

  const bool use_grids = model.config.encoding.kind == EncodingKind::xyz;
  MlpGrads<Scalar> mlp_grads(model.mlp);
  HashGridGrads<Scalar> grid_grads(model.config.grid);
  MatrixX<Scalar> embedding_grads(model.embeddings.rows(), model.embeddings.cols());

  TrainResult result;
  double initial_total = -1.0;
  int divergent_streak = 0;

  for (int iter = start_iter; iter < cfg.total_iters; ++iter) {
    const int frame_idx = order[static_cast<size_t>(iter - start_iter) % order.size()];
    const FrameBundle<Scalar>& frame = frames[frame_idx];
    const int view = view_of_frame[frame_idx];

    FieldCache<Scalar> cache;
    const TransformField<Scalar> field =
        build_transform_field(model, frame.depth, frame.camera, view, cfg.cell_size,
                              &frame.rendered, &cache, cfg.threads);
    const Image<Scalar> transformed = transform_image(frame.rendered, field, nullptr, cfg.threads);
    const double lambda2 = lambda2_at(iter, cfg.loss.lambda2);
    const ViewLoss<Scalar> loss =
        view_loss(transformed, frame.ground_truth, field, cfg.loss, lambda2, true);

    if (!std::isfinite(static_cast<double>(loss.total))) {
      std::ostringstream msg;
      msg << "train: non-finite loss at iteration " << iter << " on view " << frame.view_id;
      throw std::runtime_error(msg.str());
    }
    if (initial_total < 0) initial_total = static_cast<double>(loss.total);
    // A zero initial loss has no relative scale: drift from an already
    // perfect fit is not divergence, so the guard arms only when positive.
    if (initial_total > 0.0 && static_cast<double>(loss.total) > 10.0 * initial_total) {
      if (++divergent_streak >= 100) {
        std::ostringstream msg;
        msg << "train: diverged, loss " << loss.total << " > 10x initial " << initial_total
            << " for 100 consecutive iterations ending at " << iter;
        throw std::runtime_error(msg.str());
      }
    } else {
      divergent_streak = 0;
    }

    std::vector<Matrix34<Scalar>> cell_grads =
        transform_image_backward(frame.rendered, field, loss.grad_transformed);
    identity_regularizer_backward(field, static_cast<Scalar>(lambda2), cell_grads);
    mlp_grads.clear();
    grid_grads.clear();
    embedding_grads.setZero();
    field_backward(model, cache, view, cell_grads, mlp_grads,
                   use_grids ? &grid_grads : nullptr, embedding_grads);

    for (const auto& gw : mlp_grads.weights)
      if (!gw.allFinite()) {
        std::ostringstream msg;
        msg << "train: non-finite gradient at iteration " << iter << " on view "
            << frame.view_id;
        throw std::runtime_error(msg.str());
      }

    const int step = ++state.step;
    if (cfg.lr_mlp > 0) {
      const AdamConfig adam_mlp = cfg.adam_for(cfg.lr_mlp);
      for (size_t i = 0; i < model.mlp.layers.size(); ++i) {
        adam_step(model.mlp.layers[i].weights, mlp_grads.weights[i], state.mlp_weights[i], step,
                  adam_mlp);
        adam_step(model.mlp.layers[i].bias, mlp_grads.bias[i], state.mlp_bias[i], step, adam_mlp);
      }
    }
    if (cfg.lr_embeddings > 0)
      adam_step(model.embeddings, embedding_grads, state.embeddings, step,
                cfg.adam_for(cfg.lr_embeddings));
    if (use_grids && cfg.lr_grids > 0) {
      const AdamConfig adam_grids = cfg.adam_for(cfg.lr_grids);
      for (size_t l = 0; l < model.grids.tables.size(); ++l)
        adam_step_columns(model.grids.tables[l], grid_grads.tables[l], grid_grads.touched[l],
                          state.grid_tables[l], step, adam_grids);
    }

    result.log.push_back(LossRow{iter, static_cast<double>(loss.l1),
                                 static_cast<double>(loss.dssim),
                                 static_cast<double>(loss.lid), lambda2,
                                 static_cast<double>(loss.total)});
  }
  return result;
}

}  // namespace apf
