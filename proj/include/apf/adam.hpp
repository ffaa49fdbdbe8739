// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "apf/types.hpp"

namespace apf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

/// First/second moment buffers shaped like the parameter block they track.
/// The step index is owned by the caller: all blocks share one global step so
/// lazily updated blocks still use the correct bias correction.
template <typename Mat>
struct AdamMoments {
  Mat m, v;

  void init_like(const Mat& p) {
    m = Mat::Zero(p.rows(), p.cols());
    v = Mat::Zero(p.rows(), p.cols());
  }

  bool initialized() const { return m.size() > 0; }
};

template <typename Mat>
void adam_step(Mat& params, const Mat& grads, AdamMoments<Mat>& state, int step,
               const AdamConfig& cfg) {
  using Scalar = typename Mat::Scalar;
  if (!state.initialized()) state.init_like(params);
  if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  state.m = b1 * state.m + (1 - b1) * grads;
  state.v = (b2 * state.v.array() + (1 - b2) * grads.array().square()).matrix();
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, step));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, step));
  params.array() -= static_cast<Scalar>(cfg.lr) * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + static_cast<Scalar>(cfg.eps));
}

/// Sparse variant for embedding-table columns: only the listed columns move,
/// and their moments decay only on steps where they are touched.
template <typename Scalar>
void adam_step_columns(MatrixX<Scalar>& params, const MatrixX<Scalar>& grads,
                       const std::vector<int>& columns, AdamMoments<MatrixX<Scalar>>& state,
                       int step, const AdamConfig& cfg) {
  if (!state.initialized()) state.init_like(params);
  if (step < 1) throw std::invalid_argument("adam_step_columns: step must be >= 1");
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, step));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, step));
  for (int j : columns) {
    state.m.col(j) = b1 * state.m.col(j) + (1 - b1) * grads.col(j);
    state.v.col(j) =
        (b2 * state.v.col(j).array() + (1 - b2) * grads.col(j).array().square()).matrix();
    params.col(j).array() -= static_cast<Scalar>(cfg.lr) * (state.m.col(j).array() / c1) /
                             ((state.v.col(j).array() / c2).sqrt() +
                              static_cast<Scalar>(cfg.eps));
  }
}

}  // namespace apf
