// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "apf/types.hpp"

namespace apf {

enum class Activation { relu, identity };

/// Fully connected decoder with explicit reverse-mode gradients. Hidden
/// layers use `activation`; the output layer is always linear so decoded
/// matrix entries can take either sign.
template <typename Scalar>
struct Mlp {
  struct Layer {
    MatrixX<Scalar> weights;  // out x in
    VectorX<Scalar> bias;
  };

  std::vector<Layer> layers;
  Activation activation = Activation::relu;

  int input_size() const { return static_cast<int>(layers.front().weights.cols()); }
  int output_size() const { return static_cast<int>(layers.back().weights.rows()); }

  /// Hidden layers get uniform fan-in scaled weights; the final layer starts
  /// at exactly zero so the decoder output is zero at initialization.
  static Mlp create(int input, const std::vector<int>& hidden, int output,
                    std::uint64_t seed, Activation act = Activation::relu) {
    Mlp mlp;
    mlp.activation = act;
    std::mt19937_64 rng(seed);
    std::vector<int> sizes;
    sizes.push_back(input);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(output);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      Layer layer;
      layer.weights.resize(sizes[i + 1], sizes[i]);
      layer.bias = VectorX<Scalar>::Zero(sizes[i + 1]);
      const bool final_layer = (i + 2 == sizes.size());
      if (final_layer) {
        layer.weights.setZero();
      } else {
        const double bound = std::sqrt(6.0 / sizes[i]);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
          for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            layer.weights(r, c) = static_cast<Scalar>(dist(rng));
      }
      mlp.layers.push_back(std::move(layer));
    }
    return mlp;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }
};

/// Pre-activations of every layer for one batched forward pass, kept for the
/// backward pass. pre[i] holds layer i's affine output before activation.
template <typename Scalar>
struct MlpCache {
  MatrixX<Scalar> input;                // in x batch
  std::vector<MatrixX<Scalar>> pre;     // one per layer, out_i x batch
};

template <typename Scalar>
struct MlpGrads {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> bias;

  explicit MlpGrads(const Mlp<Scalar>& mlp) {
    for (const auto& l : mlp.layers) {
      weights.push_back(MatrixX<Scalar>::Zero(l.weights.rows(), l.weights.cols()));
      bias.push_back(VectorX<Scalar>::Zero(l.bias.size()));
    }
  }

  void clear() {
    for (auto& w : weights) w.setZero();
    for (auto& b : bias) b.setZero();
  }
};

template <typename Scalar>
MatrixX<Scalar> apply_activation(const Mlp<Scalar>& mlp, const MatrixX<Scalar>& pre) {
  if (mlp.activation == Activation::relu) return pre.cwiseMax(Scalar(0));
  return pre;
}

/// Columns of `input` are independent samples.
template <typename Scalar>
MatrixX<Scalar> mlp_forward(const Mlp<Scalar>& mlp, const MatrixX<Scalar>& input,
                            MlpCache<Scalar>* cache = nullptr) {
  if (input.rows() != mlp.input_size())
    throw std::invalid_argument("mlp_forward: input width mismatch");
  if (cache) {
    cache->input = input;
    cache->pre.clear();
  }
  MatrixX<Scalar> act = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    MatrixX<Scalar> pre = (mlp.layers[i].weights * act).colwise() + mlp.layers[i].bias;
    if (cache) cache->pre.push_back(pre);
    const bool final_layer = (i + 1 == mlp.layers.size());
    act = final_layer ? std::move(pre) : apply_activation(mlp, pre);
  }
  return act;
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the input batch.
template <typename Scalar>
MatrixX<Scalar> mlp_backward(const Mlp<Scalar>& mlp, const MlpCache<Scalar>& cache,
                             const MatrixX<Scalar>& upstream, MlpGrads<Scalar>& grads) {
  const int n_layers = static_cast<int>(mlp.layers.size());
  if (cache.pre.size() != static_cast<std::size_t>(n_layers))
    throw std::invalid_argument("mlp_backward: cache does not match a forward pass");
  MatrixX<Scalar> delta = upstream;  // gradient at layer output (post-activation)
  for (int i = n_layers - 1; i >= 0; --i) {
    if (i + 1 < n_layers && mlp.activation == Activation::relu)
      delta = delta.cwiseProduct(
          (cache.pre[i].array() > Scalar(0)).template cast<Scalar>().matrix());
    const MatrixX<Scalar>& below =
        (i == 0) ? cache.input : apply_activation(mlp, cache.pre[i - 1]);
    grads.weights[i].noalias() += delta * below.transpose();
    grads.bias[i] += delta.rowwise().sum();
    if (i > 0) delta = mlp.layers[i].weights.transpose() * delta;
  }
  return mlp.layers[0].weights.transpose() * delta;
}

}  // namespace apf
