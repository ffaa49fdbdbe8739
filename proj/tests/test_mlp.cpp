// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "apf/mlp.hpp"
#include "helpers.hpp"

using apf::Activation;
using apf::MatrixX;
using apf::Mlp;
using apf::MlpCache;
using apf::MlpGrads;
using apf::VectorX;

namespace {

MatrixX<double> random_batch(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixX<double> m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = u(rng);
  return m;
}

void randomize_final_layer(Mlp<double>& mlp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  auto& final_layer = mlp.layers.back();
  for (Eigen::Index c = 0; c < final_layer.weights.cols(); ++c)
    for (Eigen::Index r = 0; r < final_layer.weights.rows(); ++r)
      final_layer.weights(r, c) = u(rng);
  for (Eigen::Index i = 0; i < final_layer.bias.size(); ++i) final_layer.bias[i] = u(rng);
}

}  // namespace

TEST_CASE("mlp: zero final layer yields zero output at creation") {
  const Mlp<double> mlp = Mlp<double>::create(6, {16, 8}, 12, 42);
  CHECK(mlp.layers.back().weights.cwiseAbs().maxCoeff() == 0.0);
  CHECK(mlp.layers.back().bias.cwiseAbs().maxCoeff() == 0.0);
  const MatrixX<double> out = apf::mlp_forward(mlp, random_batch(6, 5, 1));
  CHECK(out.rows() == 12);
  CHECK(out.cols() == 5);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp: all-zero parameters produce the zero vector") {
  Mlp<double> mlp = Mlp<double>::create(4, {8}, 12, 3);
  for (auto& layer : mlp.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  const MatrixX<double> out = apf::mlp_forward(mlp, random_batch(4, 3, 2));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp: forward matches an explicit matrix-chain oracle") {
  Mlp<double> mlp = Mlp<double>::create(5, {7, 6}, 3, 11);
  randomize_final_layer(mlp, 12);
  const MatrixX<double> input = random_batch(5, 4, 13);
  const MatrixX<double> got = apf::mlp_forward(mlp, input);

  // Scalar re-implementation with explicit loops.
  MatrixX<double> act = input;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    MatrixX<double> next(layer.weights.rows(), act.cols());
    for (Eigen::Index c = 0; c < act.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        double acc = layer.bias[r];
        for (Eigen::Index k = 0; k < layer.weights.cols(); ++k)
          acc += layer.weights(r, k) * act(k, c);
        if (l + 1 < mlp.layers.size() && acc < 0.0) acc = 0.0;
        next(r, c) = acc;
      }
    act = std::move(next);
  }
  CHECK((got - act).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("mlp: batched forward equals per-column forward") {
  Mlp<double> mlp = Mlp<double>::create(6, {9}, 4, 21);
  randomize_final_layer(mlp, 22);
  const MatrixX<double> input = random_batch(6, 7, 23);
  const MatrixX<double> batched = apf::mlp_forward(mlp, input);
  for (int c = 0; c < 7; ++c) {
    const MatrixX<double> single = apf::mlp_forward(mlp, MatrixX<double>(input.col(c)));
    CHECK((batched.col(c) - single.col(0)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mlp: gradients match finite differences on every parameter") {
  Mlp<double> mlp = Mlp<double>::create(4, {5}, 3, 31);
  randomize_final_layer(mlp, 32);
  MatrixX<double> input = random_batch(4, 3, 33);
  const MatrixX<double> w = random_batch(3, 3, 34);

  const auto objective = [&]() {
    return apf::mlp_forward(mlp, input).cwiseProduct(w).sum();
  };

  MlpCache<double> cache;
  apf::mlp_forward(mlp, input, &cache);
  // Pre-activations stay clear of the relu kink for this seed, which keeps
  // the finite differences valid.
  for (std::size_t l = 0; l + 1 < mlp.layers.size(); ++l)
    REQUIRE(cache.pre[l].cwiseAbs().minCoeff() > 1e-3);

  MlpGrads<double> grads(mlp);
  const MatrixX<double> input_grads = apf::mlp_backward(mlp, cache, w, grads);

  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    auto& layer = mlp.layers[l];
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        const double fd = apftest::central_diff(objective, layer.weights(r, c), 1e-5);
        CHECK(apftest::grad_close(grads.weights[l](r, c), fd, 1e-6));
      }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      const double fd = apftest::central_diff(objective, layer.bias[i], 1e-5);
      CHECK(apftest::grad_close(grads.bias[l][i], fd, 1e-6));
    }
  }
  for (Eigen::Index c = 0; c < input.cols(); ++c)
    for (Eigen::Index r = 0; r < input.rows(); ++r) {
      const double fd = apftest::central_diff(objective, input(r, c), 1e-5);
      CHECK(apftest::grad_close(input_grads(r, c), fd, 1e-6));
    }
}

TEST_CASE("mlp: input gradient under identity activation is the weight chain") {
  Mlp<double> mlp = Mlp<double>::create(4, {6, 5}, 3, 41, Activation::identity);
  randomize_final_layer(mlp, 42);
  const MatrixX<double> input = random_batch(4, 2, 43);
  const MatrixX<double> upstream = random_batch(3, 2, 44);

  MlpCache<double> cache;
  apf::mlp_forward(mlp, input, &cache);
  MlpGrads<double> grads(mlp);
  const MatrixX<double> input_grads = apf::mlp_backward(mlp, cache, upstream, grads);

  const MatrixX<double> chain = mlp.layers[0].weights.transpose() *
                                mlp.layers[1].weights.transpose() *
                                mlp.layers[2].weights.transpose() * upstream;
  CHECK((input_grads - chain).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("mlp: zero upstream gives zero gradients") {
  Mlp<double> mlp = Mlp<double>::create(5, {6}, 4, 51);
  randomize_final_layer(mlp, 52);
  const MatrixX<double> input = random_batch(5, 3, 53);
  MlpCache<double> cache;
  apf::mlp_forward(mlp, input, &cache);
  MlpGrads<double> grads(mlp);
  const MatrixX<double> zero_upstream = MatrixX<double>::Zero(4, 3);
  const MatrixX<double> input_grads = apf::mlp_backward(mlp, cache, zero_upstream, grads);
  CHECK(input_grads.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& gw : grads.weights) CHECK(gw.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& gb : grads.bias) CHECK(gb.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp: creation is seed-deterministic") {
  const Mlp<double> a = Mlp<double>::create(6, {8, 8}, 12, 7);
  const Mlp<double> b = Mlp<double>::create(6, {8, 8}, 12, 7);
  const Mlp<double> c = Mlp<double>::create(6, {8, 8}, 12, 8);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    CHECK((a.layers[i].weights - b.layers[i].weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.layers[0].weights - c.layers[0].weights).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mlp: shape mismatches are rejected") {
  Mlp<double> mlp = Mlp<double>::create(4, {5}, 3, 61);
  CHECK_THROWS_AS(apf::mlp_forward(mlp, random_batch(5, 2, 62)), std::invalid_argument);
  MlpCache<double> stale;  // never filled by a forward pass
  MlpGrads<double> grads(mlp);
  CHECK_THROWS_AS(apf::mlp_backward(mlp, stale, random_batch(3, 2, 63), grads),
                  std::invalid_argument);
}
