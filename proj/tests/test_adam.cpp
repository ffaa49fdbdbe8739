// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "apf/adam.hpp"

using apf::AdamConfig;
using apf::AdamMoments;
using apf::MatrixX;
using Moments = AdamMoments<MatrixX<double>>;

TEST_CASE("adam: minimizes a quadratic") {
  MatrixX<double> x(1, 1);
  x(0, 0) = 0.0;
  AdamConfig cfg;
  cfg.lr = 1e-1;
  Moments moments;
  for (int step = 1; step <= 500; ++step) {
    MatrixX<double> grad = 2.0 * (x.array() - 3.0).matrix();
    apf::adam_step(x, grad, moments, step, cfg);
  }
  CHECK(std::abs(x(0, 0) - 3.0) < 1e-3);
}

TEST_CASE("adam: first step moves by the learning rate in the gradient direction") {
  MatrixX<double> x(2, 2);
  x << 1.0, -2.0, 0.5, 4.0;
  MatrixX<double> grad(2, 2);
  grad << 10.0, -0.3, 2e-4, 0.0;
  const MatrixX<double> before = x;
  AdamConfig cfg;
  Moments moments;
  apf::adam_step(x, grad, moments, 1, cfg);
  // With bias correction the first update is lr * sign(g) regardless of scale.
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      if (grad(r, c) == 0.0) {
        CHECK(x(r, c) == before(r, c));
      } else {
        const double moved = before(r, c) - x(r, c);
        CHECK(std::abs(moved - cfg.lr * (grad(r, c) > 0 ? 1.0 : -1.0)) < 1e-9);
      }
    }
}

TEST_CASE("adam: zero gradient on fresh state leaves parameters unchanged") {
  MatrixX<double> x(3, 2);
  x.setRandom();
  const MatrixX<double> before = x;
  AdamConfig cfg;
  Moments moments;
  const MatrixX<double> zero = MatrixX<double>::Zero(3, 2);
  apf::adam_step(x, zero, moments, 1, cfg);
  CHECK((x - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: momentum decays toward zero once gradients stop") {
  MatrixX<double> x(1, 1);
  x(0, 0) = 0.0;
  MatrixX<double> grad(1, 1);
  grad(0, 0) = 1.0;
  AdamConfig cfg;
  Moments moments;
  apf::adam_step(x, grad, moments, 1, cfg);
  const double m_after_first = moments.m(0, 0);
  const MatrixX<double> zero = MatrixX<double>::Zero(1, 1);
  apf::adam_step(x, zero, moments, 2, cfg);
  CHECK(std::abs(moments.m(0, 0) - cfg.beta1 * m_after_first) < 1e-15);
  // The parameter keeps drifting while momentum is nonzero.
  const double x_after_two = x(0, 0);
  apf::adam_step(x, zero, moments, 3, cfg);
  CHECK(x(0, 0) != x_after_two);
}

TEST_CASE("adam: sparse column updates match the dense path on touched columns") {
  MatrixX<double> dense(4, 6), sparse(4, 6);
  dense.setRandom();
  sparse = dense;
  AdamConfig cfg;
  Moments dm, sm;

  MatrixX<double> grad = MatrixX<double>::Zero(4, 6);
  grad.col(1).setConstant(0.5);
  grad.col(4) << -0.2, 0.1, 0.7, -0.9;

  apf::adam_step(dense, grad, dm, 1, cfg);
  apf::adam_step_columns(sparse, grad, {1, 4}, sm, 1, cfg);

  CHECK((dense.col(1) - sparse.col(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((dense.col(4) - sparse.col(4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: sparse column updates leave untouched columns bitwise intact") {
  MatrixX<double> x(3, 5);
  x.setRandom();
  const MatrixX<double> before = x;
  MatrixX<double> grad = MatrixX<double>::Zero(3, 5);
  grad.col(2).setConstant(1.0);
  AdamConfig cfg;
  Moments moments;
  apf::adam_step_columns(x, grad, {2}, moments, 1, cfg);
  for (int c : {0, 1, 3, 4})
    CHECK((x.col(c) - before.col(c)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((x.col(2) - before.col(2)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("adam: repeated sparse steps track a dense run on the touched column") {
  // A column updated on steps 1..5 with the same gradients must match a dense
  // run, since bias correction uses the shared global step.
  MatrixX<double> dense(2, 3), sparse(2, 3);
  dense.setRandom();
  sparse = dense;
  AdamConfig cfg;
  Moments dm, sm;
  for (int step = 1; step <= 5; ++step) {
    MatrixX<double> grad = MatrixX<double>::Zero(2, 3);
    grad.col(0) << 0.1 * step, -0.2 * step;
    apf::adam_step(dense, grad, dm, step, cfg);
    apf::adam_step_columns(sparse, grad, {0}, sm, step, cfg);
  }
  CHECK((dense.col(0) - sparse.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: rejects non-positive step numbers") {
  MatrixX<double> x(1, 1);
  x.setZero();
  MatrixX<double> grad(1, 1);
  grad.setZero();
  AdamConfig cfg;
  Moments moments;
  CHECK_THROWS_AS(apf::adam_step(x, grad, moments, 0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(apf::adam_step_columns(x, grad, {0}, moments, -1, cfg),
                  std::invalid_argument);
}
