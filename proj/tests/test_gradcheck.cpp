// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ddpc/gradcheck.hpp"

using namespace ddpc;

TEST_CASE("relative error uses the larger magnitude with a floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-3));
}

TEST_CASE("logistic cross entropy gradient is (p - O) / N") {
  const std::vector<double> z{-2.0, 0.0, 1.5};
  const std::vector<uint8_t> o{0, 1, 1};
  const auto g = bce_gradient(z, o);
  for (size_t i = 0; i < z.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    CHECK(g[i] == doctest::Approx((p - o[i]) / 3.0));
  }
  const std::vector<double> half(4, 0.0);
  const std::vector<uint8_t> occ{1, 0, 0, 1};
  CHECK(bce_loss(half, occ) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("every operator passes 100 seeded central-difference instances") {
  for (GradOp op : all_grad_ops()) {
    const auto r = check_gradient_suite(op, 100, 1);
    INFO(std::string(grad_op_name(op)), " max relative error ", r.max_rel_error);
    CHECK(r.pass);
    CHECK(r.instances == 100);
    CHECK(r.max_rel_error <= kGradTolerance);
    CHECK(r.failing_seeds.empty());
    CHECK(!r.blocks.empty());
  }
}

TEST_CASE("single instances are reproducible") {
  for (GradOp op : all_grad_ops()) {
    const auto a = check_gradient(op, 77);
    const auto b = check_gradient(op, 77);
    CHECK(a.max_rel_error == b.max_rel_error);
  }
}
