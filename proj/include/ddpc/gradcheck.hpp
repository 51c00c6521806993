// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ddpc {

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kFiniteDifferenceStep = 1e-4;

/// |a - f| / max(|a|, |f|, 1e-6)
double relative_error(double analytic, double numeric);

/// Mean logistic binary cross entropy and its gradient (sigmoid(z) - O) / N.
double bce_loss(std::span<const double> logits, std::span<const uint8_t> occupied);
std::vector<double> bce_gradient(std::span<const double> logits, std::span<const uint8_t> occupied);

enum class GradOp {
  kSparseConv,
  kAwiNormalized,  // sum of inverse distances above alpha
  kAwiShrink,      // sum of inverse distances below alpha
  kBce,
  kRate,
  kChain,  // interpolation of a convolution output
};

const char* grad_op_name(GradOp op);
std::vector<GradOp> all_grad_ops();

struct GradBlock {
  std::string name;
  double max_rel_error = 0.0;
  size_t checked = 0;
};

struct GradReport {
  std::string op;
  double max_rel_error = 0.0;
  std::vector<GradBlock> blocks;
  bool pass = true;
  size_t instances = 0;
  uint64_t worst_seed = 0;
  std::vector<uint64_t> failing_seeds;
};

/// One seeded instance. Instances are drawn away from neighbour ties, the
/// alpha boundary and the flat regions of the rate proxy.
GradReport check_gradient(GradOp op, uint64_t seed);

/// `count` instances with seeds base_seed, base_seed + 1, ...; blocks hold the maximum over instances.
GradReport check_gradient_suite(GradOp op, size_t count, uint64_t base_seed);

}  // namespace ddpc
