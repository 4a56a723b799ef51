#pragma once

#include <cstdint>
#include <vector>

#include "ge/tensor.hpp"

namespace ge {

struct AdamState {
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments

  explicit AdamState(double lr = 0.1) : learning_rate(lr) {}
};

// One bias-corrected ADAM update in place. Moments are allocated on the
// first call and must keep matching shapes afterwards.
void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads);

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr);

}  // namespace ge
