#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cellnas/tensor.hpp"

namespace cellnas {

struct SgdConfig {
    double momentum = 0.9;
    double weight_decay = 3e-4;
};

struct OptimizerState {
    std::vector<Tensor> velocity;  // one buffer per parameter block, lazily sized
    std::size_t step = 0;
};

/// Momentum SGD with weight decay folded into the gradient:
///   v <- momentum * v + (g + weight_decay * w)
///   w <- w - lr * v
void sgd_step(ParameterSet& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
              const SgdConfig& cfg);

/// Cosine annealing from base_lr at t = 0 to 0 at t = total.
double cosine_lr(std::size_t t, std::size_t total, double base_lr);

}  // namespace cellnas
