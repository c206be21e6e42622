#include "cellnas/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cellnas/error.hpp"

namespace cellnas {

void sgd_step(ParameterSet& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
              const SgdConfig& cfg) {
    if (grads.size() != params.size()) {
        throw Error(ErrorKind::ShapeMismatch, std::to_string(grads.size()) + " gradients for " +
                                                  std::to_string(params.size()) + " parameter blocks");
    }
    if (state.velocity.empty()) {
        for (const auto& p : params.tensors()) state.velocity.emplace_back(p.shape());
    }
    for (std::size_t b = 0; b < params.size(); ++b) {
        Tensor& w = params[b];
        Tensor& v = state.velocity[b];
        if (!grads[b].same_shape(w) || !v.same_shape(w)) {
            throw Error(ErrorKind::ShapeMismatch, "block " + params.name(b) + ": parameter " + to_string(w.shape()) +
                                                      ", gradient " + to_string(grads[b].shape()));
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = cfg.momentum * v[i] + (grads[b][i] + cfg.weight_decay * w[i]);
            w[i] -= lr * v[i];
        }
    }
    ++state.step;
}

double cosine_lr(std::size_t t, std::size_t total, double base_lr) {
    if (total == 0) throw Error(ErrorKind::InvalidSpec, "cosine schedule needs total >= 1");
    if (t > total) throw Error(ErrorKind::InvalidSpec, "epoch " + std::to_string(t) + " past schedule end");
    const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
    return 0.5 * base_lr * (1.0 + std::cos(phase));
}

}  // namespace cellnas
