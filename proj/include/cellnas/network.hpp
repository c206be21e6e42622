#pragma once

#include <span>
#include <vector>

#include "cellnas/autodiff.hpp"
#include "cellnas/cell_graph.hpp"
#include "cellnas/network_config.hpp"
#include "cellnas/registry.hpp"
#include "cellnas/rng.hpp"
#include "cellnas/tensor.hpp"

namespace cellnas {

/// A classifier built by stacking one cell genotype `layers` times.
///
///   stem:  s = x Ws + bs                                 [input_dim -> dim]
///   cell k: input nodes (h[k-2], h[k-1]), stem output standing in for
///          missing predecessors; intermediate node = sum of its two
///          transformed sources; h[k] = concat(concat nodes) Wp + bp
///   head:  logits = h[L-1] Wh + bh                        [dim -> classes]
///
/// Only two-input cells are supported (Error{UnsupportedInputCount}).
class Network {
public:
    Network(CellGenotype genotype, NetworkConfig cfg);

    const CellGenotype& genotype() const noexcept { return genotype_; }
    const NetworkConfig& config() const noexcept { return cfg_; }

    /// Block names and shapes, in ParameterSet order.
    const std::vector<std::pair<std::string, Shape>>& layout() const noexcept { return layout_; }

    /// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
    ParameterSet init_parameters(Rng& rng) const;

    /// Records the forward pass; `params` are tape ids in layout order.
    /// Returns the logits [batch, classes].
    ValueId forward(Tape& tape, std::span<const ValueId> params, ValueId input) const;

private:
    CellGenotype genotype_;
    NetworkConfig cfg_;
    std::vector<std::vector<const OperationRule*>> rules_;  // per node, per slot
    std::vector<std::pair<std::string, Shape>> layout_;
};

struct LossGradient {
    double loss = 0.0;
    std::vector<Tensor> grads;  // layout order
};

/// Mean cross-entropy of `x` rows against `labels`, with parameter gradients.
LossGradient loss_and_gradient(const Network& net, const ParameterSet& params, const Tensor& x,
                               std::span<const std::size_t> labels);

/// Logits without gradient bookkeeping beyond the tape itself.
Tensor predict(const Network& net, const ParameterSet& params, const Tensor& x);

}  // namespace cellnas
