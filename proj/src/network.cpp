#include "cellnas/network.hpp"

#include <cmath>

#include "cellnas/error.hpp"

namespace cellnas {

Network::Network(CellGenotype genotype, NetworkConfig cfg) : genotype_(std::move(genotype)), cfg_(cfg) {
    validate(cfg_);
    validate_genotype(genotype_);
    if (genotype_.num_inputs != 2) {
        throw Error(ErrorKind::UnsupportedInputCount, "networks stack two-input cells, genotype has M=" +
                                                          std::to_string(genotype_.num_inputs));
    }
    const std::size_t d = cfg_.dim;
    layout_.push_back({"stem.w", {cfg_.input_dim, d}});
    layout_.push_back({"stem.b", {d}});
    for (const auto& node : genotype_.nodes) {
        std::vector<const OperationRule*> slots;
        for (const auto& edge : node.ops) slots.push_back(&operation_rule(edge.kind));
        rules_.push_back(std::move(slots));
    }
    for (std::size_t k = 0; k < cfg_.layers; ++k) {
        const std::string cell = "cell" + std::to_string(k);
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            for (std::size_t j = 0; j < rules_[i].size(); ++j) {
                const auto shapes = rules_[i][j]->parameter_shapes(d);
                for (std::size_t p = 0; p < shapes.size(); ++p) {
                    layout_.push_back({cell + ".node" + std::to_string(i) + ".op" + std::to_string(j) +
                                           (p == 0 ? ".w" : ".b"),
                                       shapes[p]});
                }
            }
        }
        layout_.push_back({cell + ".proj.w", {genotype_.concat.size() * d, d}});
        layout_.push_back({cell + ".proj.b", {d}});
    }
    layout_.push_back({"head.w", {d, cfg_.num_classes}});
    layout_.push_back({"head.b", {cfg_.num_classes}});
}

ParameterSet Network::init_parameters(Rng& rng) const {
    ParameterSet params;
    for (const auto& [name, shape] : layout_) {
        Tensor t(shape);
        if (shape.size() == 2) {
            const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
            for (double& v : t.values()) v = rng.uniform(-limit, limit);
        }
        params.add(name, std::move(t));
    }
    return params;
}

ValueId Network::forward(Tape& tape, std::span<const ValueId> params, ValueId input) const {
    if (params.size() != layout_.size()) {
        throw Error(ErrorKind::ShapeMismatch, std::to_string(params.size()) + " parameter blocks for a layout of " +
                                                  std::to_string(layout_.size()));
    }
    if (tape.value(input).rank() != 2 || tape.value(input).cols() != cfg_.input_dim) {
        throw Error(ErrorKind::ShapeMismatch, "input " + to_string(tape.value(input).shape()) + ", expected [*," +
                                                  std::to_string(cfg_.input_dim) + "]");
    }
    std::size_t cursor = 0;
    const auto next = [&]() { return params[cursor++]; };

    ValueId stem = ad::matmul(tape, input, next());
    stem = ad::add_row_bias(tape, stem, next());

    ValueId prev_prev = stem;
    ValueId prev = stem;
    for (std::size_t k = 0; k < cfg_.layers; ++k) {
        std::vector<ValueId> nodes{prev_prev, prev};
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            ValueId acc = 0;
            for (std::size_t j = 0; j < rules_[i].size(); ++j) {
                const OperationRule& rule = *rules_[i][j];
                const std::size_t count = rule.parameter_shapes(cfg_.dim).size();
                std::vector<ValueId> op_params;
                for (std::size_t p = 0; p < count; ++p) op_params.push_back(next());
                const ValueId out = apply_operation(tape, rule, nodes[genotype_.nodes[i].ops[j].source], op_params);
                acc = j == 0 ? out : ad::add(tape, acc, out);
            }
            nodes.push_back(acc);
        }
        std::vector<ValueId> parts;
        for (std::size_t c : genotype_.concat) parts.push_back(nodes[c]);
        ValueId h = ad::matmul(tape, ad::concat_cols(tape, parts), next());
        h = ad::add_row_bias(tape, h, next());
        prev_prev = prev;
        prev = h;
    }
    ValueId logits = ad::matmul(tape, prev, next());
    return ad::add_row_bias(tape, logits, next());
}

LossGradient loss_and_gradient(const Network& net, const ParameterSet& params, const Tensor& x,
                               std::span<const std::size_t> labels) {
    Tape tape;
    std::vector<ValueId> ids;
    ids.reserve(params.size());
    for (const auto& t : params.tensors()) ids.push_back(tape.leaf(t));
    const ValueId input = tape.leaf(x);
    const ValueId loss = ad::softmax_cross_entropy(tape, net.forward(tape, ids, input), labels);
    tape.backward(loss);

    LossGradient out;
    out.loss = tape.value(loss).item();
    out.grads.reserve(ids.size());
    for (ValueId id : ids) out.grads.push_back(tape.grad(id));
    return out;
}

Tensor predict(const Network& net, const ParameterSet& params, const Tensor& x) {
    Tape tape;
    std::vector<ValueId> ids;
    ids.reserve(params.size());
    for (const auto& t : params.tensors()) ids.push_back(tape.leaf(t));
    return tape.value(net.forward(tape, ids, tape.leaf(x)));
}

}  // namespace cellnas
