#include "cellnas/registry.hpp"

#include <array>
#include <string>

#include "cellnas/error.hpp"

namespace cellnas {

namespace {

std::vector<Shape> linear_shapes(std::size_t dim) { return {{dim, dim}, {dim}}; }
std::vector<Shape> no_shapes(std::size_t) { return {}; }

Tensor linear_forward(const Tensor& x, std::span<const Tensor* const> params) {
    const Tensor& w = *params[0];
    const Tensor& b = *params[1];
    const std::size_t rows = x.rows(), in = x.cols(), out = w.cols();
    if (w.rows() != in || b.size() != out) {
        throw Error(ErrorKind::ShapeMismatch, "linear: input " + to_string(x.shape()) + ", weight " + to_string(w.shape()));
    }
    Tensor y({rows, out});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < out; ++j) y.at(i, j) = b[j];
        for (std::size_t p = 0; p < in; ++p) {
            const double a = x.at(i, p);
            if (a <= 0.0) continue;
            for (std::size_t j = 0; j < out; ++j) y.at(i, j) += a * w.at(p, j);
        }
    }
    return y;
}

void linear_backward(const Tensor& x, std::span<const Tensor* const> params, const Tensor& g, Tensor& gx,
                     std::span<Tensor* const> gparams) {
    const Tensor& w = *params[0];
    Tensor& gw = *gparams[0];
    Tensor& gb = *gparams[1];
    const std::size_t rows = x.rows(), in = x.cols(), out = w.cols();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < out; ++j) gb[j] += g.at(i, j);
        for (std::size_t p = 0; p < in; ++p) {
            const double a = x.at(i, p);
            if (a <= 0.0) continue;
            double acc = 0.0;
            for (std::size_t j = 0; j < out; ++j) {
                gw.at(p, j) += a * g.at(i, j);
                acc += g.at(i, j) * w.at(p, j);
            }
            gx.at(i, p) += acc;
        }
    }
}

Tensor identity_forward(const Tensor& x, std::span<const Tensor* const>) { return x; }

void identity_backward(const Tensor&, std::span<const Tensor* const>, const Tensor& g, Tensor& gx,
                       std::span<Tensor* const>) {
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
}

Tensor zero_forward(const Tensor& x, std::span<const Tensor* const>) { return Tensor(x.shape()); }

void zero_backward(const Tensor&, std::span<const Tensor* const>, const Tensor&, Tensor&, std::span<Tensor* const>) {}

constexpr std::array<OperationRule, 3> kRules{{
    {OperationKind::Linear, linear_shapes, linear_forward, linear_backward},
    {OperationKind::Identity, no_shapes, identity_forward, identity_backward},
    {OperationKind::Zero, no_shapes, zero_forward, zero_backward},
}};

}  // namespace

const OperationRule& operation_rule(OperationKind kind) noexcept {
    for (const auto& rule : kRules) {
        if (rule.kind == kind) return rule;
    }
    return kRules[1];
}

const OperationRule& operation_rule(std::string_view name) {
    const auto kind = resolve_operation_kind(name);
    if (!kind) throw Error(ErrorKind::UnknownOperationKind, "'" + std::string(name) + "'");
    return operation_rule(*kind);
}

std::span<const OperationRule> registered_operations() noexcept { return kRules; }

ValueId apply_operation(Tape& tape, const OperationRule& rule, ValueId x, std::span<const ValueId> params) {
    std::vector<const Tensor*> p;
    p.reserve(params.size());
    for (ValueId id : params) p.push_back(&tape.value(id));
    const auto expected = rule.parameter_shapes(tape.value(x).cols());
    if (expected.size() != params.size()) {
        throw Error(ErrorKind::ShapeMismatch, std::string(to_string(rule.kind)) + " takes " +
                                                  std::to_string(expected.size()) + " parameter blocks");
    }
    Tensor y = rule.forward(tape.value(x), p);

    std::vector<ValueId> inputs{x};
    inputs.insert(inputs.end(), params.begin(), params.end());
    const OperationRule* r = &rule;
    return tape.push(to_string(rule.kind), std::move(inputs), std::move(y), [r](Tape& t, const Tape::Record& rec) {
        const std::size_t np = rec.inputs.size() - 1;
        std::vector<const Tensor*> values(np);
        std::vector<Tensor*> grads(np);
        for (std::size_t k = 0; k < np; ++k) {
            values[k] = &t.value(rec.inputs[k + 1]);
            grads[k] = &t.grad_buffer(rec.inputs[k + 1]);
        }
        r->backward(t.value(rec.inputs[0]), values, t.grad_buffer(rec.output), t.grad_buffer(rec.inputs[0]), grads);
    });
}

}  // namespace cellnas
