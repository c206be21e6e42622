#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "cellnas/autodiff.hpp"
#include "cellnas/operation_kind.hpp"

namespace cellnas {

/// Forward rule, backward rule and parameter shapes of one desk-scale
/// operation acting on a [batch, dim] feature matrix.
///
///   linear   : y = relu(x) W + b     W: [dim, dim], b: [dim]
///   identity : y = x
///   zero     : y = 0
struct OperationRule {
    OperationKind kind;
    std::vector<Shape> (*parameter_shapes)(std::size_t dim);
    Tensor (*forward)(const Tensor& x, std::span<const Tensor* const> params);
    /// Accumulates d(loss)/dx and d(loss)/dparams given d(loss)/dy.
    void (*backward)(const Tensor& x, std::span<const Tensor* const> params, const Tensor& grad_out, Tensor& grad_x,
                     std::span<Tensor* const> grad_params);
};

const OperationRule& operation_rule(OperationKind kind) noexcept;

/// Resolves `name` (canonical kind or alias). Throws Error{UnknownOperationKind}.
const OperationRule& operation_rule(std::string_view name);

std::span<const OperationRule> registered_operations() noexcept;

/// Records `rule` applied to x on the tape.
ValueId apply_operation(Tape& tape, const OperationRule& rule, ValueId x, std::span<const ValueId> params);

}  // namespace cellnas
