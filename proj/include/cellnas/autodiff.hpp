#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "cellnas/tensor.hpp"

namespace cellnas {

using ValueId = std::size_t;

/// Reverse-mode tape. Values are appended in evaluation order, so the record
/// list is topologically sorted by construction and each value is produced
/// exactly once. Leaves (inputs, parameters, constants) have no record.
class Tape {
public:
    struct Record;
    /// Reads grad(record.output) and accumulates into the inputs' gradients.
    using BackwardRule = std::function<void(Tape&, const Record&)>;

    struct Record {
        std::string_view op;
        std::vector<ValueId> inputs;
        ValueId output = 0;
        BackwardRule backward;
    };

    ValueId leaf(Tensor value);
    ValueId push(std::string_view op, std::vector<ValueId> inputs, Tensor value, BackwardRule backward);

    const Tensor& value(ValueId id) const { return values_.at(id); }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<const Record> records() const noexcept { return records_; }

    /// Gradient accumulated for `id`; an all-zero tensor of the value's shape
    /// when nothing flowed into it.
    Tensor grad(ValueId id) const;

    /// Writable gradient buffer, allocated zeroed on first use.
    Tensor& grad_buffer(ValueId id);

    /// Seeds d(output) = seed and runs the reverse pass.
    /// Throws Error{NoTape} when there is nothing recorded for `output`.
    void backward(ValueId output, const Tensor& seed);
    void backward(ValueId scalar_output) { backward(scalar_output, Tensor::scalar(1.0)); }

    void clear_grads();

private:
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<Record> records_;
};

// Differentiable primitives. Shapes are [rows, cols] unless noted.
namespace ad {

ValueId matmul(Tape& t, ValueId a, ValueId b);              // [r,k] x [k,c]
ValueId add(Tape& t, ValueId a, ValueId b);                 // same shape
ValueId sub(Tape& t, ValueId a, ValueId b);                 // same shape
ValueId scale(Tape& t, ValueId a, double s);
ValueId add_row_bias(Tape& t, ValueId x, ValueId bias);     // [r,c] + [c]
ValueId relu(Tape& t, ValueId x);
ValueId concat_cols(Tape& t, std::span<const ValueId> parts);
ValueId sum(Tape& t, ValueId x);                            // -> scalar
ValueId half_squared_norm(Tape& t, ValueId x);              // 0.5 * sum(x^2) -> scalar
/// Mean softmax cross-entropy over rows of logits [B,C].
ValueId softmax_cross_entropy(Tape& t, ValueId logits, std::span<const std::size_t> labels);

}  // namespace ad

}  // namespace cellnas
