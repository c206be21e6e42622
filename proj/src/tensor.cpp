#include "cellnas/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "cellnas/error.hpp"

namespace cellnas {

std::size_t element_count(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
        throw Error(ErrorKind::ShapeMismatch, std::to_string(values_.size()) + " values for shape " + to_string(shape_));
    }
}

double Tensor::item() const {
    if (values_.size() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on shape " + to_string(shape_));
    return values_[0];
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void ParameterSet::add(std::string name, Tensor value) {
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
}

std::size_t ParameterSet::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

void ParameterSet::require_same_layout(const ParameterSet& other) const {
    if (size() != other.size()) {
        throw Error(ErrorKind::ShapeMismatch, std::to_string(size()) + " vs " + std::to_string(other.size()) + " blocks");
    }
    for (std::size_t i = 0; i < size(); ++i) {
        if (names_[i] != other.names_[i] || tensors_[i].shape() != other.tensors_[i].shape()) {
            throw Error(ErrorKind::ShapeMismatch, "block " + names_[i] + to_string(tensors_[i].shape()) + " vs " +
                                                      other.names_[i] + to_string(other.tensors_[i].shape()));
        }
    }
}

}  // namespace cellnas
