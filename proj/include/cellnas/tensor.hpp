#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cellnas {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

/// Dense row-major float64 tensor. Rank 0 (scalar), 1 and 2 are the ranks used
/// by the networks here; nothing prevents higher ranks.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    // 2-D accessors; rank-1 tensors behave as a single row.
    std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
    double& at(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double item() const;

    void fill(double v);
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

/// Ordered, named parameter blocks.
class ParameterSet {
public:
    void add(std::string name, Tensor value);

    std::size_t size() const noexcept { return tensors_.size(); }
    std::size_t scalar_count() const noexcept;

    const std::string& name(std::size_t i) const { return names_.at(i); }
    const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
    Tensor& operator[](std::size_t i) { return tensors_.at(i); }

    std::span<const Tensor> tensors() const noexcept { return tensors_; }
    std::span<Tensor> tensors() noexcept { return tensors_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// Throws Error{ShapeMismatch} unless block names and shapes agree.
    void require_same_layout(const ParameterSet& other) const;

    friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

}  // namespace cellnas
