#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace har {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles, rank 1 to 3, with an optional gradient
/// buffer of the same size.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::vector<double>& data() noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
    double& at(std::size_t a, std::size_t b, std::size_t c) {
        return values_[(a * shape_[1] + b) * shape_[2] + c];
    }
    double at(std::size_t a, std::size_t b, std::size_t c) const {
        return values_[(a * shape_[1] + b) * shape_[2] + c];
    }

    /// Row `r` of a rank-2 tensor.
    std::span<double> row(std::size_t r) { return {values_.data() + r * shape_[1], shape_[1]}; }
    std::span<const double> row(std::size_t r) const {
        return {values_.data() + r * shape_[1], shape_[1]};
    }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::vector<double>& grad() { return grad_.value(); }
    const std::vector<double>& grad() const { return grad_.value(); }
    /// Allocates (or resets) the gradient buffer to zeros.
    void zero_grad();
    void drop_grad() noexcept { grad_.reset(); }

    /// Same shape and values; gradients are ignored.
    bool same_values(const Tensor& other) const noexcept;
    bool all_finite() const noexcept;

    Tensor reshaped(Shape shape) const;

private:
    Shape shape_;
    std::vector<double> values_;
    std::optional<std::vector<double>> grad_;
};

}  // namespace har
