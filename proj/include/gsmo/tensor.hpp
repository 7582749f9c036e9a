#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsmo/errors.hpp"

namespace gsmo {

/// Dense n-dimensional float32 array, row-major. Images use N x H x W x C,
/// feature matrices N x F.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<float> data_);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);

    std::size_t numel() const { return data.size(); }
    int dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }
    int rank() const { return static_cast<int>(shape.size()); }

    float& at(std::initializer_list<int> idx);
    float at(std::initializer_list<int> idx) const;

    /// Reshape without copying element order; product of extents must match.
    Tensor reshaped(std::vector<int> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Throws ShapeError mentioning both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

} // namespace gsmo
