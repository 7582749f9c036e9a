#include "gsmo/tensor.hpp"

#include <cmath>
#include <sstream>

namespace gsmo {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, value));
}

float& Tensor::at(std::initializer_list<int> idx) {
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (int i : idx) {
        flat = flat * static_cast<std::size_t>(shape[axis]) + static_cast<std::size_t>(i);
        ++axis;
    }
    return data[flat];
}

float Tensor::at(std::initializer_list<int> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (shape_numel(new_shape) != data.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data);
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (a.shape != b.shape) {
        throw ShapeError(what + ": shape " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
}

} // namespace gsmo
