#pragma once

#include <cstdint>
#include <vector>

#include "acpp/common.hpp"

namespace acpp {

// Extents are small ints; rank is at most 4 (NCHW) in this artifact.
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor. Immutable after construction except for gradient
// accumulation. S is float for training, double for gradient verification.
template <typename S>
struct Tensor {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until backward touches this tensor
    bool requires_grad = false;

    Tensor() = default;

    Tensor(Shape shape_, S fill) : shape(std::move(shape_)) {
        data.assign(size_t(shape_numel(shape)), fill);
    }

    Tensor(Shape shape_, std::vector<S> values) : shape(std::move(shape_)), data(std::move(values)) {
        if (shape_numel(shape) != int64_t(data.size())) {
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s), S(0)); }

    int64_t numel() const { return int64_t(data.size()); }
    int rank() const { return int(shape.size()); }

    int extent(int axis) const {
        if (axis < 0 || axis >= rank()) throw ShapeError("tensor: axis out of range");
        return shape[size_t(axis)];
    }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }

    void zero_grad() {
        if (!grad.empty()) grad.assign(data.size(), S(0));
    }
};

template <typename S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
    return a.shape == b.shape;
}

// 90-degree counter-clockwise rotation of the spatial axes of an NCHW
// tensor, k times. Pure index permutation, exact for any payload.
// Convention: out(r, c) = in(c, W-1-r) for k=1; shared with ImageBuffer.
template <typename S>
Tensor<S> rot90_nchw(const Tensor<S>& t, int k);

template <typename S>
Tensor<double> widen(const Tensor<S>& t) {
    Tensor<double> out;
    out.shape = t.shape;
    out.data.assign(t.data.begin(), t.data.end());
    out.requires_grad = t.requires_grad;
    return out;
}

}  // namespace acpp
