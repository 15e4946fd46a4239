#ifndef BIOAUG_TENSOR_HPP
#define BIOAUG_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "bioaug/errors.hpp"

namespace bioaug {

// Dense row-major tensor of 64-bit reals. Rank 0 (scalar) through rank 3 is
// what the networks in this repo use; nothing here caps the rank.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<int> shp, double fill = 0.0) : shape(std::move(shp)) {
        data.assign(numel_of(shape), fill);
    }

    Tensor(std::vector<int> shp, std::vector<double> values) : shape(std::move(shp)), data(std::move(values)) {
        if (data.size() != numel_of(shape))
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data = {v};
        return t;
    }

    static size_t numel_of(const std::vector<int>& shp) {
        size_t n = 1;
        for (int d : shp) {
            if (d < 0) throw ShapeError("tensor: negative dimension in shape " + shape_str(shp));
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shp) {
        std::string s = "[";
        for (size_t i = 0; i < shp.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shp[i]);
        }
        return s + "]";
    }

    size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& at(size_t i) { return data[i]; }
    double at(size_t i) const { return data[i]; }

    // 2-D access
    double& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    // 3-D access
    double& at(int a, int b, int c) {
        return data[(static_cast<size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    double at(int a, int b, int c) const {
        return data[(static_cast<size_t>(a) * shape[1] + b) * shape[2] + c];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Plain gradient-descent update: param -= lr * grad.
inline void sgd_step(Tensor& param, const Tensor& grad, double lr) {
    if (!param.same_shape(grad))
        throw ShapeError("sgd_step: param shape " + Tensor::shape_str(param.shape) +
                         " vs grad shape " + Tensor::shape_str(grad.shape));
    for (size_t i = 0; i < param.data.size(); ++i) param.data[i] -= lr * grad.data[i];
}

}  // namespace bioaug

#endif
