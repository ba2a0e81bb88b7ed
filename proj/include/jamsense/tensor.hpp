// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace jamsense::nn {

/// Dense row-major array of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(count(shape), fill) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != count(shape)) throw ShapeError("Tensor: value count does not match shape");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    /// 2-D accessors; no bounds checking.
    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * shape[1], shape[1]}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * shape[1], shape[1]}; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

inline void expect_shape(const Tensor& t, const std::vector<std::size_t>& s, const char* what) {
    if (t.shape != s)
        throw ShapeError(std::string(what) + ": expected " + shape_string(s) + ", got " + shape_string(t.shape));
}

/// Swaps the two axes of a 2-D tensor.
inline Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
    Tensor y({x.dim(1), x.dim(0)});
    for (std::size_t r = 0; r < x.dim(0); ++r)
        for (std::size_t c = 0; c < x.dim(1); ++c) y.at(c, r) = x.at(r, c);
    return y;
}

}  // namespace jamsense::nn
