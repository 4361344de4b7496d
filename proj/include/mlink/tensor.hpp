#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "mlink/error.hpp"

namespace mlink {

/// Dense row-major tensor of 64-bit floats. Rank 0 is allowed and
/// holds exactly one scalar.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), values(element_count(shape), fill) {}

    Tensor(std::vector<std::size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        require(values.size() == element_count(shape),
                "tensor: value count " + std::to_string(values.size()) +
                    " does not match shape product " + std::to_string(element_count(shape)));
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

    std::size_t size() const { return values.size(); }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    // 2-D accessors; shape must be {rows, cols}.
    double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

    void fill(double v) { std::fill(values.begin(), values.end(), v); }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool operator==(const Tensor& o) const { return shape == o.shape && values == o.values; }
};

}  // namespace mlink
