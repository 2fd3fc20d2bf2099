#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "vista/errors.hpp"

namespace vista {

// Dense row-major tensor. S is float in production; tests instantiate
// double for the finite-difference oracle.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> sh)
        : shape(std::move(sh)), data(numel(shape), S(0)) {}

    static size_t numel(const std::vector<int>& sh) {
        size_t n = 1;
        for (int d : sh) n *= static_cast<size_t>(d);
        return n;
    }

    size_t size() const { return data.size(); }
    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& at(size_t i) { return data[i]; }
    S at(size_t i) const { return data[i]; }

    // 2-D accessors (rows × cols).
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    S* row(int r) { return data.data() + static_cast<size_t>(r) * static_cast<size_t>(cols()); }
    const S* row(int r) const {
        return data.data() + static_cast<size_t>(r) * static_cast<size_t>(cols());
    }

    void zero() { std::fill(data.begin(), data.end(), S(0)); }

    bool finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void check_finite(const std::string& name) const {
        if (!finite()) throw NumericError("non-finite values in array: " + name);
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace vista
