#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffdepth {

// Dense row-major n-d array. Shapes are part of the value; all operations
// that combine tensors require exact shape agreement.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count(shape), T{}) {}
    Tensor(std::vector<std::size_t> s, T fill)
        : shape(std::move(s)), data(count(shape), fill) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    template <typename... Ix>
    T& operator()(Ix... ix) { return data[offset(ix...)]; }
    template <typename... Ix>
    const T& operator()(Ix... ix) const { return data[offset(ix...)]; }

    template <typename... Ix>
    std::size_t offset(Ix... ix) const {
        const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
        std::size_t off = 0;
        for (std::size_t k = 0; k < sizeof...(Ix); ++k) off = off * shape[k] + idx[k];
        return off;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.shape);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const std::string& where) {
    if (!a.same_shape(b)) throw std::invalid_argument(where + ": shape mismatch");
}

inline std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace diffdepth
