#pragma once

#include <cmath>

#include "diffdepth/core/tensor.hpp"

namespace diffdepth::nn {

// Exact GELU: x * Phi(x) with Phi the standard normal CDF (erf form, not the
// tanh approximation).
inline double gelu(double x) {
    return x * 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
}

inline double gelu_grad(double x) {
    const double phi_cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
    const double phi_pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;
    return phi_cdf + x * phi_pdf;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Elementwise GELU with cached input for the backward pass.
template <typename T>
struct Gelu {
    Tensor<T> cache_x;

    Tensor<T> forward(const Tensor<T>& x) {
        cache_x = x;
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<T>(gelu(static_cast<double>(x[i])));
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) const {
        Tensor<T> gx(gy.shape);
        for (std::size_t i = 0; i < gy.size(); ++i)
            gx[i] = gy[i] * static_cast<T>(gelu_grad(static_cast<double>(cache_x[i])));
        return gx;
    }
};

// Cheap piecewise-linear activation for the large spatial conv stacks; the
// conditioning MLP keeps exact GELU.
template <typename T>
struct LeakyRelu {
    T slope = T(0.01);
    Tensor<T> cache_x;

    Tensor<T> forward(const Tensor<T>& x) {
        cache_x = x;
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{} ? x[i] : slope * x[i];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) const {
        Tensor<T> gx(gy.shape);
        for (std::size_t i = 0; i < gy.size(); ++i)
            gx[i] = cache_x[i] > T{} ? gy[i] : slope * gy[i];
        return gx;
    }
};

template <typename T>
struct Sigmoid {
    Tensor<T> cache_y;

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<T>(sigmoid(static_cast<double>(x[i])));
        cache_y = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) const {
        Tensor<T> gx(gy.shape);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * cache_y[i] * (T(1) - cache_y[i]);
        return gx;
    }
};

}  // namespace diffdepth::nn
