#pragma once

#include <cmath>

#include "diffdepth/core/rng.hpp"
#include "diffdepth/core/tensor.hpp"
#include "diffdepth/nn/param.hpp"

namespace diffdepth::nn {

// Fully connected layer on 1-d vectors: y = W x + b, W is (out x in).
template <typename T>
struct Linear {
    Tensor<T> w, b, gw, gb;
    Tensor<T> cache_x;

    Linear() = default;
    Linear(std::size_t out_dim, std::size_t in_dim)
        : w({out_dim, in_dim}), b({out_dim}), gw({out_dim, in_dim}), gb({out_dim}) {}

    std::size_t out_dim() const { return w.dim(0); }
    std::size_t in_dim() const { return w.dim(1); }

    void init(Rng& rng) {
        const double scale = std::sqrt(2.0 / static_cast<double>(in_dim()));
        for (auto& v : w.data) v = static_cast<T>(rng.normal() * scale);
        b.fill(T{});
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.size() != in_dim()) throw std::invalid_argument("Linear: input size mismatch");
        cache_x = x;
        Tensor<T> y({out_dim()});
        for (std::size_t o = 0; o < out_dim(); ++o) {
            T acc = b[o];
            const T* wrow = &w.data[o * in_dim()];
            for (std::size_t i = 0; i < in_dim(); ++i) acc += wrow[i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx({in_dim()});
        for (std::size_t o = 0; o < out_dim(); ++o) {
            const T g = gy[o];
            gb[o] += g;
            T* gwrow = &gw.data[o * in_dim()];
            const T* wrow = &w.data[o * in_dim()];
            for (std::size_t i = 0; i < in_dim(); ++i) {
                gwrow[i] += g * cache_x[i];
                gx[i] += wrow[i] * g;
            }
        }
        return gx;
    }

    void collect_params(const std::string& prefix, ParamSet<T>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }
};

}  // namespace diffdepth::nn
