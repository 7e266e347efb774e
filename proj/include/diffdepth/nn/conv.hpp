#pragma once

#include <cmath>
#include <stdexcept>

#include "diffdepth/core/rng.hpp"
#include "diffdepth/core/tensor.hpp"
#include "diffdepth/nn/param.hpp"

namespace diffdepth::nn {

// 2-d convolution over CHW tensors. Weight layout (out, in, k, k).
// Loops are arranged so the innermost runs contiguously over the output row
// (axpy/dot form), which keeps the hot path vectorizable.
template <typename T>
struct Conv2d {
    std::size_t in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 1;
    Tensor<T> w, b, gw, gb;
    Tensor<T> cache_x;

    Conv2d() = default;
    Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t s, std::size_t p)
        : in_ch(in_c), out_ch(out_c), kernel(k), stride(s), pad(p),
          w({out_c, in_c, k, k}), b({out_c}), gw({out_c, in_c, k, k}), gb({out_c}) {}

    void init(Rng& rng) {
        const double scale = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
        for (auto& v : w.data) v = static_cast<T>(rng.normal() * scale);
        b.fill(T{});
    }

    std::size_t out_size(std::size_t in) const { return (in + 2 * pad - kernel) / stride + 1; }

    // output range [lo, hi) for which the tap at kernel offset k stays inside
    // the input extent `n`
    void tap_range(std::size_t k, std::size_t n, std::size_t out_n, std::size_t& lo,
                   std::size_t& hi) const {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
        std::ptrdiff_t l = off < 0 ? (-off + static_cast<std::ptrdiff_t>(stride) - 1) /
                                         static_cast<std::ptrdiff_t>(stride)
                                   : 0;
        std::ptrdiff_t h = (static_cast<std::ptrdiff_t>(n) - 1 - off) /
                               static_cast<std::ptrdiff_t>(stride) + 1;
        lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(l, 0));
        hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(h, l, static_cast<std::ptrdiff_t>(out_n)));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.ndim() != 3 || x.dim(0) != in_ch) throw std::invalid_argument("Conv2d: bad input shape");
        cache_x = x;
        const std::size_t h = x.dim(1), wd = x.dim(2);
        const std::size_t ho = out_size(h), wo = out_size(wd);
        Tensor<T> y({out_ch, ho, wo});
        for (std::size_t co = 0; co < out_ch; ++co) {
            T* ybase = &y.data[co * ho * wo];
            for (std::size_t i = 0; i < ho * wo; ++i) ybase[i] = b[co];
            for (std::size_t ci = 0; ci < in_ch; ++ci) {
                const T* xbase = &x.data[ci * h * wd];
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    std::size_t ylo, yhi;
                    tap_range(ky, h, ho, ylo, yhi);
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const T wv = w.data[((co * in_ch + ci) * kernel + ky) * kernel + kx];
                        if (wv == T{}) continue;
                        std::size_t xlo, xhi;
                        tap_range(kx, wd, wo, xlo, xhi);
                        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad);
                        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
                        for (std::size_t yo = ylo; yo < yhi; ++yo) {
                            const T* __restrict__ xrow = xbase + (yo * stride + oy) * wd + ox;
                            T* __restrict__ yrow = ybase + yo * wo;
                            if (stride == 1) {
                                for (std::size_t xo = xlo; xo < xhi; ++xo) yrow[xo] += wv * xrow[xo];
                            } else {
                                for (std::size_t xo = xlo; xo < xhi; ++xo)
                                    yrow[xo] += wv * xrow[xo * stride];
                            }
                        }
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const Tensor<T>& x = cache_x;
        const std::size_t h = x.dim(1), wd = x.dim(2);
        const std::size_t ho = gy.dim(1), wo = gy.dim(2);
        Tensor<T> gx(x.shape);
        for (std::size_t co = 0; co < out_ch; ++co) {
            const T* gybase = &gy.data[co * ho * wo];
            T acc{};
            for (std::size_t i = 0; i < ho * wo; ++i) acc += gybase[i];
            gb[co] += acc;
            for (std::size_t ci = 0; ci < in_ch; ++ci) {
                const T* xbase = &x.data[ci * h * wd];
                T* gxbase = &gx.data[ci * h * wd];
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    std::size_t ylo, yhi;
                    tap_range(ky, h, ho, ylo, yhi);
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        std::size_t xlo, xhi;
                        tap_range(kx, wd, wo, xlo, xhi);
                        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad);
                        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
                        const std::size_t widx = ((co * in_ch + ci) * kernel + ky) * kernel + kx;
                        const T wv = w.data[widx];
                        T gw_acc{};
                        for (std::size_t yo = ylo; yo < yhi; ++yo) {
                            const T* __restrict__ gyrow = gybase + yo * wo;
                            const T* __restrict__ xrow = xbase + (yo * stride + oy) * wd + ox;
                            T* __restrict__ gxrow = gxbase + (yo * stride + oy) * wd + ox;
                            if (stride == 1) {
                                for (std::size_t xo = xlo; xo < xhi; ++xo) {
                                    gw_acc += gyrow[xo] * xrow[xo];
                                    gxrow[xo] += wv * gyrow[xo];
                                }
                            } else {
                                for (std::size_t xo = xlo; xo < xhi; ++xo) {
                                    gw_acc += gyrow[xo] * xrow[xo * stride];
                                    gxrow[xo * stride] += wv * gyrow[xo];
                                }
                            }
                        }
                        gw.data[widx] += gw_acc;
                    }
                }
            }
        }
        return gx;
    }

    void collect_params(const std::string& prefix, ParamSet<T>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }
};

// Transposed convolution with stride == kernel and no padding, so spatial
// dims scale by exactly the stride and output taps never overlap.
// Weight layout (in, out, k, k).
template <typename T>
struct ConvTranspose2d {
    std::size_t in_ch = 0, out_ch = 0, kernel = 2, stride = 2;
    Tensor<T> w, b, gw, gb;
    Tensor<T> cache_x;

    ConvTranspose2d() = default;
    ConvTranspose2d(std::size_t in_c, std::size_t out_c, std::size_t k)
        : in_ch(in_c), out_ch(out_c), kernel(k), stride(k),
          w({in_c, out_c, k, k}), b({out_c}), gw({in_c, out_c, k, k}), gb({out_c}) {}

    void init(Rng& rng) {
        const double scale = std::sqrt(2.0 / static_cast<double>(in_ch));
        for (auto& v : w.data) v = static_cast<T>(rng.normal() * scale);
        b.fill(T{});
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.ndim() != 3 || x.dim(0) != in_ch) throw std::invalid_argument("ConvTranspose2d: bad input shape");
        cache_x = x;
        const std::size_t h = x.dim(1), wd = x.dim(2);
        const std::size_t ho = h * stride, wo = wd * stride;
        Tensor<T> y({out_ch, ho, wo});
        for (std::size_t co = 0; co < out_ch; ++co) {
            T* ybase = &y.data[co * ho * wo];
            for (std::size_t i = 0; i < ho * wo; ++i) ybase[i] = b[co];
            for (std::size_t ci = 0; ci < in_ch; ++ci) {
                const T* xbase = &cache_x.data[ci * h * wd];
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const T wv = w.data[((ci * out_ch + co) * kernel + ky) * kernel + kx];
                        if (wv == T{}) continue;
                        for (std::size_t yi = 0; yi < h; ++yi) {
                            const T* __restrict__ xrow = xbase + yi * wd;
                            T* __restrict__ yrow = ybase + (yi * stride + ky) * wo + kx;
                            for (std::size_t xi = 0; xi < wd; ++xi)
                                yrow[xi * stride] += wv * xrow[xi];
                        }
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const Tensor<T>& x = cache_x;
        const std::size_t h = x.dim(1), wd = x.dim(2);
        const std::size_t ho = h * stride, wo = wd * stride;
        Tensor<T> gx(x.shape);
        for (std::size_t co = 0; co < out_ch; ++co) {
            const T* gybase = &gy.data[co * ho * wo];
            T acc{};
            for (std::size_t i = 0; i < ho * wo; ++i) acc += gybase[i];
            gb[co] += acc;
            for (std::size_t ci = 0; ci < in_ch; ++ci) {
                const T* xbase = &x.data[ci * h * wd];
                T* gxbase = &gx.data[ci * h * wd];
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const std::size_t widx = ((ci * out_ch + co) * kernel + ky) * kernel + kx;
                        const T wv = w.data[widx];
                        T gw_acc{};
                        for (std::size_t yi = 0; yi < h; ++yi) {
                            const T* __restrict__ gyrow = gybase + (yi * stride + ky) * wo + kx;
                            const T* __restrict__ xrow = xbase + yi * wd;
                            T* __restrict__ gxrow = gxbase + yi * wd;
                            for (std::size_t xi = 0; xi < wd; ++xi) {
                                const T g = gyrow[xi * stride];
                                gw_acc += g * xrow[xi];
                                gxrow[xi] += wv * g;
                            }
                        }
                        gw.data[widx] += gw_acc;
                    }
                }
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
