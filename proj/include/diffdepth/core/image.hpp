#pragma once

#include <algorithm>
#include <stdexcept>

#include "diffdepth/core/tensor.hpp"

namespace diffdepth {

// Images are H x W x 3 tensors with entries in [0,1], channel order RGB.
template <typename T>
using Image = Tensor<T>;

template <typename T>
void require_image(const Tensor<T>& img, const std::string& where) {
    if (img.ndim() != 3 || img.dim(2) != 3 || img.dim(0) < 1 || img.dim(1) < 1)
        throw std::invalid_argument(where + ": expected HxWx3 image, got " + shape_string(img.shape));
}

// HWC image -> CHW feature tensor (network-side layout).
template <typename T>
Tensor<T> image_to_chw(const Tensor<T>& img) {
    require_image(img, "image_to_chw");
    const std::size_t h = img.dim(0), w = img.dim(1);
    Tensor<T> out({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) out(c, y, x) = img(y, x, c);
    return out;
}

template <typename T>
Tensor<T> chw_to_image(const Tensor<T>& chw) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) throw std::invalid_argument("chw_to_image: expected 3xHxW");
    const std::size_t h = chw.dim(1), w = chw.dim(2);
    Tensor<T> out({h, w, 3});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) out(y, x, c) = chw(c, y, x);
    return out;
}

// Clamp into [0,1]; returns how many entries were out of range.
template <typename T>
std::size_t clamp01(Tensor<T>& img) {
    std::size_t clamped = 0;
    for (auto& v : img.data) {
        if (v < T(0) || v > T(1)) {
            v = std::clamp(v, T(0), T(1));
            ++clamped;
        }
    }
    return clamped;
}

}  // namespace diffdepth
