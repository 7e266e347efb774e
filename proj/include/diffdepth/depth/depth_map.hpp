#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "diffdepth/core/tensor.hpp"
#include "diffdepth/io/png.hpp"

namespace diffdepth {

// Per-pixel metric depth with validity mask and the dataset depth range.
template <typename T>
struct DepthMap {
    Tensor<T> values;                      // H x W, meters
    std::vector<std::uint8_t> valid_mask;  // H*W, nonzero = valid
    double min_depth = 0.1;
    double max_depth = 10.0;

    std::size_t height() const { return values.dim(0); }
    std::size_t width() const { return values.dim(1); }
    bool valid(std::size_t i) const { return valid_mask[i] != 0; }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto v : valid_mask) n += v != 0;
        return n;
    }
};

// Maps a normalized [0,1] array onto the metric depth range; every pixel of
// the result is valid.
template <typename T>
DepthMap<T> denormalize_depth(const Tensor<T>& norm, double min_depth, double max_depth) {
    if (norm.ndim() != 2) throw std::invalid_argument("denormalize_depth: expected HxW input");
    if (!(min_depth > 0.0 && min_depth < max_depth))
        throw std::invalid_argument("denormalize_depth: need 0 < min_depth < max_depth");
    DepthMap<T> out;
    out.values = Tensor<T>(norm.shape);
    out.valid_mask.assign(norm.size(), 1);
    out.min_depth = min_depth;
    out.max_depth = max_depth;
    const T lo = static_cast<T>(min_depth), span = static_cast<T>(max_depth - min_depth);
    for (std::size_t i = 0; i < norm.size(); ++i) out.values[i] = lo + norm[i] * span;
    return out;
}

// Exact affine inverse of denormalize_depth.
template <typename T>
Tensor<T> normalize_depth(const DepthMap<T>& depth) {
    Tensor<T> out(depth.values.shape);
    const T lo = static_cast<T>(depth.min_depth);
    const T span = static_cast<T>(depth.max_depth - depth.min_depth);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (depth.values[i] - lo) / span;
    return out;
}

// 16-bit single-channel export, value = round(meters * scale); raw 0 is the
// invalid sentinel. scale defaults to the NYU convention (1000 per meter).
template <typename T>
void save_depth_png(const std::string& path, const DepthMap<T>& depth, double scale = 1000.0) {
    const std::size_t h = depth.height(), w = depth.width();
    std::vector<std::uint16_t> raw(h * w, 0);
    for (std::size_t i = 0; i < h * w; ++i) {
        if (!depth.valid(i)) continue;
        const long v = std::lround(static_cast<double>(depth.values[i]) * scale);
        raw[i] = static_cast<std::uint16_t>(std::clamp(v, 1l, 65535l));
    }
    io::write_png_gray16(path, w, h, raw);
}

template <typename T>
DepthMap<T> load_depth_png(const std::string& path, double scale, double min_depth, double max_depth) {
    const io::Gray16 raw = io::read_png_gray16(path);
    DepthMap<T> out;
    out.values = Tensor<T>({raw.height, raw.width});
    out.valid_mask.assign(raw.values.size(), 0);
    out.min_depth = min_depth;
    out.max_depth = max_depth;
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        const double meters = static_cast<double>(raw.values[i]) / scale;
        out.values[i] = static_cast<T>(meters);
        out.valid_mask[i] = raw.values[i] > 0 && meters >= min_depth && meters <= max_depth;
    }
    return out;
}

}  // namespace diffdepth
