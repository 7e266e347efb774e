#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffdepth/core/image.hpp"

namespace diffdepth::io {

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

// 8-bit RGB PNG -> HxWx3 image in [0,1].
template <typename T>
Image<T> read_png_rgb8(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png_rgb8: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png_rgb8: decode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<std::uint8_t> rows(static_cast<std::size_t>(w) * h * 3);
    std::vector<png_bytep> row_ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image<T> img({h, w, 3});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<T>(rows[i]) / T(255);
    return img;
}

template <typename T>
void write_png_rgb8(const std::string& path, const Image<T>& img) {
    require_image(img, "write_png_rgb8");
    const std::size_t h = img.dim(0), w = img.dim(1);

    std::vector<std::uint8_t> rows(h * w * 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double v = static_cast<double>(img[i]);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        rows[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }

    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png_rgb8: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png_rgb8: encode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> row_ptrs(h);
    for (std::size_t y = 0; y < h; ++y)
        row_ptrs[y] = const_cast<png_bytep>(rows.data() + y * w * 3);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct Gray16 {
    std::size_t width = 0, height = 0;
    std::vector<std::uint16_t> values;  // row-major
};

inline Gray16 read_png_gray16(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png_gray16: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png_gray16: decode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png_gray16: " + path + " is not 16-bit single-channel");
    }
    png_set_swap(png);  // PNG stores 16-bit big-endian
    png_read_update_info(png, info);

    Gray16 out;
    out.width = w;
    out.height = h;
    out.values.resize(static_cast<std::size_t>(w) * h);
    std::vector<png_bytep> row_ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y)
        row_ptrs[y] = reinterpret_cast<png_bytep>(out.values.data() + static_cast<std::size_t>(y) * w);
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

inline void write_png_gray16(const std::string& path, std::size_t width, std::size_t height,
                             const std::vector<std::uint16_t>& values) {
    if (values.size() != width * height)
        throw std::invalid_argument("write_png_gray16: size mismatch");
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png_gray16: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png_gray16: encode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png);
    std::vector<png_bytep> row_ptrs(height);
    for (std::size_t y = 0; y < height; ++y)
        row_ptrs[y] = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(values.data() + y * width));
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace diffdepth::io
