#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "diffdepth/core/image.hpp"
#include "diffdepth/depth/depth_map.hpp"

namespace diffdepth {

struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0;  // focal lengths, pixels
    double cx = 0.0, cy = 0.0;  // principal point, pixels
};

inline void require_intrinsics(const CameraIntrinsics& k) {
    if (!(k.fx > 0.0 && k.fy > 0.0))
        throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
}

// Colored points in the camera frame: +X right, +Y down, +Z forward.
template <typename T>
struct PointCloud {
    Tensor<T> points;  // N x 3, meters
    Tensor<T> colors;  // N x 3, [0,1]

    std::size_t size() const { return points.size() ? points.dim(0) : 0; }
};

// Pinhole back-projection of each valid depth pixel:
//   X = (u - cx) d / fx,  Y = (v - cy) d / fy,  Z = d
template <typename T>
PointCloud<T> backproject(const DepthMap<T>& depth, const Image<T>& rgb, const CameraIntrinsics& k) {
    require_intrinsics(k);
    require_image(rgb, "backproject");
    if (rgb.dim(0) != depth.height() || rgb.dim(1) != depth.width())
        throw std::invalid_argument("backproject: depth and rgb dims differ");

    const std::size_t n = depth.valid_count();
    PointCloud<T> pc;
    pc.points = Tensor<T>({n, 3});
    pc.colors = Tensor<T>({n, 3});
    std::size_t out = 0;
    const std::size_t w = depth.width();
    for (std::size_t v = 0; v < depth.height(); ++v) {
        for (std::size_t u = 0; u < w; ++u) {
            const std::size_t i = v * w + u;
            if (!depth.valid(i)) continue;
            const double d = static_cast<double>(depth.values[i]);
            if (!(d > 0.0)) throw std::invalid_argument("backproject: non-positive depth inside valid mask");
            pc.points(out, 0) = static_cast<T>((static_cast<double>(u) - k.cx) * d / k.fx);
            pc.points(out, 1) = static_cast<T>((static_cast<double>(v) - k.cy) * d / k.fy);
            pc.points(out, 2) = static_cast<T>(d);
            for (std::size_t c = 0; c < 3; ++c) pc.colors(out, c) = rgb(v, u, c);
            ++out;
        }
    }
    return pc;
}

// ASCII polygon file: float32 x/y/z, 8-bit red/green/blue, one vertex per
// line. Coordinates are printed with 9 significant digits so they reparse to
// the exact float32 values.
template <typename T>
void write_ply(const PointCloud<T>& pc, const std::string& path) {
    if (pc.size() == 0) throw std::invalid_argument("write_ply: empty point cloud");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_ply: cannot open " + path);
    out << "ply\n"
        << "format ascii 1.0\n"
        << "element vertex " << pc.size() << "\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "end_header\n";
    char buf[128];
    for (std::size_t i = 0; i < pc.size(); ++i) {
        const float x = static_cast<float>(pc.points(i, 0));
        const float y = static_cast<float>(pc.points(i, 1));
        const float z = static_cast<float>(pc.points(i, 2));
        int rgb[3];
        for (std::size_t c = 0; c < 3; ++c) {
            double v = static_cast<double>(pc.colors(i, c));
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            rgb[c] = static_cast<int>(std::lround(v * 255.0));
        }
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d\n", x, y, z, rgb[0], rgb[1], rgb[2]);
        out << buf;
    }
    if (!out) throw std::runtime_error("write_ply: write failed for " + path);
}

// Minimal reader for the format written above (colors come back in [0,1]).
template <typename T>
PointCloud<T> read_ply(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_ply: cannot open " + path);
    std::string line;
    std::size_t n = 0;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (line.rfind("element vertex ", 0) == 0) n = std::stoul(line.substr(15));
        if (line == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) throw std::runtime_error("read_ply: malformed header in " + path);
    PointCloud<T> pc;
    pc.points = Tensor<T>({n, 3});
    pc.colors = Tensor<T>({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        float x, y, z;
        int r, g, b;
        if (!(in >> x >> y >> z >> r >> g >> b))
            throw std::runtime_error("read_ply: truncated vertex data in " + path);
        pc.points(i, 0) = static_cast<T>(x);
        pc.points(i, 1) = static_cast<T>(y);
        pc.points(i, 2) = static_cast<T>(z);
        pc.colors(i, 0) = static_cast<T>(r) / T(255);
        pc.colors(i, 1) = static_cast<T>(g) / T(255);
        pc.colors(i, 2) = static_cast<T>(b) / T(255);
    }
    return pc;
}

}  // namespace diffdepth
