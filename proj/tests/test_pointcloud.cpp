#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "diffdepth/pointcloud/pointcloud.hpp"
#include "test_util.hpp"

using namespace diffdepth;
using Catch::Approx;

namespace {

DepthMap<double> flat_depth(std::size_t h, std::size_t w, double d) {
    DepthMap<double> m;
    m.values = Tensor<double>({h, w}, d);
    m.valid_mask.assign(h * w, 1);
    return m;
}

Image<double> gray_image(std::size_t h, std::size_t w, double v) {
    return Image<double>({h, w, 3}, v);
}

}  // namespace

TEST_CASE("principal-point pixel lands on the optical axis") {
    CameraIntrinsics k{100.0, 100.0, 50.0, 50.0};
    auto depth = flat_depth(101, 101, 2.5);
    const auto pc = backproject(depth, gray_image(101, 101, 0.5), k);
    // pixel (u=50, v=50) is index 50*101+50 in scan order
    const std::size_t idx = 50 * 101 + 50;
    REQUIRE(pc.points(idx, 0) == Approx(0.0).margin(0));
    REQUIRE(pc.points(idx, 1) == Approx(0.0).margin(0));
    REQUIRE(pc.points(idx, 2) == Approx(2.5).margin(0));
}

TEST_CASE("hand pinhole evaluation at an off-center pixel") {
    CameraIntrinsics k{100.0, 100.0, 50.0, 50.0};
    auto depth = flat_depth(61, 61, 2.0);
    const auto pc = backproject(depth, gray_image(61, 61, 0.25), k);
    const std::size_t idx = 50 * 61 + 60;  // (u=60, v=50)
    REQUIRE(pc.points(idx, 0) == Approx(0.2).epsilon(1e-15));
    REQUIRE(pc.points(idx, 1) == Approx(0.0).margin(0));
    REQUIRE(pc.points(idx, 2) == Approx(2.0).margin(0));
}

TEST_CASE("reprojection recovers pixel coordinates within 1e-9 over 10^4 pixels") {
    CameraIntrinsics k{321.7, 298.4, 63.1, 48.9};
    Rng rng(31);
    DepthMap<double> depth;
    depth.values = Tensor<double>({100, 100});
    depth.valid_mask.assign(10000, 1);
    for (auto& v : depth.values.data) v = rng.uniform(0.2, 9.5);
    const auto pc = backproject(depth, gray_image(100, 100, 0.7), k);
    REQUIRE(pc.size() == 10000);
    std::size_t i = 0;
    for (std::size_t v = 0; v < 100; ++v) {
        for (std::size_t u = 0; u < 100; ++u, ++i) {
            const double z = pc.points(i, 2);
            REQUIRE(z == Approx(depth.values(v, u)).margin(0));  // Z equals the input depth exactly
            const double up = k.fx * pc.points(i, 0) / z + k.cx;
            const double vp = k.fy * pc.points(i, 1) / z + k.cy;
            REQUIRE(std::abs(up - static_cast<double>(u)) < 1e-9);
            REQUIRE(std::abs(vp - static_cast<double>(v)) < 1e-9);
        }
    }
}

TEST_CASE("invalid pixels are skipped; bad inputs rejected") {
    CameraIntrinsics k{100, 100, 5, 5};
    auto depth = flat_depth(4, 4, 1.0);
    depth.valid_mask[3] = 0;
    depth.valid_mask[7] = 0;
    const auto pc = backproject(depth, gray_image(4, 4, 0.1), k);
    REQUIRE(pc.size() == 14);

    SECTION("dimension mismatch") {
        REQUIRE_THROWS_AS(backproject(depth, gray_image(5, 4, 0.1), k), std::invalid_argument);
    }
    SECTION("non-positive focal length") {
        REQUIRE_THROWS_AS(backproject(depth, gray_image(4, 4, 0.1), CameraIntrinsics{0, 1, 0, 0}),
                          std::invalid_argument);
    }
    SECTION("non-positive depth inside mask") {
        depth.values(0, 0) = 0.0;
        REQUIRE_THROWS_AS(backproject(depth, gray_image(4, 4, 0.1), k), std::invalid_argument);
    }
}

TEST_CASE("single-point PLY layout") {
    PointCloud<double> pc;
    pc.points = Tensor<double>({1, 3});
    pc.points(0, 0) = 0.125;
    pc.points(0, 1) = -2.0;
    pc.points(0, 2) = 3.5;
    pc.colors = Tensor<double>({1, 3});
    pc.colors(0, 0) = 1.0;
    pc.colors(0, 1) = 0.0;
    pc.colors(0, 2) = 0.5;
    const std::string dir = testutil::temp_dir("ply");
    const std::string path = dir + "/one.ply";
    write_ply(pc, path);

    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(content.find("element vertex 1\n") != std::string::npos);
    REQUIRE(content.find("property float x") != std::string::npos);
    REQUIRE(content.find("property uchar red") != std::string::npos);
    // exactly one data line after end_header
    const auto pos = content.find("end_header\n");
    REQUIRE(pos != std::string::npos);
    const std::string body = content.substr(pos + 11);
    REQUIRE(std::count(body.begin(), body.end(), '\n') == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("PLY round-trip: float32-exact coordinates, exact colors") {
    Rng rng(57);
    const std::size_t n = 500;
    PointCloud<double> pc;
    pc.points = Tensor<double>({n, 3});
    pc.colors = Tensor<double>({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            pc.points(i, c) = rng.uniform(-12.0, 12.0);
            pc.colors(i, c) = std::round(rng.uniform(0.0, 1.0) * 255.0) / 255.0;
        }
    }
    const std::string dir = testutil::temp_dir("ply_rt");
    const std::string path = dir + "/cloud.ply";
    write_ply(pc, path);
    const auto back = read_ply<double>(path);
    REQUIRE(back.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            REQUIRE(static_cast<float>(back.points(i, c)) == static_cast<float>(pc.points(i, c)));
            REQUIRE(back.colors(i, c) == Approx(pc.colors(i, c)).margin(1e-12));
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("header count always equals data-line count") {
    for (std::size_t n : {1u, 7u, 33u}) {
        PointCloud<double> pc;
        pc.points = Tensor<double>({n, 3}, 1.0);
        pc.colors = Tensor<double>({n, 3}, 0.5);
        const std::string dir = testutil::temp_dir("ply_cnt");
        const std::string path = dir + "/c.ply";
        write_ply(pc, path);
        std::ifstream in(path);
        std::string line;
        std::size_t declared = 0, lines = 0;
        bool in_body = false;
        while (std::getline(in, line)) {
            if (line.rfind("element vertex ", 0) == 0) declared = std::stoul(line.substr(15));
            else if (line == "end_header") in_body = true;
            else if (in_body && !line.empty()) ++lines;
        }
        REQUIRE(declared == n);
        REQUIRE(lines == n);
        std::filesystem::remove_all(dir);
    }
    PointCloud<double> empty;
    REQUIRE_THROWS_AS(write_ply(empty, "/tmp/should_not_exist.ply"), std::invalid_argument);
}
