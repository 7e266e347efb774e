#include <catch2/catch_amalgamated.hpp>

#include "diffdepth/depth/colormap.hpp"
#include "diffdepth/depth/head.hpp"
#include "diffdepth/pipeline/losses.hpp"
#include "test_util.hpp"

using namespace diffdepth;
using Catch::Approx;

namespace {

FeaturePyramid<double> random_pyramid(const std::vector<std::size_t>& channels, std::size_t top_h,
                                      std::size_t top_w, Rng& rng) {
    FeaturePyramid<double> p;
    for (std::size_t i = 0; i < channels.size(); ++i)
        p.levels.push_back(testutil::random_tensor<double>({channels[i], top_h >> i, top_w >> i}, rng));
    return p;
}

}  // namespace

TEST_CASE("decode_depth restores image resolution across the config matrix") {
    Rng rng(71);
    for (const std::size_t f : {2u, 4u}) {
        for (const std::size_t levels : {2u, 3u}) {
            std::vector<std::size_t> channels;
            for (std::size_t i = 0; i < levels; ++i) channels.push_back(8u << i);
            HeadParams<double> head(channels, f, 8);
            head.init(rng);
            const auto pyr = random_pyramid(channels, 16, 16, rng);
            const auto norm = decode_depth(pyr, head);
            REQUIRE(norm.dim(0) == 16 * f);
            REQUIRE(norm.dim(1) == 16 * f);
            for (double v : norm.data) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
        }
    }
}

TEST_CASE("decode_depth validates the pyramid against its params") {
    Rng rng(72);
    HeadParams<double> head({8, 16}, 4, 8);
    head.init(rng);
    const auto three = random_pyramid({8, 16, 32}, 16, 16, rng);
    REQUIRE_THROWS_AS(decode_depth(three, head), std::invalid_argument);
    const auto wrong_ch = random_pyramid({8, 24}, 16, 16, rng);
    REQUIRE_THROWS_AS(decode_depth(wrong_ch, head), std::invalid_argument);
}

TEST_CASE("depth head gradient matches finite differences") {
    Rng rng(73);
    HeadParams<double> head({6, 12}, 2, 6);
    head.init(rng);
    auto pyr = random_pyramid({6, 12}, 8, 8, rng);
    const Tensor<double> w = testutil::random_tensor<double>({16, 16}, rng);

    auto loss = [&]() {
        const Tensor<double> n = head.forward(pyr);
        double acc = 0;
        for (std::size_t i = 0; i < n.size(); ++i) acc += n[i] * w[i];
        return acc;
    };

    nn::ParamSet<double> ps;
    head.collect_params("head", ps);
    nn::zero_grads(ps);
    head.forward(pyr);
    const auto g_levels = head.backward(w);

    const double h = 1e-5;
    for (auto& p : ps) {
        const std::size_t stride = std::max<std::size_t>(1, p.value->size() / 6);
        for (std::size_t i = 0; i < p.value->size(); i += stride) {
            const double keep = (*p.value)[i];
            (*p.value)[i] = keep + h;
            const double up = loss();
            (*p.value)[i] = keep - h;
            const double dn = loss();
            (*p.value)[i] = keep;
            INFO(p.name << "[" << i << "]");
            REQUIRE(testutil::grad_close((*p.grad)[i], (up - dn) / (2 * h), 1e-4, 1e-8));
        }
    }
    // pyramid input gradients too (feeds the U-Net taps during training)
    for (std::size_t lvl = 0; lvl < 2; ++lvl) {
        Tensor<double>& x = pyr.levels[lvl];
        const std::size_t stride = std::max<std::size_t>(1, x.size() / 8);
        for (std::size_t i = 0; i < x.size(); i += stride) {
            const double keep = x[i];
            x[i] = keep + h;
            const double up = loss();
            x[i] = keep - h;
            const double dn = loss();
            x[i] = keep;
            REQUIRE(testutil::grad_close(g_levels[lvl][i], (up - dn) / (2 * h), 1e-4, 1e-8));
        }
    }
}

TEST_CASE("denormalize_depth endpoints and hand value") {
    Tensor<double> norm({2, 2});
    norm(0, 0) = 0.0;
    norm(0, 1) = 1.0;
    norm(1, 0) = 0.5;
    norm(1, 1) = 0.25;
    const auto d = denormalize_depth(norm, 0.1, 10.0);
    REQUIRE(d.values(0, 0) == Approx(0.1).margin(1e-15));
    REQUIRE(d.values(0, 1) == Approx(10.0).margin(1e-15));
    REQUIRE(d.values(1, 0) == Approx(5.05).margin(1e-12));
    REQUIRE(d.valid_count() == 4);
    REQUIRE_THROWS_AS(denormalize_depth(norm, 10.0, 0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(denormalize_depth(norm, -1.0, 10.0), std::invalid_argument);
}

TEST_CASE("normalize/denormalize is an exact affine bijection") {
    Rng rng(74);
    Tensor<double> norm = testutil::random_tensor<double>({9, 7}, rng, 0.0, 1.0);
    const auto d = denormalize_depth(norm, 0.1, 10.0);
    const auto back = normalize_depth(d);
    for (std::size_t i = 0; i < norm.size(); ++i) REQUIRE(std::abs(back[i] - norm[i]) < 1e-12);
}

TEST_CASE("colorize endpoint and degenerate conventions") {
    DepthMap<double> d;
    d.values = Tensor<double>({1, 3});
    d.values(0, 0) = 2.0;
    d.values(0, 1) = 5.0;
    d.values(0, 2) = 8.0;
    d.valid_mask = {1, 1, 1};

    const auto img = colorize(d);
    // nearest -> table entry 0, farthest -> entry 255
    for (std::size_t c = 0; c < 3; ++c) {
        REQUIRE(img(0, 0, c) == Approx(kViridisTable[0][c] / 255.0).margin(1e-12));
        REQUIRE(img(0, 2, c) == Approx(kViridisTable[255][c] / 255.0).margin(1e-12));
    }

    SECTION("constant depth maps to the table midpoint") {
        DepthMap<double> flat;
        flat.values = Tensor<double>({2, 2}, 3.3);
        flat.valid_mask.assign(4, 1);
        const auto out = colorize(flat);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t c = 0; c < 3; ++c)
                REQUIRE(out(i / 2, i % 2, c) == Approx(kViridisTable[128][c] / 255.0).margin(1e-12));
    }
    SECTION("invalid pixels are black; empty mask rejected") {
        d.valid_mask = {1, 0, 1};
        const auto out = colorize(d);
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(out(0, 1, c) == 0.0);
        DepthMap<double> none;
        none.values = Tensor<double>({1, 1}, 1.0);
        none.valid_mask = {0};
        REQUIRE_THROWS_AS(colorize(none), std::invalid_argument);
    }
}

TEST_CASE("linear ramp yields monotone table indices") {
    DepthMap<double> d;
    const std::size_t w = 64;
    d.values = Tensor<double>({1, w});
    d.valid_mask.assign(w, 1);
    for (std::size_t x = 0; x < w; ++x) d.values(0, x) = 1.0 + 0.1 * static_cast<double>(x);
    const auto img = colorize(d);
    // recover indices by matching table rows; they must be non-decreasing
    int prev = -1;
    for (std::size_t x = 0; x < w; ++x) {
        int idx = -1;
        for (int i = 0; i < 256; ++i) {
            if (img(0, x, 0) == Approx(kViridisTable[i][0] / 255.0).margin(1e-12) &&
                img(0, x, 1) == Approx(kViridisTable[i][1] / 255.0).margin(1e-12) &&
                img(0, x, 2) == Approx(kViridisTable[i][2] / 255.0).margin(1e-12)) {
                idx = i;
                break;
            }
        }
        REQUIRE(idx >= 0);
        REQUIRE(idx >= prev);
        prev = idx;
    }
    REQUIRE(prev == 255);
}

TEST_CASE("silog loss gradient matches finite differences") {
    Rng rng(75);
    Tensor<double> pred = testutil::random_tensor<double>({6, 6}, rng, 0.5, 9.0);
    const Tensor<double> gt = testutil::random_tensor<double>({6, 6}, rng, 0.5, 9.0);
    std::vector<std::uint8_t> mask(36, 1);
    mask[5] = 0;
    mask[17] = 0;

    Tensor<double> grad;
    silog_loss(pred, gt, mask, &grad);
    REQUIRE(grad[5] == 0.0);
    const double h = 1e-6;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double keep = pred[i];
        pred[i] = keep + h;
        const double up = silog_loss(pred, gt, mask);
        pred[i] = keep - h;
        const double dn = silog_loss(pred, gt, mask);
        pred[i] = keep;
        REQUIRE(testutil::grad_close(grad[i], (up - dn) / (2 * h), 1e-5));
    }
}
