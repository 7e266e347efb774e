#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "diffdepth/nn/activation.hpp"
#include "diffdepth/nn/adam.hpp"
#include "diffdepth/nn/attention.hpp"
#include "diffdepth/nn/conv.hpp"
#include "diffdepth/nn/linear.hpp"
#include "diffdepth/denoiser/unet.hpp"
#include "test_util.hpp"

using namespace diffdepth;
using Catch::Approx;

namespace {

constexpr double kFdStep = 1e-6;
constexpr double kTol = 1e-6;  // these layers are small; double precision is tight

// Checks every parameter coordinate of `params` against central differences
// of `loss()`. Analytic gradients must already be accumulated.
void check_param_grads(nn::ParamSet<double>& params, const std::function<double()>& loss,
                       double tol = kTol) {
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double keep = (*p.value)[i];
            (*p.value)[i] = keep + kFdStep;
            const double up = loss();
            (*p.value)[i] = keep - kFdStep;
            const double dn = loss();
            (*p.value)[i] = keep;
            const double numeric = (up - dn) / (2 * kFdStep);
            INFO(p.name << "[" << i << "]: analytic " << (*p.grad)[i] << " numeric " << numeric);
            REQUIRE(testutil::grad_close((*p.grad)[i], numeric, tol));
        }
    }
}

void check_input_grads(Tensor<double>& x, const Tensor<double>& gx,
                       const std::function<double()>& loss, double tol = kTol) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + kFdStep;
        const double up = loss();
        x[i] = keep - kFdStep;
        const double dn = loss();
        x[i] = keep;
        const double numeric = (up - dn) / (2 * kFdStep);
        INFO("input[" << i << "]");
        REQUIRE(testutil::grad_close(gx[i], numeric, tol));
    }
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * w[i];
    return acc;
}

}  // namespace

TEST_CASE("linear layer gradients") {
    Rng rng(1);
    nn::Linear<double> fc(5, 7);
    fc.init(rng);
    Tensor<double> x = testutil::random_tensor<double>({7}, rng);
    const Tensor<double> w = testutil::random_tensor<double>({5}, rng);

    nn::ParamSet<double> ps;
    fc.collect_params("fc", ps);
    nn::zero_grads(ps);
    fc.forward(x);
    const Tensor<double> gx = fc.backward(w);

    auto loss = [&] { return weighted_sum(fc.forward(x), w); };
    check_param_grads(ps, loss);
    check_input_grads(x, gx, loss);
}

TEST_CASE("conv2d gradients (stride 1 and stride 2)") {
    Rng rng(2);
    for (const std::size_t stride : {1u, 2u}) {
        nn::Conv2d<double> conv(2, 3, 3, stride, 1);
        conv.init(rng);
        Tensor<double> x = testutil::random_tensor<double>({2, 6, 6}, rng);
        const Tensor<double> y0 = conv.forward(x);
        const Tensor<double> w = testutil::random_tensor<double>(y0.shape, rng);

        nn::ParamSet<double> ps;
        conv.collect_params("conv", ps);
        nn::zero_grads(ps);
        conv.forward(x);
        const Tensor<double> gx = conv.backward(w);

        auto loss = [&] { return weighted_sum(conv.forward(x), w); };
        check_param_grads(ps, loss);
        check_input_grads(x, gx, loss);
    }
}

TEST_CASE("transposed conv gradients") {
    Rng rng(3);
    nn::ConvTranspose2d<double> deconv(3, 2, 2);
    deconv.init(rng);
    Tensor<double> x = testutil::random_tensor<double>({3, 4, 4}, rng);
    const Tensor<double> y0 = deconv.forward(x);
    REQUIRE(y0.dim(1) == 8);
    REQUIRE(y0.dim(2) == 8);
    const Tensor<double> w = testutil::random_tensor<double>(y0.shape, rng);

    nn::ParamSet<double> ps;
    deconv.collect_params("deconv", ps);
    nn::zero_grads(ps);
    deconv.forward(x);
    const Tensor<double> gx = deconv.backward(w);

    auto loss = [&] { return weighted_sum(deconv.forward(x), w); };
    check_param_grads(ps, loss);
    check_input_grads(x, gx, loss);
}

TEST_CASE("activation gradients") {
    Rng rng(4);
    Tensor<double> x = testutil::random_tensor<double>({20}, rng, -3.0, 3.0);
    const Tensor<double> w = testutil::random_tensor<double>({20}, rng);

    SECTION("gelu") {
        nn::Gelu<double> g;
        g.forward(x);
        const Tensor<double> gx = g.backward(w);
        auto loss = [&] { return weighted_sum(g.forward(x), w); };
        check_input_grads(x, gx, loss);
    }
    SECTION("sigmoid") {
        nn::Sigmoid<double> s;
        s.forward(x);
        const Tensor<double> gx = s.backward(w);
        auto loss = [&] { return weighted_sum(s.forward(x), w); };
        check_input_grads(x, gx, loss);
    }
}

TEST_CASE("cross-attention gradients for params, features, and tokens") {
    Rng rng(5);
    nn::CrossAttention<double> attn(4, 6);
    attn.init(rng);
    Tensor<double> x = testutil::random_tensor<double>({4, 3, 3}, rng);
    Tensor<double> tokens = testutil::random_tensor<double>({5, 6}, rng);
    const Tensor<double> w = testutil::random_tensor<double>({4, 3, 3}, rng);

    nn::ParamSet<double> ps;
    attn.collect_params("attn", ps);
    nn::zero_grads(ps);
    attn.forward(x, tokens);
    Tensor<double> g_tokens;
    const Tensor<double> gx = attn.backward(w, g_tokens);

    auto loss = [&] { return weighted_sum(attn.forward(x, tokens), w); };
    check_param_grads(ps, loss);
    check_input_grads(x, gx, loss);
    check_input_grads(tokens, g_tokens, loss);
}

TEST_CASE("res block gradients including the time path") {
    Rng rng(6);
    ResBlock<double> block(3, 5, 8);
    Rng r2 = rng.fork("block");
    block.init(r2);
    Tensor<double> x = testutil::random_tensor<double>({3, 4, 4}, rng);
    Tensor<double> temb = testutil::random_tensor<double>({8}, rng);
    const Tensor<double> w = testutil::random_tensor<double>({5, 4, 4}, rng);

    nn::ParamSet<double> ps;
    block.collect_params("block", ps);
    nn::zero_grads(ps);
    block.forward(x, temb);
    Tensor<double> g_temb({8});
    const Tensor<double> gx = block.backward(w, g_temb);

    auto loss = [&] { return weighted_sum(block.forward(x, temb), w); };
    check_param_grads(ps, loss);
    check_input_grads(x, gx, loss);
    check_input_grads(temb, g_temb, loss);
}

TEST_CASE("adam applies the null update at lr 0 and descends at lr > 0") {
    Rng rng(7);
    nn::Linear<double> fc(3, 3);
    fc.init(rng);
    nn::ParamSet<double> ps;
    fc.collect_params("fc", ps);

    const Tensor<double> before = fc.w;
    nn::zero_grads(ps);
    Tensor<double> x = testutil::random_tensor<double>({3}, rng);
    fc.forward(x);
    Tensor<double> gy({3}, 1.0);
    fc.backward(gy);
    nn::Adam<double> opt0(0.0);
    opt0.step(ps);
    for (std::size_t i = 0; i < before.size(); ++i) REQUIRE(fc.w[i] == before[i]);

    // minimize ||W x||^2 for a fixed x; loss must drop
    nn::Adam<double> opt(1e-2);
    auto loss_value = [&] {
        const Tensor<double> y = fc.forward(x);
        double acc = 0;
        for (double v : y.data) acc += v * v;
        return acc;
    };
    const double l0 = loss_value();
    for (int step = 0; step < 50; ++step) {
        nn::zero_grads(ps);
        const Tensor<double> y = fc.forward(x);
        Tensor<double> g({3});
        for (std::size_t i = 0; i < 3; ++i) g[i] = 2 * y[i];
        fc.backward(g);
        opt.step(ps);
    }
    REQUIRE(loss_value() < l0);
}
