#pragma once

#include <stdexcept>
#include <vector>

#include "diffdepth/core/rng.hpp"
#include "diffdepth/denoiser/unet.hpp"
#include "diffdepth/nn/activation.hpp"
#include "diffdepth/nn/conv.hpp"

namespace diffdepth {

// Upsampling decoder over the feature pyramid: walks from the coarsest level
// to the finest with deconv + skip fusion, deconvs the remaining octaves up
// to image resolution, and regresses depth with two final convolutions
// (sigmoid-bounded to [0,1]).
template <typename T>
struct HeadParams {
    std::vector<std::size_t> level_channels;  // finest first, matches the pyramid
    std::size_t upsample_factor = 4;          // latent -> image octaves (power of two)
    std::size_t width = 16;

    std::vector<nn::ConvTranspose2d<T>> fuse_deconvs;  // coarse -> fine across levels
    std::vector<nn::Conv2d<T>> fuse_convs;
    std::vector<nn::LeakyRelu<T>> fuse_acts;
    std::vector<nn::ConvTranspose2d<T>> up_deconvs;  // latent res -> image res
    std::vector<nn::LeakyRelu<T>> up_acts;
    nn::Conv2d<T> reg1, reg2;  // the two-conv regression head
    nn::LeakyRelu<T> reg_act;
    nn::Sigmoid<T> out_act;

    HeadParams() = default;
    HeadParams(std::vector<std::size_t> channels, std::size_t factor, std::size_t head_width = 16)
        : level_channels(std::move(channels)), upsample_factor(factor), width(head_width) {
        if (level_channels.size() < 2) throw std::invalid_argument("HeadParams: need >= 2 pyramid levels");
        const std::size_t n = level_channels.size();
        for (std::size_t lvl = n - 1; lvl-- > 0;) {
            fuse_deconvs.emplace_back(level_channels[lvl + 1], level_channels[lvl], 2);
            fuse_convs.emplace_back(2 * level_channels[lvl], level_channels[lvl], 3, 1, 1);
        }
        fuse_acts.resize(n - 1);

        std::size_t octaves = 0;
        for (std::size_t v = upsample_factor; v > 1; v >>= 1) {
            if (v % 2) throw std::invalid_argument("HeadParams: factor must be a power of two");
            ++octaves;
        }
        std::size_t ch = level_channels[0];
        for (std::size_t i = 0; i < octaves; ++i) {
            up_deconvs.emplace_back(ch, width, 2);
            ch = width;
        }
        up_acts.resize(octaves);
        reg1 = nn::Conv2d<T>(ch, width, 3, 1, 1);
        reg2 = nn::Conv2d<T>(width, 1, 3, 1, 1);
    }

    void init(Rng& rng) {
        Rng r = rng.fork("depth_head");
        for (auto& d : fuse_deconvs) d.init(r);
        for (auto& c : fuse_convs) c.init(r);
        for (auto& d : up_deconvs) d.init(r);
        reg1.init(r);
        reg2.init(r);
    }

    void collect_params(const std::string& prefix, nn::ParamSet<T>& out) {
        for (std::size_t i = 0; i < fuse_deconvs.size(); ++i) {
            fuse_deconvs[i].collect_params(prefix + ".fuse_deconv" + std::to_string(i), out);
            fuse_convs[i].collect_params(prefix + ".fuse_conv" + std::to_string(i), out);
        }
        for (std::size_t i = 0; i < up_deconvs.size(); ++i)
            up_deconvs[i].collect_params(prefix + ".up_deconv" + std::to_string(i), out);
        reg1.collect_params(prefix + ".reg1", out);
        reg2.collect_params(prefix + ".reg2", out);
    }

    // caches
    std::vector<std::size_t> cache_cat_split;

    Tensor<T> forward(const FeaturePyramid<T>& features) {
        const std::size_t n = level_channels.size();
        cache_cat_split.assign(n - 1, 0);
        Tensor<T> h = features.levels[n - 1];
        for (std::size_t s = 0; s < fuse_deconvs.size(); ++s) {
            const std::size_t lvl = n - 2 - s;
            Tensor<T> up = fuse_deconvs[s].forward(h);
            const Tensor<T>& sk = features.levels[lvl];
            if (up.dim(1) != sk.dim(1) || up.dim(2) != sk.dim(2))
                throw std::invalid_argument("HeadParams: pyramid level size mismatch");
            cache_cat_split[s] = up.dim(0);
            Tensor<T> cat({up.dim(0) + sk.dim(0), up.dim(1), up.dim(2)});
            std::copy(up.data.begin(), up.data.end(), cat.data.begin());
            std::copy(sk.data.begin(), sk.data.end(), cat.data.begin() + up.size());
            h = fuse_acts[s].forward(fuse_convs[s].forward(cat));
        }
        for (std::size_t i = 0; i < up_deconvs.size(); ++i)
            h = up_acts[i].forward(up_deconvs[i].forward(h));
        h = reg_act.forward(reg1.forward(h));
        h = reg2.forward(h);  // (1, H, W)
        h = out_act.forward(h);
        Tensor<T> out({h.dim(1), h.dim(2)});
        out.data = h.data;
        return out;
    }

    // Returns one gradient tensor per pyramid level (finest first).
    std::vector<Tensor<T>> backward(const Tensor<T>& g_norm) {
        Tensor<T> g({std::size_t(1), g_norm.dim(0), g_norm.dim(1)});
        g.data = g_norm.data;
        g = out_act.backward(g);
        g = reg2.backward(g);
        g = reg_act.backward(g);
        g = reg1.backward(g);
        for (std::size_t i = up_deconvs.size(); i-- > 0;)
            g = up_deconvs[i].backward(up_acts[i].backward(g));

        const std::size_t n = level_channels.size();
        std::vector<Tensor<T>> g_levels(n);
        for (std::size_t s = fuse_deconvs.size(); s-- > 0;) {
            const std::size_t lvl = n - 2 - s;
            Tensor<T> gcat = fuse_convs[s].backward(fuse_acts[s].backward(g));
            const std::size_t up_ch = cache_cat_split[s];
            Tensor<T> gup({up_ch, gcat.dim(1), gcat.dim(2)});
            std::copy(gcat.data.begin(), gcat.data.begin() + gup.size(), gup.data.begin());
            Tensor<T> gsk({gcat.dim(0) - up_ch, gcat.dim(1), gcat.dim(2)});
            std::copy(gcat.data.begin() + gup.size(), gcat.data.end(), gsk.data.begin());
            g_levels[lvl] = std::move(gsk);
            g = fuse_deconvs[s].backward(gup);
        }
        g_levels[n - 1] = std::move(g);
        return g_levels;
    }
};

// Normalized depth in [0,1] at image resolution.
template <typename T>
Tensor<T> decode_depth(const FeaturePyramid<T>& features, HeadParams<T>& params) {
    require_pyramid(features, "decode_depth");
    if (features.num_levels() != params.level_channels.size())
        throw std::invalid_argument("decode_depth: pyramid level count mismatch");
    for (std::size_t i = 0; i < features.num_levels(); ++i)
        if (features.levels[i].dim(0) != params.level_channels[i])
            throw std::invalid_argument("decode_depth: pyramid channel mismatch at level " + std::to_string(i));
    return params.forward(features);
}

}  // namespace diffdepth
