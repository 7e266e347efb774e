#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffdepth/core/rng.hpp"
#include "diffdepth/core/tensor.hpp"
#include "diffdepth/denoiser/autoencoder.hpp"
#include "diffdepth/diffusion/schedule.hpp"
#include "diffdepth/embedding/embedding.hpp"
#include "diffdepth/nn/activation.hpp"
#include "diffdepth/nn/attention.hpp"
#include "diffdepth/nn/conv.hpp"
#include "diffdepth/nn/linear.hpp"

namespace diffdepth {

// Ordered list of decoder feature maps, finest resolution first, spatial dims
// halving level to level.
template <typename T>
struct FeaturePyramid {
    std::vector<Tensor<T>> levels;

    std::size_t num_levels() const { return levels.size(); }
};

template <typename T>
void require_pyramid(const FeaturePyramid<T>& p, const std::string& where) {
    if (p.levels.size() < 2) throw std::invalid_argument(where + ": pyramid needs >= 2 levels");
    for (std::size_t i = 1; i < p.levels.size(); ++i) {
        if (p.levels[i].dim(1) * 2 != p.levels[i - 1].dim(1) ||
            p.levels[i].dim(2) * 2 != p.levels[i - 1].dim(2))
            throw std::invalid_argument(where + ": pyramid resolutions must halve level to level");
    }
}

// Sinusoidal features of the integer timestep.
template <typename T>
Tensor<T> timestep_features(int t, std::size_t dim) {
    Tensor<T> out({dim});
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / denom);
        const double arg = static_cast<double>(t) * freq;
        out[k] = static_cast<T>(std::sin(arg));
        out[half + k] = static_cast<T>(std::cos(arg));
    }
    return out;
}

// Conv block with additive timestep conditioning and a residual connection.
template <typename T>
struct ResBlock {
    std::size_t in_ch = 0, out_ch = 0;
    nn::Conv2d<T> conv1, conv2, skip;
    nn::Linear<T> time_proj;
    nn::LeakyRelu<T> act1, act2;
    bool has_skip = false;
    Tensor<T> cache_x;

    ResBlock() = default;
    ResBlock(std::size_t in_c, std::size_t out_c, std::size_t time_dim)
        : in_ch(in_c), out_ch(out_c),
          conv1(in_c, out_c, 3, 1, 1), conv2(out_c, out_c, 3, 1, 1),
          time_proj(out_c, time_dim), has_skip(in_c != out_c) {
        if (has_skip) skip = nn::Conv2d<T>(in_c, out_c, 1, 1, 0);
    }

    void init(Rng& rng) {
        conv1.init(rng);
        conv2.init(rng);
        time_proj.init(rng);
        if (has_skip) skip.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& temb) {
        cache_x = x;
        Tensor<T> h = conv1.forward(x);
        const Tensor<T> tp = time_proj.forward(temb);
        const std::size_t hw = h.dim(1) * h.dim(2);
        for (std::size_t c = 0; c < out_ch; ++c)
            for (std::size_t i = 0; i < hw; ++i) h.data[c * hw + i] += tp[c];
        h = act1.forward(h);
        h = conv2.forward(h);
        h = act2.forward(h);
        Tensor<T> s = has_skip ? skip.forward(cache_x) : cache_x;
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += s[i];
        return h;
    }

    Tensor<T> backward(const Tensor<T>& gy, Tensor<T>& g_temb) {
        Tensor<T> gh = act2.backward(gy);
        gh = conv2.backward(gh);
        gh = act1.backward(gh);
        const std::size_t hw = gh.dim(1) * gh.dim(2);
        Tensor<T> gtp({out_ch});
        for (std::size_t c = 0; c < out_ch; ++c) {
            T acc{};
            for (std::size_t i = 0; i < hw; ++i) acc += gh.data[c * hw + i];
            gtp[c] = acc;
        }
        const Tensor<T> gt = time_proj.backward(gtp);
        for (std::size_t i = 0; i < gt.size(); ++i) g_temb[i] += gt[i];
        Tensor<T> gx = conv1.backward(gh);
        if (has_skip) {
            const Tensor<T> gs = skip.backward(gy);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gs[i];
        } else {
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
        }
        return gx;
    }

    void collect_params(const std::string& prefix, nn::ParamSet<T>& out) {
        conv1.collect_params(prefix + ".conv1", out);
        conv2.collect_params(prefix + ".conv2", out);
        time_proj.collect_params(prefix + ".time_proj", out);
        if (has_skip) skip.collect_params(prefix + ".skip", out);
    }
};

// Conditional denoising U-Net. Down path with strided convs, one
// cross-attention block at the lowest resolution, deconv up path with skip
// concatenation. Each decoder stage is tapped into the feature pyramid
// (finest first).
template <typename T>
struct UNetParams {
    std::size_t latent_channels = 4, base = 32, levels = 2;
    std::size_t token_dim = 64, time_dim = 64, sin_dim = 32;
    int max_timestep = 1000;

    nn::Linear<T> time_fc1, time_fc2;
    nn::Gelu<T> time_act;
    nn::Conv2d<T> in_conv;
    std::vector<ResBlock<T>> down_blocks;
    std::vector<nn::Conv2d<T>> down_samples;
    nn::CrossAttention<T> attn;
    ResBlock<T> mid_block;
    std::vector<nn::ConvTranspose2d<T>> up_samples;
    std::vector<nn::Conv2d<T>> fuse_convs;
    std::vector<ResBlock<T>> up_blocks;
    nn::Conv2d<T> out_conv;

    UNetParams() : UNetParams(4, 32, 2, 64, 1000) {}
    UNetParams(std::size_t lat_ch, std::size_t base_width, std::size_t n_levels,
               std::size_t tok_dim, int max_t)
        : latent_channels(lat_ch), base(base_width), levels(n_levels),
          token_dim(tok_dim), max_timestep(max_t) {
        if (levels < 2 || levels > 3) throw std::invalid_argument("UNetParams: levels must be 2 or 3");
        time_fc1 = nn::Linear<T>(time_dim, sin_dim);
        time_fc2 = nn::Linear<T>(time_dim, time_dim);
        in_conv = nn::Conv2d<T>(latent_channels, base, 3, 1, 1);
        for (std::size_t i = 0; i < levels; ++i) {
            const std::size_t w = base << i;
            down_blocks.emplace_back(w, w, time_dim);
            if (i + 1 < levels) down_samples.emplace_back(w, base << (i + 1), 3, 2, 1);
        }
        const std::size_t coarse = base << (levels - 1);
        attn = nn::CrossAttention<T>(coarse, token_dim);
        mid_block = ResBlock<T>(coarse, coarse, time_dim);
        for (std::size_t i = levels - 1; i-- > 0;) {
            const std::size_t w = base << i;
            up_samples.emplace_back(base << (i + 1), w, 2);
            fuse_convs.emplace_back(2 * w, w, 3, 1, 1);
            up_blocks.emplace_back(w, w, time_dim);
        }
        out_conv = nn::Conv2d<T>(base, latent_channels, 3, 1, 1);
    }

    void init(Rng& rng) {
        Rng r = rng.fork("unet");
        time_fc1.init(r);
        time_fc2.init(r);
        in_conv.init(r);
        for (auto& b : down_blocks) b.init(r);
        for (auto& d : down_samples) d.init(r);
        attn.init(r);
        mid_block.init(r);
        for (auto& u : up_samples) u.init(r);
        for (auto& f : fuse_convs) f.init(r);
        for (auto& b : up_blocks) b.init(r);
        out_conv.init(r);
    }

    void collect_params(const std::string& prefix, nn::ParamSet<T>& out) {
        time_fc1.collect_params(prefix + ".time_fc1", out);
        time_fc2.collect_params(prefix + ".time_fc2", out);
        in_conv.collect_params(prefix + ".in_conv", out);
        for (std::size_t i = 0; i < down_blocks.size(); ++i)
            down_blocks[i].collect_params(prefix + ".down" + std::to_string(i), out);
        for (std::size_t i = 0; i < down_samples.size(); ++i)
            down_samples[i].collect_params(prefix + ".down_sample" + std::to_string(i), out);
        attn.collect_params(prefix + ".attn", out);
        mid_block.collect_params(prefix + ".mid", out);
        for (std::size_t i = 0; i < up_samples.size(); ++i) {
            up_samples[i].collect_params(prefix + ".up_sample" + std::to_string(i), out);
            fuse_convs[i].collect_params(prefix + ".fuse" + std::to_string(i), out);
            up_blocks[i].collect_params(prefix + ".up" + std::to_string(i), out);
        }
        out_conv.collect_params(prefix + ".out_conv", out);
    }

    // ---- forward/backward ----
    // caches for one forward pass
    Tensor<T> cache_temb;
    std::vector<Tensor<T>> cache_skips;
    std::vector<std::size_t> cache_cat_split;

    Tensor<T> forward_eps(const Tensor<T>& z_values, int t, const Tensor<T>& tokens,
                          FeaturePyramid<T>& features_out) {
        Tensor<T> temb = time_fc1.forward(timestep_features<T>(t, sin_dim));
        temb = time_act.forward(temb);
        cache_temb = time_fc2.forward(temb);

        Tensor<T> h = in_conv.forward(z_values);
        cache_skips.assign(levels, Tensor<T>{});
        for (std::size_t i = 0; i < levels; ++i) {
            h = down_blocks[i].forward(h, cache_temb);
            cache_skips[i] = h;
            if (i + 1 < levels) h = down_samples[i].forward(h);
        }

        h = attn.forward(h, tokens);
        h = mid_block.forward(h, cache_temb);

        std::vector<Tensor<T>> taps(levels);
        taps[levels - 1] = h;
        cache_cat_split.assign(up_samples.size(), 0);
        for (std::size_t u = 0; u < up_samples.size(); ++u) {
            const std::size_t lvl = levels - 2 - u;  // level this stage restores
            Tensor<T> us = up_samples[u].forward(h);
            const Tensor<T>& sk = cache_skips[lvl];
            cache_cat_split[u] = us.dim(0);
            Tensor<T> cat({us.dim(0) + sk.dim(0), us.dim(1), us.dim(2)});
            std::copy(us.data.begin(), us.data.end(), cat.data.begin());
            std::copy(sk.data.begin(), sk.data.end(), cat.data.begin() + us.size());
            h = fuse_convs[u].forward(cat);
            h = up_blocks[u].forward(h, cache_temb);
            taps[lvl] = h;
        }

        features_out.levels = std::move(taps);
        return out_conv.forward(h);
    }

    // g_taps may be empty (treated as zeros) or one gradient per pyramid
    // level. Token gradients accumulate into g_tokens.
    Tensor<T> backward_eps(const Tensor<T>& g_eps, const std::vector<Tensor<T>>& g_taps,
                           Tensor<T>& g_tokens) {
        Tensor<T> g_temb(cache_temb.shape);
        auto tap_grad = [&](std::size_t lvl, Tensor<T>& g) {
            if (g_taps.size() > lvl && g_taps[lvl].size() == g.size())
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_taps[lvl][i];
        };

        Tensor<T> g = out_conv.backward(g_eps);
        std::vector<Tensor<T>> g_skips(levels);
        for (std::size_t u = up_samples.size(); u-- > 0;) {
            const std::size_t lvl = levels - 2 - u;
            tap_grad(lvl, g);
            Tensor<T> gf = up_blocks[u].backward(g, g_temb);
            Tensor<T> gcat = fuse_convs[u].backward(gf);
            const std::size_t us_ch = cache_cat_split[u];
            const std::size_t hw = gcat.dim(1) * gcat.dim(2);
            Tensor<T> gus({us_ch, gcat.dim(1), gcat.dim(2)});
            std::copy(gcat.data.begin(), gcat.data.begin() + gus.size(), gus.data.begin());
            Tensor<T> gsk({gcat.dim(0) - us_ch, gcat.dim(1), gcat.dim(2)});
            std::copy(gcat.data.begin() + gus.size(), gcat.data.end(), gsk.data.begin());
            g_skips[lvl] = gsk;
            g = up_samples[u].backward(gus);
        }

        tap_grad(levels - 1, g);
        g = mid_block.backward(g, g_temb);
        g = attn.backward(g, g_tokens);

        for (std::size_t i = levels; i-- > 0;) {
            if (i + 1 < levels) {
                g = down_samples[i].backward(g);
            }
            if (i < levels - 1 && g_skips[i].size() == g.size())
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += g_skips[i][k];
            g = down_blocks[i].backward(g, g_temb);
        }
        Tensor<T> g_z = in_conv.backward(g);

        Tensor<T> gt = time_fc2.backward(g_temb);
        gt = time_act.backward(gt);
        time_fc1.backward(gt);
        return g_z;
    }
};

// Noise prediction with decoder feature taps.
template <typename T>
std::pair<Tensor<T>, FeaturePyramid<T>> predict_noise(const LatentState<T>& z, int t,
                                                      const ConditioningTokens<T>& cond,
                                                      UNetParams<T>& params) {
    if (t < 1 || t > params.max_timestep)
        throw std::out_of_range("predict_noise: t out of range");
    if (z.values.ndim() != 3 || z.values.dim(0) != params.latent_channels)
        throw std::invalid_argument("predict_noise: latent channel mismatch");
    FeaturePyramid<T> features;
    Tensor<T> eps = params.forward_eps(z.values, t, cond.tokens, features);
    require_pyramid(features, "predict_noise");
    return {std::move(eps), std::move(features)};
}

// encode -> forward-noise to timestep t -> U-Net feature taps.
template <typename T>
FeaturePyramid<T> extract_features(const Image<T>& img, int t, const ConditioningTokens<T>& cond,
                                   AutoencoderParams<T>& ae, UNetParams<T>& unet,
                                   const NoiseSchedule& schedule, const Tensor<T>& noise) {
    LatentState<T> z0 = encode_image(img, ae);
    LatentState<T> zt = forward_noise_to(z0, t, schedule, noise);
    auto [eps, features] = predict_noise(zt, t, cond, unet);
    (void)eps;
    return features;
}

}  // namespace diffdepth
