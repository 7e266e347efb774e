#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "diffdepth/core/image.hpp"
#include "diffdepth/core/rng.hpp"
#include "diffdepth/diffusion/schedule.hpp"
#include "diffdepth/nn/activation.hpp"
#include "diffdepth/nn/conv.hpp"

namespace diffdepth {

// Latent autoencoder: strided conv encoder to a low-resolution latent and a
// mirrored deconv decoder with a sigmoid output head. The downsample factor
// is a power of two (one strided stage per octave).
template <typename T>
struct AutoencoderParams {
    std::size_t factor = 4;
    std::size_t latent_channels = 4;
    std::size_t base = 16;

    std::vector<nn::Conv2d<T>> enc_convs;
    std::vector<nn::LeakyRelu<T>> enc_acts;
    nn::Conv2d<T> enc_head;

    nn::Conv2d<T> dec_stem;
    nn::LeakyRelu<T> dec_stem_act;
    std::vector<nn::ConvTranspose2d<T>> dec_deconvs;
    std::vector<nn::LeakyRelu<T>> dec_acts;
    nn::Conv2d<T> dec_head;
    nn::Sigmoid<T> out_act;

    AutoencoderParams() : AutoencoderParams(4, 4, 16) {}
    AutoencoderParams(std::size_t f, std::size_t lat_ch, std::size_t base_width)
        : factor(f), latent_channels(lat_ch), base(base_width) {
        std::size_t stages = 0;
        for (std::size_t v = f; v > 1; v >>= 1) {
            if (v % 2) throw std::invalid_argument("AutoencoderParams: factor must be a power of two");
            ++stages;
        }
        if (stages == 0) throw std::invalid_argument("AutoencoderParams: factor must be >= 2");

        for (std::size_t i = 0; i < stages; ++i) {
            const std::size_t in_c = i == 0 ? 3 : base << (i - 1);
            enc_convs.emplace_back(in_c, base << i, 3, 2, 1);
        }
        enc_acts.resize(stages);
        enc_head = nn::Conv2d<T>(base << (stages - 1), latent_channels, 3, 1, 1);

        dec_stem = nn::Conv2d<T>(latent_channels, base << (stages - 1), 3, 1, 1);
        for (std::size_t i = 0; i < stages; ++i) {
            const std::size_t in_c = base << (stages - 1 - i);
            const std::size_t out_c = i + 1 == stages ? base : base << (stages - 2 - i);
            dec_deconvs.emplace_back(in_c, out_c, 2);
        }
        dec_acts.resize(stages);
        dec_head = nn::Conv2d<T>(base, 3, 3, 1, 1);
    }

    void init(Rng& rng) {
        Rng r = rng.fork("autoencoder");
        for (auto& c : enc_convs) c.init(r);
        enc_head.init(r);
        dec_stem.init(r);
        for (auto& d : dec_deconvs) d.init(r);
        dec_head.init(r);
    }

    Tensor<T> encode_fwd(const Tensor<T>& chw) {
        Tensor<T> h = chw;
        for (std::size_t i = 0; i < enc_convs.size(); ++i)
            h = enc_acts[i].forward(enc_convs[i].forward(h));
        return enc_head.forward(h);
    }

    Tensor<T> encode_bwd(const Tensor<T>& g_latent) {
        Tensor<T> g = enc_head.backward(g_latent);
        for (std::size_t i = enc_convs.size(); i-- > 0;)
            g = enc_convs[i].backward(enc_acts[i].backward(g));
        return g;
    }

    Tensor<T> decode_fwd(const Tensor<T>& latent) {
        Tensor<T> h = dec_stem_act.forward(dec_stem.forward(latent));
        for (std::size_t i = 0; i < dec_deconvs.size(); ++i)
            h = dec_acts[i].forward(dec_deconvs[i].forward(h));
        return out_act.forward(dec_head.forward(h));
    }

    Tensor<T> decode_bwd(const Tensor<T>& g_img_chw) {
        Tensor<T> g = dec_head.backward(out_act.backward(g_img_chw));
        for (std::size_t i = dec_deconvs.size(); i-- > 0;)
            g = dec_deconvs[i].backward(dec_acts[i].backward(g));
        return dec_stem.backward(dec_stem_act.backward(g));
    }

    void collect_params(const std::string& prefix, nn::ParamSet<T>& out) {
        for (std::size_t i = 0; i < enc_convs.size(); ++i)
            enc_convs[i].collect_params(prefix + ".enc" + std::to_string(i), out);
        enc_head.collect_params(prefix + ".enc_head", out);
        dec_stem.collect_params(prefix + ".dec_stem", out);
        for (std::size_t i = 0; i < dec_deconvs.size(); ++i)
            dec_deconvs[i].collect_params(prefix + ".dec" + std::to_string(i), out);
        dec_head.collect_params(prefix + ".dec_head", out);
    }
};

template <typename T>
LatentState<T> encode_image(const Image<T>& img, AutoencoderParams<T>& params) {
    require_image(img, "encode_image");
    if (img.dim(0) % params.factor || img.dim(1) % params.factor)
        throw std::invalid_argument("encode_image: image dims must be divisible by the downsample factor");
    LatentState<T> z;
    z.values = params.encode_fwd(image_to_chw(img));
    z.timestep = 0;
    return z;
}

template <typename T>
Image<T> decode_latent(const LatentState<T>& z, AutoencoderParams<T>& params) {
    if (z.values.ndim() != 3 || z.values.dim(0) != params.latent_channels)
        throw std::invalid_argument("decode_latent: latent channel mismatch");
    Image<T> img = chw_to_image(params.decode_fwd(z.values));
    clamp01(img);  // sigmoid output is already in range; guards rounding
    return img;
}

}  // namespace diffdepth
