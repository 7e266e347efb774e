#pragma once

#include <cmath>
#include <stdexcept>

#include "diffdepth/core/rng.hpp"
#include "diffdepth/core/tensor.hpp"
#include "diffdepth/nn/param.hpp"

namespace diffdepth::nn {

// ---- small dense matrix helpers (row-major 2-d tensors) ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw std::invalid_argument("matmul: inner dim mismatch");
    Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = &a.data[i * k];
        T* crow = &c.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = &b.data[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// a^T * b where a is (k x m), b is (k x n)
template <typename T>
Tensor<T> matmul_ta(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw std::invalid_argument("matmul_ta: inner dim mismatch");
    Tensor<T> c({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const T* arow = &a.data[p * m];
        const T* brow = &b.data[p * n];
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = &c.data[i * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// a * b^T where a is (m x k), b is (n x k)
template <typename T>
Tensor<T> matmul_tb(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) throw std::invalid_argument("matmul_tb: inner dim mismatch");
    Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = &a.data[i * k];
        T* crow = &c.data[i * n];
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = &b.data[j * k];
            T acc{};
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
    return c;
}

// Fixed sinusoidal position table, one row per token. Keys and values see
// token order through this, so the attention output is order-sensitive.
template <typename T>
Tensor<T> token_positions(std::size_t num_tokens, std::size_t dim) {
    Tensor<T> pe({num_tokens, dim});
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < num_tokens; ++i) {
        for (std::size_t k = 0; k < half; ++k) {
            const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / denom);
            const double arg = static_cast<double>(i) * freq;
            pe(i, k) = static_cast<T>(std::sin(arg));
            pe(i, half + k) = static_cast<T>(std::cos(arg));
        }
        if (dim % 2) pe(i, dim - 1) = T{};
    }
    return pe;
}

// Single-head cross-attention over a CHW feature map: queries come from
// spatial positions, keys/values from the conditioning tokens. Residual add
// on the output.
template <typename T>
struct CrossAttention {
    std::size_t channels = 0;   // C of the feature map (also attention width here)
    std::size_t token_dim = 0;  // D of the conditioning tokens
    Tensor<T> wq, bq, gwq, gbq;  // (C -> C)
    Tensor<T> wk, bk, gwk, gbk;  // (D -> C)
    Tensor<T> wv, bv, gwv, gbv;  // (D -> C)
    Tensor<T> wo, bo, gwo, gbo;  // (C -> C)

    // caches
    Tensor<T> cache_qin, cache_tok, cache_q, cache_k, cache_v, cache_attn, cache_ctx;
    std::size_t cache_h = 0, cache_w = 0;

    CrossAttention() = default;
    CrossAttention(std::size_t c, std::size_t d)
        : channels(c), token_dim(d),
          wq({c, c}), bq({c}), gwq({c, c}), gbq({c}),
          wk({c, d}), bk({c}), gwk({c, d}), gbk({c}),
          wv({c, d}), bv({c}), gwv({c, d}), gbv({c}),
          wo({c, c}), bo({c}), gwo({c, c}), gbo({c}) {}

    void init(Rng& rng) {
        auto fill = [&rng](Tensor<T>& m, std::size_t fan_in) {
            const double scale = std::sqrt(1.0 / static_cast<double>(fan_in));
            for (auto& v : m.data) v = static_cast<T>(rng.normal() * scale);
        };
        fill(wq, channels);
        fill(wk, token_dim);
        fill(wv, token_dim);
        fill(wo, channels);
        bq.fill(T{});
        bk.fill(T{});
        bv.fill(T{});
        bo.fill(T{});
    }

    // x: (C,H,W); tokens: (N,D). Returns x + attention(x, tokens).
    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& tokens) {
        if (x.dim(0) != channels) throw std::invalid_argument("CrossAttention: channel mismatch");
        if (tokens.ndim() != 2 || tokens.dim(1) != token_dim)
            throw std::invalid_argument("CrossAttention: token width mismatch (got " +
                                        shape_string(tokens.shape) + ")");
        const std::size_t h = x.dim(1), wd = x.dim(2), hw = h * wd, n = tokens.dim(0);
        cache_h = h;
        cache_w = wd;

        // flatten queries: (HW, C)
        Tensor<T> qin({hw, channels});
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < hw; ++p) qin(p, c) = x.data[c * hw + p];
        cache_qin = qin;

        Tensor<T> tok = tokens;
        const Tensor<T> pe = token_positions<T>(n, token_dim);
        for (std::size_t i = 0; i < tok.size(); ++i) tok[i] += pe[i];
        cache_tok = tok;

        Tensor<T> q = matmul_tb(qin, wq);  // (HW, C)
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t c = 0; c < channels; ++c) q(p, c) += bq[c];
        Tensor<T> k = matmul_tb(tok, wk);  // (N, C)
        Tensor<T> v = matmul_tb(tok, wv);  // (N, C)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < channels; ++c) {
                k(i, c) += bk[c];
                v(i, c) += bv[c];
            }
        cache_q = q;
        cache_k = k;
        cache_v = v;

        const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(channels)));
        Tensor<T> scores = matmul_tb(q, k);  // (HW, N)
        for (auto& s : scores.data) s *= inv_sqrt_d;

        // row-wise softmax
        Tensor<T> attn({hw, n});
        for (std::size_t p = 0; p < hw; ++p) {
            T mx = scores(p, 0);
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, scores(p, j));
            T sum{};
            for (std::size_t j = 0; j < n; ++j) {
                const T e = static_cast<T>(std::exp(static_cast<double>(scores(p, j) - mx)));
                attn(p, j) = e;
                sum += e;
            }
            for (std::size_t j = 0; j < n; ++j) attn(p, j) /= sum;
        }
        cache_attn = attn;

        Tensor<T> ctx = matmul(attn, v);  // (HW, C)
        cache_ctx = ctx;
        Tensor<T> o = matmul_tb(ctx, wo);  // (HW, C)
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t c = 0; c < channels; ++c) o(p, c) += bo[c];

        Tensor<T> y = x;
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < hw; ++p) y.data[c * hw + p] += o(p, c);
        return y;
    }

    // Returns the input gradient; token gradient accumulates into g_tokens.
    Tensor<T> backward(const Tensor<T>& gy, Tensor<T>& g_tokens) {
        const std::size_t h = cache_h, wd = cache_w, hw = h * wd;
        const std::size_t n = cache_tok.dim(0);

        Tensor<T> go({hw, channels});
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < hw; ++p) go(p, c) = gy.data[c * hw + p];

        // o = ctx * wo^T + bo
        Tensor<T> gctx = matmul(go, wo);  // (HW, C)
        {
            Tensor<T> gw = matmul_ta(go, cache_ctx);  // (C, C): d wo
            for (std::size_t i = 0; i < gw.size(); ++i) gwo[i] += gw[i];
            for (std::size_t p = 0; p < hw; ++p)
                for (std::size_t c = 0; c < channels; ++c) gbo[c] += go(p, c);
        }

        // ctx = attn * v
        Tensor<T> gattn = matmul_tb(gctx, cache_v);   // (HW, N)
        Tensor<T> gv = matmul_ta(cache_attn, gctx);   // (N, C)

        // softmax backward, row-wise
        Tensor<T> gscores({hw, n});
        for (std::size_t p = 0; p < hw; ++p) {
            T dot{};
            for (std::size_t j = 0; j < n; ++j) dot += gattn(p, j) * cache_attn(p, j);
            for (std::size_t j = 0; j < n; ++j)
                gscores(p, j) = cache_attn(p, j) * (gattn(p, j) - dot);
        }
        const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(channels)));
        for (auto& s : gscores.data) s *= inv_sqrt_d;

        // scores = q * k^T
        Tensor<T> gq = matmul(gscores, cache_k);      // (HW, C)
        Tensor<T> gk = matmul_ta(gscores, cache_q);   // (N, C)

        // q = qin * wq^T + bq
        Tensor<T> gqin = matmul(gq, wq);  // (HW, C)
        {
            Tensor<T> gw = matmul_ta(gq, cache_qin);  // (C, C)
            for (std::size_t i = 0; i < gw.size(); ++i) gwq[i] += gw[i];
            for (std::size_t p = 0; p < hw; ++p)
                for (std::size_t c = 0; c < channels; ++c) gbq[c] += gq(p, c);
        }

        // k = tok * wk^T + bk ; v = tok * wv^T + bv
        Tensor<T> gtok = matmul(gk, wk);  // (N, D)
        {
            Tensor<T> gt2 = matmul(gv, wv);
            for (std::size_t i = 0; i < gtok.size(); ++i) gtok[i] += gt2[i];
            Tensor<T> gwk_l = matmul_ta(gk, cache_tok);
            Tensor<T> gwv_l = matmul_ta(gv, cache_tok);
            for (std::size_t i = 0; i < gwk_l.size(); ++i) gwk[i] += gwk_l[i];
            for (std::size_t i = 0; i < gwv_l.size(); ++i) gwv[i] += gwv_l[i];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < channels; ++c) {
                    gbk[c] += gk(i, c);
                    gbv[c] += gv(i, c);
                }
        }
        if (!g_tokens.same_shape(gtok)) g_tokens = Tensor<T>(gtok.shape);
        for (std::size_t i = 0; i < gtok.size(); ++i) g_tokens[i] += gtok[i];

        // residual: gy flows straight through plus the query path
        Tensor<T> gx = gy;
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < hw; ++p) gx.data[c * hw + p] += gqin(p, c);
        return gx;
    }

    void collect_params(const std::string& prefix, ParamSet<T>& out) {
        out.push_back({prefix + ".wq", &wq, &gwq});
        out.push_back({prefix + ".bq", &bq, &gbq});
        out.push_back({prefix + ".wk", &wk, &gwk});
        out.push_back({prefix + ".bk", &bk, &gbk});
        out.push_back({prefix + ".wv", &wv, &gwv});
        out.push_back({prefix + ".bv", &bv, &gbv});
        out.push_back({prefix + ".wo", &wo, &gwo});
        out.push_back({prefix + ".bo", &bo, &gbo});
    }
};

}  // namespace diffdepth::nn
