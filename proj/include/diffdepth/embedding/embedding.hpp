#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "diffdepth/core/image.hpp"
#include "diffdepth/core/rng.hpp"
#include "diffdepth/core/tensor.hpp"
#include "diffdepth/io/png.hpp"
#include "diffdepth/nn/activation.hpp"
#include "diffdepth/nn/conv.hpp"
#include "diffdepth/nn/linear.hpp"

namespace diffdepth {

inline constexpr std::size_t kSemanticClasses = 150;
inline constexpr std::size_t kTextEmbeddingDim = 100;

// Per-class segmentation logits pooled over the image.
template <typename T>
struct SemanticContext {
    Tensor<T> logits;  // length 150
    std::optional<std::vector<std::string>> class_names;
};

template <typename T>
struct TextEmbedding {
    Tensor<T> values;  // length 100
};

template <typename T>
struct ConditioningTokens {
    Tensor<T> tokens;  // num_tokens x token_dim

    std::size_t num_tokens() const { return tokens.dim(0); }
    std::size_t token_dim() const { return tokens.dim(1); }
};

template <typename T>
void require_context(const SemanticContext<T>& ctx) {
    if (ctx.logits.ndim() != 1 || ctx.logits.size() != kSemanticClasses)
        throw std::invalid_argument("SemanticContext: logits must have length 150");
    if (!ctx.logits.all_finite()) throw std::invalid_argument("SemanticContext: non-finite logits");
}

// Parameters of the conditioning path: the 150 -> hidden -> 100 GELU MLP plus
// the linear projection from the 100-dim embedding to the token sequence.
template <typename T>
struct MlpParams {
    nn::Linear<T> fc1;   // hidden x 150
    nn::Linear<T> fc2;   // 100 x hidden
    nn::Linear<T> proj;  // (num_tokens*token_dim) x 100
    std::size_t num_tokens = 0, token_dim = 0;
    nn::Gelu<T> act;

    MlpParams() = default;
    MlpParams(std::size_t hidden, std::size_t n_tokens, std::size_t tok_dim)
        : fc1(hidden, kSemanticClasses),
          fc2(kTextEmbeddingDim, hidden),
          proj(n_tokens * tok_dim, kTextEmbeddingDim),
          num_tokens(n_tokens), token_dim(tok_dim) {
        if (n_tokens < 1 || tok_dim < 1)
            throw std::invalid_argument("MlpParams: num_tokens and token_dim must be >= 1");
    }

    void init(Rng& rng) {
        Rng r1 = rng.fork("emb.fc1"), r2 = rng.fork("emb.fc2"), r3 = rng.fork("emb.proj");
        fc1.init(r1);
        fc2.init(r2);
        proj.init(r3);
    }

    void collect_params(const std::string& prefix, nn::ParamSet<T>& out) {
        fc1.collect_params(prefix + ".fc1", out);
        fc2.collect_params(prefix + ".fc2", out);
        proj.collect_params(prefix + ".proj", out);
    }
};

template <typename T>
TextEmbedding<T> context_to_embedding(const SemanticContext<T>& ctx, MlpParams<T>& params) {
    require_context(ctx);
    Tensor<T> h = params.fc1.forward(ctx.logits);
    h = params.act.forward(h);
    TextEmbedding<T> out;
    out.values = params.fc2.forward(h);
    return out;
}

// Backward through the context MLP; returns d loss / d logits.
template <typename T>
Tensor<T> context_to_embedding_backward(const Tensor<T>& g_embedding, MlpParams<T>& params) {
    Tensor<T> g = params.fc2.backward(g_embedding);
    g = params.act.backward(g);
    return params.fc1.backward(g);
}

template <typename T>
ConditioningTokens<T> embed_to_tokens(const TextEmbedding<T>& emb, MlpParams<T>& params,
                                      std::size_t num_tokens, std::size_t token_dim) {
    if (emb.values.size() != kTextEmbeddingDim)
        throw std::invalid_argument("embed_to_tokens: embedding must have length 100");
    if (num_tokens != params.num_tokens || token_dim != params.token_dim)
        throw std::invalid_argument("embed_to_tokens: requested token shape does not match params");
    Tensor<T> flat = params.proj.forward(emb.values);
    ConditioningTokens<T> out;
    out.tokens = Tensor<T>({num_tokens, token_dim});
    out.tokens.data = flat.data;
    return out;
}

template <typename T>
Tensor<T> embed_to_tokens_backward(const Tensor<T>& g_tokens, MlpParams<T>& params) {
    Tensor<T> flat({g_tokens.size()});
    flat.data = g_tokens.data;
    return params.proj.backward(flat);
}

// ---- segmenter backends ----

template <typename T>
class SegmenterBackend {
public:
    virtual ~SegmenterBackend() = default;
    virtual SemanticContext<T> segment(const Image<T>& image) = 0;
    virtual std::string name() const = 0;
};

template <typename T>
SemanticContext<T> extract_semantic_context(const Image<T>& image, SegmenterBackend<T>& segmenter) {
    require_image(image, "extract_semantic_context");
    SemanticContext<T> ctx = segmenter.segment(image);
    require_context(ctx);
    return ctx;
}

// Small convolutional classifier: three strided conv blocks, a 1x1 class
// head, global average pooling to the 150-dim logit vector.
template <typename T>
class ToySegmenter : public SegmenterBackend<T> {
public:
    nn::Conv2d<T> conv1, conv2, conv3, head;
    nn::LeakyRelu<T> act1, act2, act3;

    ToySegmenter()
        : conv1(3, 8, 3, 2, 1), conv2(8, 16, 3, 2, 1), conv3(16, 32, 3, 2, 1),
          head(32, kSemanticClasses, 1, 1, 0) {}

    void init(Rng& rng) {
        Rng r = rng.fork("segmenter");
        conv1.init(r);
        conv2.init(r);
        conv3.init(r);
        head.init(r);
    }

    SemanticContext<T> segment(const Image<T>& image) override {
        SemanticContext<T> ctx;
        ctx.logits = forward(image_to_chw(image));
        return ctx;
    }

    std::string name() const override { return "toy"; }

    // Pooled class logits; caches are kept for backward (training path).
    Tensor<T> forward(const Tensor<T>& chw) {
        Tensor<T> h = act1.forward(conv1.forward(chw));
        h = act2.forward(conv2.forward(h));
        h = act3.forward(conv3.forward(h));
        cache_map_ = head.forward(h);  // (150, h', w')
        const std::size_t hw = cache_map_.dim(1) * cache_map_.dim(2);
        Tensor<T> pooled({kSemanticClasses});
        for (std::size_t c = 0; c < kSemanticClasses; ++c) {
            T acc{};
            for (std::size_t i = 0; i < hw; ++i) acc += cache_map_.data[c * hw + i];
            pooled[c] = acc / static_cast<T>(hw);
        }
        return pooled;
    }

    void backward(const Tensor<T>& g_logits) {
        const std::size_t hw = cache_map_.dim(1) * cache_map_.dim(2);
        Tensor<T> gmap(cache_map_.shape);
        for (std::size_t c = 0; c < kSemanticClasses; ++c) {
            const T g = g_logits[c] / static_cast<T>(hw);
            for (std::size_t i = 0; i < hw; ++i) gmap.data[c * hw + i] = g;
        }
        Tensor<T> g = head.backward(gmap);
        g = act3.backward(g);
        g = conv3.backward(g);
        g = act2.backward(g);
        g = conv2.backward(g);
        g = act1.backward(g);
        conv1.backward(g);
    }

    void collect_params(const std::string& prefix, nn::ParamSet<T>& out) {
        conv1.collect_params(prefix + ".conv1", out);
        conv2.collect_params(prefix + ".conv2", out);
        conv3.collect_params(prefix + ".conv3", out);
        head.collect_params(prefix + ".head", out);
    }

private:
    Tensor<T> cache_map_;
};

// Directory-exchange adapter: the input image is written as PNG, the external
// segmenter leaves a 150-line plain-text logit file (class index = line
// number). An optional shell command is invoked between the two.
template <typename T>
class ExternalSegmenterAdapter : public SegmenterBackend<T> {
public:
    ExternalSegmenterAdapter(std::string exchange_dir, std::string command = {})
        : dir_(std::move(exchange_dir)), command_(std::move(command)) {}

    SemanticContext<T> segment(const Image<T>& image) override {
        io::write_png_rgb8(dir_ + "/input.png", image);
        if (!command_.empty()) {
            const int rc = std::system(command_.c_str());
            if (rc != 0)
                throw std::runtime_error("external segmenter command failed with status " + std::to_string(rc));
        }
        std::ifstream in(dir_ + "/logits.txt");
        if (!in) throw std::runtime_error("external segmenter adapter: missing " + dir_ + "/logits.txt");
        SemanticContext<T> ctx;
        ctx.logits = Tensor<T>({kSemanticClasses});
        std::size_t n = 0;
        double v;
        while (in >> v) {
            if (n >= kSemanticClasses) {
                ++n;
                break;
            }
            ctx.logits[n++] = static_cast<T>(v);
        }
        if (n != kSemanticClasses)
            throw std::runtime_error("external segmenter adapter: expected 150 logits, got " + std::to_string(n));
        return ctx;
    }

    std::string name() const override { return "external-adapter"; }

private:
    std::string dir_;
    std::string command_;
};

}  // namespace diffdepth
