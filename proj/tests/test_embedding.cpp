#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "diffdepth/embedding/embedding.hpp"
#include "test_util.hpp"

using namespace diffdepth;
using Catch::Approx;

TEST_CASE("gelu matches the erf-based oracle") {
    REQUIRE(nn::gelu(0.0) == 0.0);
    REQUIRE(nn::gelu(10.0) == Approx(10.0).margin(1e-9));
    // 1 * Phi(1), Phi evaluated through erf
    const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    REQUIRE(nn::gelu(1.0) == Approx(phi1).margin(1e-15));
    REQUIRE(nn::gelu(1.0) == Approx(0.841344746).margin(1e-9));
    // gradient against central differences
    for (double x : {-2.0, -0.3, 0.0, 0.7, 3.1}) {
        const double h = 1e-6;
        const double numeric = (nn::gelu(x + h) - nn::gelu(x - h)) / (2 * h);
        REQUIRE(nn::gelu_grad(x) == Approx(numeric).margin(1e-9));
    }
}

TEST_CASE("context MLP: zero params give zero embedding") {
    MlpParams<double> p(16, 2, 8);
    SemanticContext<double> ctx;
    ctx.logits = Tensor<double>({kSemanticClasses}, 0.3);
    const auto emb = context_to_embedding(ctx, p);
    REQUIRE(emb.values.size() == kTextEmbeddingDim);
    for (double v : emb.values.data) REQUIRE(v == 0.0);
}

TEST_CASE("context MLP hand forward pass with hidden width 1") {
    MlpParams<double> p(1, 1, kTextEmbeddingDim);
    // ctx = e0; W1 row = [2, 0, ...]; W2 column = [0.5]; all biases zero
    p.fc1.w(0, 0) = 2.0;
    p.fc2.w(0, 0) = 0.5;
    SemanticContext<double> ctx;
    ctx.logits = Tensor<double>({kSemanticClasses});
    ctx.logits[0] = 1.0;
    const auto emb = context_to_embedding(ctx, p);
    REQUIRE(emb.values[0] == Approx(0.5 * nn::gelu(2.0)).margin(1e-15));
    REQUIRE(emb.values[0] == Approx(0.5 * 2.0 * 0.5 * (1.0 + std::erf(std::sqrt(2.0)))).margin(1e-12));
    for (std::size_t i = 1; i < emb.values.size(); ++i) REQUIRE(emb.values[i] == 0.0);
}

TEST_CASE("embedding Jacobian w.r.t. the context matches finite differences") {
    Rng rng(21);
    MlpParams<double> p(8, 2, 8);
    p.init(rng);
    SemanticContext<double> ctx;
    ctx.logits = testutil::random_tensor<double>({kSemanticClasses}, rng);

    const Tensor<double> w = testutil::random_tensor<double>({kTextEmbeddingDim}, rng);
    nn::ParamSet<double> ps;
    p.collect_params("emb", ps);
    nn::zero_grads(ps);
    context_to_embedding(ctx, p);
    const Tensor<double> g_ctx = context_to_embedding_backward(w, p);

    const double h = 1e-6;
    for (std::size_t i = 0; i < ctx.logits.size(); i += 7) {
        const double keep = ctx.logits[i];
        ctx.logits[i] = keep + h;
        double up = 0;
        {
            const auto e = context_to_embedding(ctx, p);
            for (std::size_t k = 0; k < w.size(); ++k) up += e.values[k] * w[k];
        }
        ctx.logits[i] = keep - h;
        double dn = 0;
        {
            const auto e = context_to_embedding(ctx, p);
            for (std::size_t k = 0; k < w.size(); ++k) dn += e.values[k] * w[k];
        }
        ctx.logits[i] = keep;
        const double numeric = (up - dn) / (2 * h);
        REQUIRE(testutil::grad_close(g_ctx[i], numeric, 1e-5));
    }
}

TEST_CASE("token projection behavior") {
    SECTION("zero embedding and zero bias give zero tokens") {
        Rng rng(22);
        MlpParams<double> p(8, 3, 5);
        p.init(rng);
        p.proj.b.fill(0.0);
        TextEmbedding<double> emb;
        emb.values = Tensor<double>({kTextEmbeddingDim});
        const auto tok = embed_to_tokens(emb, p, 3, 5);
        REQUIRE(tok.num_tokens() == 3);
        REQUIRE(tok.token_dim() == 5);
        for (double v : tok.tokens.data) REQUIRE(v == 0.0);
    }
    SECTION("identity projection with one 100-wide token reproduces the embedding") {
        MlpParams<double> p(8, 1, kTextEmbeddingDim);
        for (std::size_t i = 0; i < kTextEmbeddingDim; ++i) p.proj.w(i, i) = 1.0;
        Rng rng(23);
        TextEmbedding<double> emb;
        emb.values = testutil::random_tensor<double>({kTextEmbeddingDim}, rng);
        const auto tok = embed_to_tokens(emb, p, 1, kTextEmbeddingDim);
        for (std::size_t i = 0; i < kTextEmbeddingDim; ++i)
            REQUIRE(tok.tokens(std::size_t(0), i) == emb.values[i]);
    }
    SECTION("flattened output equals an independent matrix-vector product") {
        Rng rng(24);
        MlpParams<double> p(8, 4, 6);
        p.init(rng);
        TextEmbedding<double> emb;
        emb.values = testutil::random_tensor<double>({kTextEmbeddingDim}, rng);
        const auto tok = embed_to_tokens(emb, p, 4, 6);
        for (std::size_t r = 0; r < 24; ++r) {
            double acc = p.proj.b[r];
            for (std::size_t c = 0; c < kTextEmbeddingDim; ++c) acc += p.proj.w(r, c) * emb.values[c];
            REQUIRE(std::abs(tok.tokens[r] - acc) < 1e-12);
        }
    }
    SECTION("shape mismatch rejected") {
        MlpParams<double> p(8, 2, 8);
        TextEmbedding<double> emb;
        emb.values = Tensor<double>({kTextEmbeddingDim});
        REQUIRE_THROWS_AS(embed_to_tokens(emb, p, 3, 8), std::invalid_argument);
    }
}

TEST_CASE("full conditioning chain gradient matches finite differences") {
    Rng rng(25);
    MlpParams<double> p(8, 2, 6);
    p.init(rng);
    SemanticContext<double> ctx;
    ctx.logits = testutil::random_tensor<double>({kSemanticClasses}, rng);
    const Tensor<double> w = testutil::random_tensor<double>({2, 6}, rng);

    auto loss = [&]() {
        auto emb = context_to_embedding(ctx, p);
        auto tok = embed_to_tokens(emb, p, 2, 6);
        double acc = 0;
        for (std::size_t i = 0; i < tok.tokens.size(); ++i) acc += tok.tokens[i] * w[i];
        return acc;
    };

    nn::ParamSet<double> ps;
    p.collect_params("emb", ps);
    nn::zero_grads(ps);
    loss();
    Tensor<double> g_emb = embed_to_tokens_backward(w, p);
    context_to_embedding_backward(g_emb, p);

    const double h = 1e-6;
    for (auto& pr : ps) {
        for (std::size_t i = 0; i < pr.value->size(); i += 97) {  // sampled coordinates
            const double keep = (*pr.value)[i];
            (*pr.value)[i] = keep + h;
            const double up = loss();
            (*pr.value)[i] = keep - h;
            const double dn = loss();
            (*pr.value)[i] = keep;
            const double numeric = (up - dn) / (2 * h);
            INFO(pr.name << "[" << i << "]");
            REQUIRE(testutil::grad_close((*pr.grad)[i], numeric, 1e-6));
        }
    }
}

TEST_CASE("toy segmenter shape, finiteness, and determinism") {
    ToySegmenter<double> seg;
    Rng rng(26);
    seg.init(rng);
    const Image<double> black({32, 32, 3});
    const auto ctx = extract_semantic_context(black, seg);
    REQUIRE(ctx.logits.size() == kSemanticClasses);
    REQUIRE(ctx.logits.all_finite());

    Rng img_rng(27);
    const Image<double> img = testutil::random_tensor<double>({32, 32, 3}, img_rng, 0.0, 1.0);
    const auto a = extract_semantic_context(img, seg);
    const auto b = extract_semantic_context(img, seg);
    for (std::size_t i = 0; i < kSemanticClasses; ++i) REQUIRE(a.logits[i] == b.logits[i]);
}

TEST_CASE("external segmenter adapter exchanges files as specified") {
    const std::string dir = testutil::temp_dir("seg_adapter");
    Image<double> img({8, 8, 3}, 0.5);

    SECTION("missing logits file is an error") {
        ExternalSegmenterAdapter<double> adapter(dir);
        REQUIRE_THROWS_AS(adapter.segment(img), std::runtime_error);
        REQUIRE(std::filesystem::exists(dir + "/input.png"));  // input was still written
    }
    SECTION("pre-staged logits round-trip; line number is the class index") {
        {
            std::ofstream out(dir + "/logits.txt");
            for (std::size_t i = 0; i < kSemanticClasses; ++i) out << 0.01 * static_cast<double>(i) << "\n";
        }
        ExternalSegmenterAdapter<double> adapter(dir);
        const auto ctx = adapter.segment(img);
        REQUIRE(ctx.logits[0] == Approx(0.0).margin(1e-12));
        REQUIRE(ctx.logits[149] == Approx(1.49).margin(1e-12));
    }
    SECTION("wrong dimensionality rejected") {
        {
            std::ofstream out(dir + "/logits.txt");
            for (int i = 0; i < 10; ++i) out << 1.0 << "\n";
        }
        ExternalSegmenterAdapter<double> adapter(dir);
        REQUIRE_THROWS_AS(adapter.segment(img), std::runtime_error);
    }
    SECTION("command is invoked between write and read") {
        ExternalSegmenterAdapter<double> adapter(
            dir, "seq 1 150 | sed 's/.*/0.5/' > " + dir + "/logits.txt");
        const auto ctx = adapter.segment(img);
        for (std::size_t i = 0; i < kSemanticClasses; ++i) REQUIRE(ctx.logits[i] == 0.5);
    }
    std::filesystem::remove_all(dir);
}
