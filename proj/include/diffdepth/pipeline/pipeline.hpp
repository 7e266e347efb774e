#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffdepth/core/checkpoint.hpp"
#include "diffdepth/core/rng.hpp"
#include "diffdepth/data/dataset.hpp"
#include "diffdepth/denoiser/autoencoder.hpp"
#include "diffdepth/denoiser/unet.hpp"
#include "diffdepth/depth/colormap.hpp"
#include "diffdepth/depth/depth_map.hpp"
#include "diffdepth/depth/head.hpp"
#include "diffdepth/embedding/embedding.hpp"
#include "diffdepth/enhance/enhance.hpp"
#include "diffdepth/metrics/metrics.hpp"
#include "diffdepth/nn/adam.hpp"
#include "diffdepth/pipeline/config.hpp"
#include "diffdepth/pipeline/losses.hpp"
#include "diffdepth/pointcloud/pointcloud.hpp"

namespace diffdepth {

// The four learnable stage groups plus the frozen schedule, assembled from a
// run config. Stage widths chain by construction and are re-validated on
// checkpoint load.
template <typename T>
struct PipelineParams {
    RunConfig config;
    MlpParams<T> embedding;       // conditioning MLP + token projection
    ToySegmenter<T> segmenter;    // toy backend weights (kept even with adapters)
    AutoencoderParams<T> autoencoder;
    NoiseSchedule schedule;
    UNetParams<T> unet;
    HeadParams<T> head;

    static PipelineParams build(const RunConfig& cfg) {
        PipelineParams p;
        p.config = cfg;
        p.embedding = MlpParams<T>(cfg.model.mlp_hidden, cfg.model.num_tokens, cfg.model.token_dim);
        p.autoencoder = AutoencoderParams<T>(cfg.model.downsample_factor, cfg.model.latent_channels,
                                             cfg.model.autoencoder_base);
        p.schedule = make_noise_schedule(cfg.schedule.num_steps, ScheduleKind::linear,
                                         cfg.schedule.beta_start, cfg.schedule.beta_end);
        p.unet = UNetParams<T>(cfg.model.latent_channels, cfg.model.unet_base, cfg.model.unet_levels,
                               cfg.model.token_dim, static_cast<int>(cfg.schedule.num_steps));
        std::vector<std::size_t> level_channels;
        for (std::size_t i = 0; i < cfg.model.unet_levels; ++i)
            level_channels.push_back(cfg.model.unet_base << i);
        p.head = HeadParams<T>(level_channels, cfg.model.downsample_factor, cfg.model.head_width);
        return p;
    }

    void init(Rng& rng) {
        embedding.init(rng);
        segmenter.init(rng);
        autoencoder.init(rng);
        unet.init(rng);
        head.init(rng);
    }

    void collect_params(nn::ParamSet<T>& out) {
        embedding.collect_params("embedding", out);
        segmenter.collect_params("segmenter", out);
        autoencoder.collect_params("autoencoder", out);
        unet.collect_params("unet", out);
        head.collect_params("depth_head", out);
    }
};

template <typename T>
void save_pipeline_checkpoint(const std::string& path, PipelineParams<T>& p) {
    nn::ParamSet<T> params;
    p.collect_params(params);
    save_checkpoint(path, run_config_to_json(p.config).dump(), params);
}

template <typename T>
PipelineParams<T> load_pipeline_checkpoint(const std::string& path) {
    // Two passes: read the embedded config to size the model, then load arrays.
    const std::string config_json = read_checkpoint_config(path);
    RunConfig cfg;
    try {
        cfg = parse_run_config(nlohmann::json::parse(config_json));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint: embedded config unreadable: " + std::string(e.what()));
    }
    PipelineParams<T> p = PipelineParams<T>::build(cfg);
    nn::ParamSet<T> params;
    p.collect_params(params);
    load_checkpoint<T>(path, params);
    return p;
}

// ---- backend handles ----

template <typename T>
struct SegmenterHandle {
    SegmenterBackend<T>* ptr = nullptr;
    std::unique_ptr<SegmenterBackend<T>> owned;
};

template <typename T>
SegmenterHandle<T> make_segmenter(PipelineParams<T>& p) {
    SegmenterHandle<T> h;
    if (p.config.segmenter.backend == "toy") {
        h.ptr = &p.segmenter;
    } else {
        h.owned = std::make_unique<ExternalSegmenterAdapter<T>>(p.config.segmenter.exchange_dir,
                                                                p.config.segmenter.command);
        h.ptr = h.owned.get();
    }
    return h;
}

template <typename T>
std::unique_ptr<EnhancerBackend<T>> make_enhancer(const RunConfig& cfg) {
    if (cfg.enhancement.backend == "bilinear2x") return std::make_unique<BilinearEnhancer<T>>();
    return std::make_unique<ExternalEnhancerAdapter<T>>(cfg.enhancement.exchange_dir,
                                                        cfg.enhancement.command);
}

// ---- stage tracing ----

using Trace = nlohmann::ordered_json;  // array of {stage, ...} records

inline nlohmann::ordered_json shape_json(const std::vector<std::size_t>& s) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (std::size_t d : s) a.push_back(d);
    return a;
}

// ---- inference ----

template <typename T>
struct InferOptions {
    bool use_enhancement = true;
    Trace* trace = nullptr;
};

template <typename T>
struct InferResult {
    Tensor<T> norm;          // H x W in [0,1]
    DepthMap<T> depth;       // metric
    ConditioningTokens<T> tokens;
};

// One full pass through the four stages: conditioning, encode+noise,
// denoiser features, depth head.
template <typename T>
InferResult<T> pipeline_infer(PipelineParams<T>& p, const Image<T>& img,
                              SegmenterBackend<T>& segmenter, EnhancerBackend<T>& enhancer,
                              Rng noise_rng, const DatasetProfile& profile,
                              const InferOptions<T>& opts = {}) {
    require_image(img, "pipeline_infer");

    // stage 1: semantic conditioning
    const Image<T> seg_input = opts.use_enhancement ? enhance(img, enhancer) : img;
    const SemanticContext<T> ctx = extract_semantic_context(seg_input, segmenter);
    const TextEmbedding<T> emb = context_to_embedding(ctx, p.embedding);
    ConditioningTokens<T> tokens =
        embed_to_tokens(emb, p.embedding, p.config.model.num_tokens, p.config.model.token_dim);
    if (opts.trace)
        opts.trace->push_back({{"stage", "conditioning"},
                               {"context_dim", ctx.logits.size()},
                               {"embedding_dim", emb.values.size()},
                               {"tokens", shape_json(tokens.tokens.shape)},
                               {"enhanced", opts.use_enhancement}});

    // stage 2: latent encode + forward noising
    LatentState<T> z0 = encode_image(img, p.autoencoder);
    Tensor<T> noise(z0.values.shape);
    for (auto& v : noise.data) v = static_cast<T>(noise_rng.normal());
    const int t_start = std::max(p.config.inference.t_infer, p.config.inference.reverse_steps);
    LatentState<T> zt = forward_noise_to(z0, t_start, p.schedule, noise);
    if (opts.trace)
        opts.trace->push_back({{"stage", "encode_noise"},
                               {"latent", shape_json(zt.values.shape)},
                               {"t", t_start}});

    // stage 3: denoiser feature extraction (single pass, or the iterative
    // reverse chain down to t=1 when reverse_steps > 1)
    FeaturePyramid<T> pyr;
    Tensor<T> eps;
    if (p.config.inference.reverse_steps <= 1) {
        auto out = predict_noise(zt, t_start, tokens, p.unet);
        eps = std::move(out.first);
        pyr = std::move(out.second);
    } else {
        LatentState<T> z = zt;
        for (int t = t_start; t >= 1; --t) {
            auto out = predict_noise(z, t, tokens, p.unet);
            eps = std::move(out.first);
            pyr = std::move(out.second);
            if (t > 1) {
                // deterministic reverse mean update (no ancestral noise)
                const double alpha = p.schedule.alpha(static_cast<std::size_t>(t - 1));
                const double abar = p.schedule.alpha_bar(static_cast<std::size_t>(t - 1));
                const double coeff = (1.0 - alpha) / std::sqrt(1.0 - abar);
                for (std::size_t i = 0; i < z.values.size(); ++i)
                    z.values[i] = static_cast<T>(
                        (static_cast<double>(z.values[i]) - coeff * static_cast<double>(eps[i])) /
                        std::sqrt(alpha));
                z.timestep = t - 1;
            }
        }
    }
    if (opts.trace) {
        nlohmann::ordered_json levels = nlohmann::ordered_json::array();
        for (const auto& l : pyr.levels) levels.push_back(shape_json(l.shape));
        opts.trace->push_back({{"stage", "denoise_features"},
                               {"eps", shape_json(eps.shape)},
                               {"pyramid", levels}});
    }

    // stage 4: depth regression
    InferResult<T> result;
    result.norm = decode_depth(pyr, p.head);
    result.depth = denormalize_depth(result.norm, profile.min_depth, profile.max_depth);
    result.tokens = std::move(tokens);
    if (opts.trace)
        opts.trace->push_back({{"stage", "depth_head"}, {"depth", shape_json(result.norm.shape)}});
    return result;
}

// ---- training ----

namespace detail {

template <typename T>
nn::ParamSet<T> trainable_main_params(PipelineParams<T>& p) {
    nn::ParamSet<T> set;
    p.embedding.collect_params("embedding", set);
    if (p.config.training.unet_trainable == "all") {
        p.unet.collect_params("unet", set);
    } else if (p.config.training.unet_trainable == "cross_attention") {
        p.unet.attn.collect_params("unet.attn", set);
    }
    p.head.collect_params("depth_head", set);
    return set;
}

template <typename T>
double autoencoder_l1(PipelineParams<T>& p, const Image<T>& img, Tensor<T>* g_out = nullptr) {
    const Tensor<T> chw = image_to_chw(img);
    const Tensor<T> latent = p.autoencoder.encode_fwd(chw);
    const Tensor<T> recon = p.autoencoder.decode_fwd(latent);
    double acc = 0.0;
    for (std::size_t i = 0; i < chw.size(); ++i)
        acc += std::abs(static_cast<double>(recon[i]) - static_cast<double>(chw[i]));
    const double loss = acc / static_cast<double>(chw.size());
    if (g_out) {
        *g_out = Tensor<T>(chw.shape);
        const T scale = static_cast<T>(1.0 / static_cast<double>(chw.size()));
        for (std::size_t i = 0; i < chw.size(); ++i) {
            const double d = static_cast<double>(recon[i]) - static_cast<double>(chw[i]);
            (*g_out)[i] = d > 0 ? scale : (d < 0 ? -scale : T{});
        }
    }
    return loss;
}

}  // namespace detail

struct TrainArtifacts {
    std::string checkpoint_path;
    std::string log_path;
    nlohmann::ordered_json log;
};

// Three-phase training: (1) the latent autoencoder on per-pixel L1, then
// frozen; (2) the toy segmenter on dominant-class cross-entropy over enhanced
// images, then frozen; (3) the conditioning MLP, U-Net, and depth head on
// SILog depth loss plus the optional noise-prediction auxiliary.
template <typename T>
TrainArtifacts train_pipeline(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const DatasetProfile profile = cfg.dataset.kind == "dir" && !cfg.dataset.path.empty() &&
                                           fs::exists(fs::path(cfg.dataset.path) / "profile.json")
                                       ? load_profile_json(cfg.dataset.path)
                                       : profile_by_name(cfg.dataset.profile);

    Corpus<T> data;
    if (cfg.dataset.kind == "synthetic") {
        data = corpus<T>(profile, cfg.dataset.count, cfg.seed ^ 0x5eedda7aull, cfg.dataset.width,
                         cfg.dataset.height);
    } else {
        auto samples = load_dataset_dir<T>(cfg.dataset.path, profile);
        // same hash-ordered 80/10/10 rule as the synthetic corpus
        std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
            const auto ha = fnv1a64(a.id), hb = fnv1a64(b.id);
            return ha != hb ? ha < hb : a.id < b.id;
        });
        const std::size_t n = samples.size(), n_train = n * 8 / 10, n_val = n * 9 / 10 - n_train;
        for (std::size_t i = 0; i < n; ++i) {
            if (i < n_train) data.train.push_back(std::move(samples[i]));
            else if (i < n_train + n_val) data.val.push_back(std::move(samples[i]));
            else data.test.push_back(std::move(samples[i]));
        }
    }
    if (data.train.empty()) throw validation_error("train: empty training split");

    PipelineParams<T> p = PipelineParams<T>::build(cfg);
    Rng root(cfg.seed);
    Rng init_rng = root.fork("init");
    p.init(init_rng);

    auto enhancer = make_enhancer<T>(cfg);
    nlohmann::ordered_json log;
    log["config"] = run_config_to_json(cfg);

    // ---- phase 1: autoencoder ----
    {
        nn::ParamSet<T> ae_params;
        p.autoencoder.collect_params("autoencoder", ae_params);
        nn::Adam<T> opt(cfg.training.autoencoder_lr);
        Rng order = root.fork("ae_order");
        nlohmann::ordered_json phase = nlohmann::ordered_json::array();
        for (std::size_t step = 0; step < cfg.training.autoencoder_steps; ++step) {
            nn::zero_grads(ae_params);
            double loss = 0.0;
            for (std::size_t b = 0; b < cfg.training.batch_size; ++b) {
                const auto& s = data.train[order.index(data.train.size())];
                Tensor<T> g;
                loss += detail::autoencoder_l1(p, s.image, &g);
                p.autoencoder.encode_bwd(p.autoencoder.decode_bwd(g));
            }
            loss /= static_cast<double>(cfg.training.batch_size);
            if (!std::isfinite(loss)) throw std::runtime_error("train: autoencoder loss diverged");
            for (auto& pr : ae_params)
                for (auto& g : pr.grad->data) g /= static_cast<T>(cfg.training.batch_size);
            opt.step(ae_params);
            if (step % cfg.training.log_every == 0)
                phase.push_back({{"step", step}, {"loss", loss}});
        }
        log["autoencoder"] = std::move(phase);
    }

    // ---- phase 2: toy segmenter on enhanced images ----
    {
        nn::ParamSet<T> seg_params;
        p.segmenter.collect_params("segmenter", seg_params);
        nn::Adam<T> opt(cfg.training.segmenter_lr);
        Rng order = root.fork("seg_order");
        nlohmann::ordered_json phase = nlohmann::ordered_json::array();
        bool have_labels = false;
        for (const auto& s : data.train) have_labels |= s.dominant_class >= 0;
        if (!have_labels && cfg.training.segmenter_steps > 0)
            throw validation_error("train: segmenter training needs dominant-class labels");
        for (std::size_t step = 0; step < cfg.training.segmenter_steps; ++step) {
            nn::zero_grads(seg_params);
            double loss = 0.0;
            for (std::size_t b = 0; b < cfg.training.batch_size; ++b) {
                const Sample<T>* s = &data.train[order.index(data.train.size())];
                while (s->dominant_class < 0) s = &data.train[order.index(data.train.size())];
                const Image<T> enhanced = enhance(s->image, *enhancer);
                const Tensor<T> logits = p.segmenter.forward(image_to_chw(enhanced));
                Tensor<T> g;
                loss += cross_entropy_loss(logits, static_cast<std::size_t>(s->dominant_class), &g);
                p.segmenter.backward(g);
            }
            loss /= static_cast<double>(cfg.training.batch_size);
            if (!std::isfinite(loss)) throw std::runtime_error("train: segmenter loss diverged");
            for (auto& pr : seg_params)
                for (auto& g : pr.grad->data) g /= static_cast<T>(cfg.training.batch_size);
            opt.step(seg_params);
            if (step % cfg.training.log_every == 0)
                phase.push_back({{"step", step}, {"loss", loss}});
        }
        log["segmenter"] = std::move(phase);
    }

    // ---- phase 3: conditioning + denoiser + depth head ----
    {
        nn::ParamSet<T> main_params = detail::trainable_main_params(p);
        nn::Adam<T> opt(cfg.training.learning_rate);
        Rng order = root.fork("main_order");
        Rng noise_rng = root.fork("main_noise");
        Rng t_rng = root.fork("main_t");
        nlohmann::ordered_json phase = nlohmann::ordered_json::array();
        const double span = profile.max_depth - profile.min_depth;

        for (std::size_t step = 0; step < cfg.training.steps; ++step) {
            nn::zero_grads(main_params);
            double silog_sum = 0.0, ldm_sum = 0.0;
            for (std::size_t b = 0; b < cfg.training.batch_size; ++b) {
                const auto& s = data.train[order.index(data.train.size())];

                // conditioning chain (segmenter frozen, MLP trained)
                const Image<T> enhanced = enhance(s.image, *enhancer);
                const SemanticContext<T> ctx = extract_semantic_context(enhanced, p.segmenter);
                const TextEmbedding<T> emb = context_to_embedding(ctx, p.embedding);
                ConditioningTokens<T> tokens =
                    embed_to_tokens(emb, p.embedding, cfg.model.num_tokens, cfg.model.token_dim);

                // frozen encoder + forward noising at the inference timestep
                LatentState<T> z0 = encode_image(s.image, p.autoencoder);
                Tensor<T> noise(z0.values.shape);
                for (auto& v : noise.data) v = static_cast<T>(noise_rng.normal());
                LatentState<T> zt = forward_noise_to(z0, cfg.inference.t_infer, p.schedule, noise);

                FeaturePyramid<T> pyr;
                Tensor<T> eps = p.unet.forward_eps(zt.values, cfg.inference.t_infer, tokens.tokens, pyr);
                Tensor<T> norm = p.head.forward(pyr);

                // SILog on metric depth
                Tensor<T> pred(norm.shape);
                for (std::size_t i = 0; i < norm.size(); ++i)
                    pred[i] = static_cast<T>(profile.min_depth + static_cast<double>(norm[i]) * span);
                Tensor<T> g_pred;
                silog_sum += silog_loss(pred, s.depth.values, s.depth.valid_mask, &g_pred,
                                        cfg.training.silog_variance_weight);
                Tensor<T> g_norm(norm.shape);
                for (std::size_t i = 0; i < norm.size(); ++i)
                    g_norm[i] = static_cast<T>(static_cast<double>(g_pred[i]) * span);

                const std::vector<Tensor<T>> g_taps = p.head.backward(g_norm);
                Tensor<T> g_eps(eps.shape);  // zero: the depth loss does not touch eps
                Tensor<T> g_tokens;
                p.unet.backward_eps(g_eps, g_taps, g_tokens);
                Tensor<T> g_emb = embed_to_tokens_backward(g_tokens, p.embedding);
                context_to_embedding_backward(g_emb, p.embedding);

                // optional auxiliary noise-prediction objective at a random t
                if (cfg.training.ldm_loss_weight > 0.0) {
                    const int t_aux = 1 + static_cast<int>(t_rng.index(cfg.schedule.num_steps));
                    Tensor<T> eps_true(z0.values.shape);
                    for (auto& v : eps_true.data) v = static_cast<T>(noise_rng.normal());
                    LatentState<T> zt2 = forward_noise_to(z0, t_aux, p.schedule, eps_true);
                    ConditioningTokens<T> tokens2 =
                        embed_to_tokens(context_to_embedding(ctx, p.embedding), p.embedding,
                                        cfg.model.num_tokens, cfg.model.token_dim);
                    FeaturePyramid<T> pyr2;
                    Tensor<T> eps_hat = p.unet.forward_eps(zt2.values, t_aux, tokens2.tokens, pyr2);
                    ldm_sum += ldm_loss(eps_hat, eps_true);
                    Tensor<T> g2 = ldm_loss_grad(eps_hat, eps_true);
                    for (auto& v : g2.data) v *= static_cast<T>(cfg.training.ldm_loss_weight);
                    Tensor<T> g_tokens2;
                    p.unet.backward_eps(g2, {}, g_tokens2);
                    Tensor<T> g_emb2 = embed_to_tokens_backward(g_tokens2, p.embedding);
                    context_to_embedding_backward(g_emb2, p.embedding);
                }
            }
            const double batch = static_cast<double>(cfg.training.batch_size);
            const double silog = silog_sum / batch;
            const double ldm = ldm_sum / batch;
            const double total = silog + cfg.training.ldm_loss_weight * ldm;
            if (!std::isfinite(total)) throw std::runtime_error("train: loss diverged");
            for (auto& pr : main_params)
                for (auto& g : pr.grad->data) g /= static_cast<T>(batch);
            opt.step(main_params);
            if (step % cfg.training.log_every == 0)
                phase.push_back({{"step", step}, {"silog", silog}, {"ldm", ldm}, {"loss", total}});
        }
        log["main"] = std::move(phase);
    }

    // ---- held-out diagnostics ----
    {
        nlohmann::ordered_json final;
        const auto& held = data.val.empty() ? data.train : data.val;
        double ae_l1 = 0.0;
        for (const auto& s : held) ae_l1 += detail::autoencoder_l1(p, s.image);
        final["autoencoder_val_l1"] = ae_l1 / static_cast<double>(held.size());

        std::size_t correct = 0, labeled = 0;
        for (const auto& s : held) {
            if (s.dominant_class < 0) continue;
            const Image<T> enhanced = enhance(s.image, *enhancer);
            const Tensor<T> logits = p.segmenter.forward(image_to_chw(enhanced));
            std::size_t arg = 0;
            for (std::size_t c = 1; c < logits.size(); ++c)
                if (logits[c] > logits[arg]) arg = c;
            correct += arg == static_cast<std::size_t>(s.dominant_class);
            ++labeled;
        }
        final["segmenter_val_accuracy"] =
            labeled ? static_cast<double>(correct) / static_cast<double>(labeled) : -1.0;
        final["train_samples"] = data.train.size();
        final["val_samples"] = data.val.size();
        final["test_samples"] = data.test.size();
        log["final"] = std::move(final);
    }

    fs::create_directories(cfg.output.dir);
    TrainArtifacts art;
    art.checkpoint_path = (fs::path(cfg.output.dir) / "checkpoint.ddc").string();
    art.log_path = (fs::path(cfg.output.dir) / "training_log.json").string();
    save_pipeline_checkpoint(art.checkpoint_path, p);
    std::ofstream(art.log_path) << log.dump(2) << "\n";
    art.log = std::move(log);
    return art;
}

// ---- evaluation ----

template <typename T>
struct EvaluateResult {
    MetricReport pooled;
    nlohmann::ordered_json per_sample;  // array of {id, metrics}
};

// Pixel-weighted aggregation: one accumulator pass over every masked pixel of
// every sample, exactly equal to pooling all pixels first.
template <typename T>
EvaluateResult<T> evaluate_samples(PipelineParams<T>& p, const std::vector<Sample<T>>& samples,
                                   const DatasetProfile& profile, SegmenterBackend<T>& segmenter,
                                   EnhancerBackend<T>& enhancer, std::uint64_t seed,
                                   bool oracle_bypass = false) {
    if (samples.empty()) throw validation_error("evaluate: empty dataset");
    MetricAccumulator pooled;
    EvaluateResult<T> result;
    result.per_sample = nlohmann::ordered_json::array();
    Rng root(seed);
    for (const auto& s : samples) {
        DepthMap<T> pred;
        if (oracle_bypass) {
            pred = s.depth;
        } else {
            const auto out = pipeline_infer(p, s.image, segmenter, enhancer,
                                            root.fork("eval_noise:" + s.id), profile);
            pred = out.depth;
        }
        pooled.add_map(pred, s.depth, profile.min_depth, profile.max_depth);
        const MetricReport r = compute_metrics(pred, s.depth, profile.min_depth, profile.max_depth);
        nlohmann::ordered_json row;
        row["id"] = s.id;
        row["metrics"] = metric_report_to_json(r);
        result.per_sample.push_back(std::move(row));
    }
    result.pooled = pooled.finalize();
    return result;
}

// ---- enhancement comparison ----

template <typename T>
nlohmann::ordered_json compare_enhancement_run(PipelineParams<T>& p,
                                               const std::vector<Sample<T>>& samples,
                                               SegmenterBackend<T>& segmenter,
                                               EnhancerBackend<T>& enhancer,
                                               const std::string& out_dir,
                                               double frozen_threshold = 0.70) {
    namespace fs = std::filesystem;
    if (samples.empty()) throw validation_error("compare-enhancement: empty dataset");
    if (!out_dir.empty()) fs::create_directories(out_dir);

    std::size_t ge_count = 0, compared = 0, total_flips = 0;
    nlohmann::ordered_json per_image = nlohmann::ordered_json::array();
    for (const auto& s : samples) {
        // compare on the downscaled image so both 2x paths reconstruct detail
        const Image<T> small = bilinear_resize(s.image, 0.5);
        VariantReport<T> rep = class_probability_report(small, segmenter, enhancer);
        rep.class_names = synthetic_class_names();
        if (!out_dir.empty())
            std::ofstream(fs::path(out_dir) / (s.id + ".json")) << variant_report_to_json(rep).dump(2) << "\n";
        total_flips += rep.flip_events.size();

        int dominant = s.dominant_class;
        if (dominant < 0) {
            const auto& orig = rep.probabilities.at("original");
            dominant = 0;
            for (std::size_t c = 1; c < orig.size(); ++c)
                if (orig[c] > orig[static_cast<std::size_t>(dominant)]) dominant = static_cast<int>(c);
        }
        const double p_resized = rep.probabilities.at("resized")[static_cast<std::size_t>(dominant)];
        const double p_sr = rep.probabilities.at("super_resolved")[static_cast<std::size_t>(dominant)];
        ge_count += p_sr >= p_resized;
        ++compared;
        per_image.push_back({{"id", s.id},
                             {"dominant_class", dominant},
                             {"p_resized", p_resized},
                             {"p_super_resolved", p_sr},
                             {"flip_events", rep.flip_events.size()}});
    }
    const double fraction = static_cast<double>(ge_count) / static_cast<double>(compared);
    nlohmann::ordered_json summary;
    summary["images"] = compared;
    summary["dominant_class_ge_fraction"] = fraction;
    summary["threshold"] = frozen_threshold;
    summary["threshold_met"] = fraction >= frozen_threshold;
    summary["total_flip_events"] = total_flips;
    summary["per_image"] = std::move(per_image);
    if (!out_dir.empty()) std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << "\n";
    return summary;
}

}  // namespace diffdepth
