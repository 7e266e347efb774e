#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "diffdepth/data/dataset.hpp"

namespace diffdepth {

// Raised for bad configs, bad flags, and malformed inputs; the CLI maps it to
// exit code 1 (runtime failures map to 2).
class validation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | dir
    std::string profile = "synthetic";
    std::string path;
    std::size_t count = 200;
    std::size_t width = 64, height = 64;
};

struct ScheduleConfig {
    std::string kind = "linear";
    std::size_t num_steps = 50;
    double beta_start = 0.00085;
    double beta_end = 0.012;
};

struct ModelConfig {
    std::size_t latent_channels = 4;
    std::size_t autoencoder_base = 16;
    std::size_t downsample_factor = 4;
    std::size_t unet_base = 32;
    std::size_t unet_levels = 2;
    std::size_t num_tokens = 4;
    std::size_t token_dim = 64;
    std::size_t mlp_hidden = 256;
    std::size_t head_width = 16;
};

struct TrainingConfig {
    std::size_t autoencoder_steps = 500;
    std::size_t segmenter_steps = 400;
    std::size_t steps = 1200;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    double autoencoder_lr = 2e-3;
    double segmenter_lr = 2e-3;
    double ldm_loss_weight = 0.0;  // weight of the auxiliary noise objective
    double silog_variance_weight = 0.85;
    std::string unet_trainable = "all";  // all | cross_attention | none
    std::size_t log_every = 1;
};

struct InferenceConfig {
    int t_infer = 1;
    int reverse_steps = 1;  // >1 runs the iterative reverse chain down to t=1
};

struct BackendConfig {
    std::string backend;  // enhancement: bilinear2x | external-adapter; segmenter: toy | external-adapter
    std::string exchange_dir;
    std::string command;
};

struct OutputConfig {
    std::string dir = "run_out";
};

struct RunConfig {
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    ScheduleConfig schedule;
    ModelConfig model;
    TrainingConfig training;
    InferenceConfig inference;
    BackendConfig enhancement{"bilinear2x", "", ""};
    BackendConfig segmenter{"toy", "", ""};
    OutputConfig output;
    CameraIntrinsics intrinsics{0, 0, 0, 0};  // zeros = derive from image size
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key))
            throw validation_error("config: unknown key \"" + key + "\" in " + where);
    }
}

template <typename V>
void get_if(const nlohmann::json& j, const char* key, V& out) {
    if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig c;
    detail::require_keys(j, {"seed", "dataset", "schedule", "model", "training", "inference",
                             "enhancement", "segmenter", "output", "intrinsics"},
                         "top level");
    if (!j.contains("seed")) throw validation_error("config: \"seed\" is mandatory");
    c.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::require_keys(d, {"kind", "profile", "path", "count", "width", "height"}, "dataset");
        detail::get_if(d, "kind", c.dataset.kind);
        detail::get_if(d, "profile", c.dataset.profile);
        detail::get_if(d, "path", c.dataset.path);
        detail::get_if(d, "count", c.dataset.count);
        detail::get_if(d, "width", c.dataset.width);
        detail::get_if(d, "height", c.dataset.height);
        if (c.dataset.kind != "synthetic" && c.dataset.kind != "dir")
            throw validation_error("config: dataset.kind must be synthetic or dir");
        if (c.dataset.kind == "dir" && c.dataset.path.empty())
            throw validation_error("config: dataset.path required for kind dir");
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::require_keys(s, {"kind", "num_steps", "beta_start", "beta_end"}, "schedule");
        detail::get_if(s, "kind", c.schedule.kind);
        detail::get_if(s, "num_steps", c.schedule.num_steps);
        detail::get_if(s, "beta_start", c.schedule.beta_start);
        detail::get_if(s, "beta_end", c.schedule.beta_end);
        if (c.schedule.kind != "linear") throw validation_error("config: schedule.kind must be linear");
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::require_keys(m,
                             {"latent_channels", "autoencoder_base", "downsample_factor", "unet_base",
                              "unet_levels", "num_tokens", "token_dim", "mlp_hidden", "head_width"},
                             "model");
        detail::get_if(m, "latent_channels", c.model.latent_channels);
        detail::get_if(m, "autoencoder_base", c.model.autoencoder_base);
        detail::get_if(m, "downsample_factor", c.model.downsample_factor);
        detail::get_if(m, "unet_base", c.model.unet_base);
        detail::get_if(m, "unet_levels", c.model.unet_levels);
        detail::get_if(m, "num_tokens", c.model.num_tokens);
        detail::get_if(m, "token_dim", c.model.token_dim);
        detail::get_if(m, "mlp_hidden", c.model.mlp_hidden);
        detail::get_if(m, "head_width", c.model.head_width);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        detail::require_keys(t,
                             {"autoencoder_steps", "segmenter_steps", "steps", "batch_size",
                              "learning_rate", "autoencoder_lr", "segmenter_lr", "ldm_loss_weight",
                              "silog_variance_weight", "unet_trainable", "log_every"},
                             "training");
        detail::get_if(t, "autoencoder_steps", c.training.autoencoder_steps);
        detail::get_if(t, "segmenter_steps", c.training.segmenter_steps);
        detail::get_if(t, "steps", c.training.steps);
        detail::get_if(t, "batch_size", c.training.batch_size);
        detail::get_if(t, "learning_rate", c.training.learning_rate);
        detail::get_if(t, "autoencoder_lr", c.training.autoencoder_lr);
        detail::get_if(t, "segmenter_lr", c.training.segmenter_lr);
        detail::get_if(t, "ldm_loss_weight", c.training.ldm_loss_weight);
        detail::get_if(t, "silog_variance_weight", c.training.silog_variance_weight);
        detail::get_if(t, "unet_trainable", c.training.unet_trainable);
        detail::get_if(t, "log_every", c.training.log_every);
        if (c.training.unet_trainable != "all" && c.training.unet_trainable != "cross_attention" &&
            c.training.unet_trainable != "none")
            throw validation_error("config: training.unet_trainable must be all, cross_attention, or none");
        if (c.training.ldm_loss_weight < 0.0)
            throw validation_error("config: training.ldm_loss_weight must be >= 0");
        if (c.training.batch_size < 1) throw validation_error("config: training.batch_size must be >= 1");
    }
    if (j.contains("inference")) {
        const auto& i = j.at("inference");
        detail::require_keys(i, {"t_infer", "reverse_steps"}, "inference");
        detail::get_if(i, "t_infer", c.inference.t_infer);
        detail::get_if(i, "reverse_steps", c.inference.reverse_steps);
        if (c.inference.t_infer < 1 || static_cast<std::size_t>(c.inference.t_infer) > c.schedule.num_steps)
            throw validation_error("config: inference.t_infer out of schedule range");
        if (c.inference.reverse_steps < 1 ||
            static_cast<std::size_t>(c.inference.reverse_steps) > c.schedule.num_steps)
            throw validation_error("config: inference.reverse_steps out of schedule range");
    }
    auto parse_backend = [&](const char* key, BackendConfig& out, const std::set<std::string>& kinds) {
        if (!j.contains(key)) return;
        const auto& b = j.at(key);
        detail::require_keys(b, {"backend", "exchange_dir", "command"}, key);
        detail::get_if(b, "backend", out.backend);
        detail::get_if(b, "exchange_dir", out.exchange_dir);
        detail::get_if(b, "command", out.command);
        if (!kinds.count(out.backend))
            throw validation_error(std::string("config: unknown ") + key + " backend \"" + out.backend + "\"");
        if (out.backend == "external-adapter" && out.exchange_dir.empty())
            throw validation_error(std::string("config: ") + key + ".exchange_dir required for external-adapter");
    };
    parse_backend("enhancement", c.enhancement, {"bilinear2x", "external-adapter"});
    parse_backend("segmenter", c.segmenter, {"toy", "external-adapter"});
    if (j.contains("output")) {
        detail::require_keys(j.at("output"), {"dir"}, "output");
        detail::get_if(j.at("output"), "dir", c.output.dir);
    }
    if (j.contains("intrinsics")) {
        const auto& k = j.at("intrinsics");
        detail::require_keys(k, {"fx", "fy", "cx", "cy"}, "intrinsics");
        detail::get_if(k, "fx", c.intrinsics.fx);
        detail::get_if(k, "fy", c.intrinsics.fy);
        detail::get_if(k, "cx", c.intrinsics.cx);
        detail::get_if(k, "cy", c.intrinsics.cy);
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("config: invalid JSON in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
    return nlohmann::ordered_json{
        {"seed", c.seed},
        {"dataset",
         {{"kind", c.dataset.kind},
          {"profile", c.dataset.profile},
          {"path", c.dataset.path},
          {"count", c.dataset.count},
          {"width", c.dataset.width},
          {"height", c.dataset.height}}},
        {"schedule",
         {{"kind", c.schedule.kind},
          {"num_steps", c.schedule.num_steps},
          {"beta_start", c.schedule.beta_start},
          {"beta_end", c.schedule.beta_end}}},
        {"model",
         {{"latent_channels", c.model.latent_channels},
          {"autoencoder_base", c.model.autoencoder_base},
          {"downsample_factor", c.model.downsample_factor},
          {"unet_base", c.model.unet_base},
          {"unet_levels", c.model.unet_levels},
          {"num_tokens", c.model.num_tokens},
          {"token_dim", c.model.token_dim},
          {"mlp_hidden", c.model.mlp_hidden},
          {"head_width", c.model.head_width}}},
        {"training",
         {{"autoencoder_steps", c.training.autoencoder_steps},
          {"segmenter_steps", c.training.segmenter_steps},
          {"steps", c.training.steps},
          {"batch_size", c.training.batch_size},
          {"learning_rate", c.training.learning_rate},
          {"autoencoder_lr", c.training.autoencoder_lr},
          {"segmenter_lr", c.training.segmenter_lr},
          {"ldm_loss_weight", c.training.ldm_loss_weight},
          {"silog_variance_weight", c.training.silog_variance_weight},
          {"unet_trainable", c.training.unet_trainable},
          {"log_every", c.training.log_every}}},
        {"inference", {{"t_infer", c.inference.t_infer}, {"reverse_steps", c.inference.reverse_steps}}},
        {"enhancement",
         {{"backend", c.enhancement.backend},
          {"exchange_dir", c.enhancement.exchange_dir},
          {"command", c.enhancement.command}}},
        {"segmenter",
         {{"backend", c.segmenter.backend},
          {"exchange_dir", c.segmenter.exchange_dir},
          {"command", c.segmenter.command}}},
        {"output", {{"dir", c.output.dir}}},
        {"intrinsics",
         {{"fx", c.intrinsics.fx}, {"fy", c.intrinsics.fy}, {"cx", c.intrinsics.cx}, {"cy", c.intrinsics.cy}}}};
}

}  // namespace diffdepth
