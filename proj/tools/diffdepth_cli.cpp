// Command-line front end: train / evaluate / infer / compare-enhancement
// subcommands plus a synthetic-corpus generator. Exit codes: 0 success,
// 1 validation error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "diffdepth/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace diffdepth;

using Scalar = double;

namespace {

int cmd_train(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    const TrainArtifacts art = train_pipeline<Scalar>(cfg);
    std::cout << "checkpoint: " << art.checkpoint_path << "\n";
    std::cout << "training_log: " << art.log_path << "\n";
    const auto& final = art.log.at("final");
    std::cout << "autoencoder_val_l1: " << final.at("autoencoder_val_l1").dump() << "\n";
    std::cout << "segmenter_val_accuracy: " << final.at("segmenter_val_accuracy").dump() << "\n";
    return 0;
}

DatasetProfile resolve_profile(const std::string& data_dir, const std::string& profile_flag) {
    if (!profile_flag.empty()) return profile_by_name(profile_flag);
    if (fs::exists(fs::path(data_dir) / "profile.json")) return load_profile_json(data_dir);
    throw validation_error("evaluate: no --profile given and no profile.json in " + data_dir);
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_dir,
                 const std::string& profile_flag, const std::string& out_dir,
                 const std::string& from_report, bool oracle, std::uint64_t seed, bool seed_set) {
    TableStyle style = TableStyle::log10;
    if (profile_flag == "kitti") style = TableStyle::rmse_log;

    if (!from_report.empty()) {
        std::ifstream in(from_report);
        if (!in) throw validation_error("evaluate: cannot open report " + from_report);
        nlohmann::json j;
        in >> j;
        const MetricReport r = metric_report_from_json(j);
        const std::string method = j.contains("method") ? j.at("method").get<std::string>() : "stored-report";
        const std::string table = render_metric_table({{method, r}}, style);
        std::cout << table;
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            std::ofstream(fs::path(out_dir) / "report.txt") << table;
            std::ofstream(fs::path(out_dir) / "report.json") << metric_report_to_json(r).dump(2) << "\n";
        }
        return 0;
    }

    if (data_dir.empty()) throw validation_error("evaluate: --data is required");
    const DatasetProfile profile = resolve_profile(data_dir, profile_flag);
    if (profile.name == "kitti") style = TableStyle::rmse_log;
    const auto samples = load_dataset_dir<Scalar>(data_dir, profile);

    PipelineParams<Scalar> p;
    if (oracle) {
        // ground truth scored against itself; no checkpoint needed
        RunConfig cfg;
        cfg.seed = seed_set ? seed : 0;
        p = PipelineParams<Scalar>::build(cfg);
    } else {
        if (checkpoint.empty()) throw validation_error("evaluate: --checkpoint is required");
        p = load_pipeline_checkpoint<Scalar>(checkpoint);
    }
    auto seg = make_segmenter(p);
    auto enh = make_enhancer<Scalar>(p.config);
    const std::uint64_t eval_seed = seed_set ? seed : p.config.seed;
    const auto result = evaluate_samples(p, samples, profile, *seg.ptr, *enh, eval_seed, oracle);

    const std::string table = render_metric_table({{"evaluation", result.pooled}}, style);
    std::cout << table;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "report.txt") << table;
        std::ofstream(fs::path(out_dir) / "report.json")
            << metric_report_to_json(result.pooled).dump(2) << "\n";
        std::ofstream(fs::path(out_dir) / "per_sample.json") << result.per_sample.dump(2) << "\n";
    }
    return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& image_path,
              const std::string& out_dir, bool want_ply, bool no_enhance, std::uint64_t seed,
              bool seed_set, const std::string& trace_path) {
    PipelineParams<Scalar> p = load_pipeline_checkpoint<Scalar>(checkpoint);
    if (!fs::exists(image_path)) throw validation_error("infer: missing image " + image_path);
    const Image<Scalar> img = io::read_png_rgb8<Scalar>(image_path);
    if (img.dim(0) % p.config.model.downsample_factor || img.dim(1) % p.config.model.downsample_factor)
        throw validation_error("infer: image dims must be divisible by the latent downsample factor");

    const DatasetProfile profile = profile_by_name(p.config.dataset.profile);
    auto seg = make_segmenter(p);
    auto enh = make_enhancer<Scalar>(p.config);

    Trace trace = Trace::array();
    InferOptions<Scalar> opts;
    opts.use_enhancement = !no_enhance;
    opts.trace = trace_path.empty() ? nullptr : &trace;

    const std::uint64_t noise_seed = seed_set ? seed : p.config.seed;
    const auto result = pipeline_infer(p, img, *seg.ptr, *enh, Rng(noise_seed).fork("infer_noise"),
                                       profile, opts);

    fs::create_directories(out_dir);
    const std::string depth_path = (fs::path(out_dir) / "depth.png").string();
    const std::string color_path = (fs::path(out_dir) / "depth_color.png").string();
    save_depth_png(depth_path, result.depth, profile.depth_png_scale);
    io::write_png_rgb8(color_path, colorize(result.depth));
    std::cout << "depth: " << depth_path << "\n";
    std::cout << "colorized: " << color_path << "\n";
    if (want_ply) {
        CameraIntrinsics k = p.config.intrinsics;
        if (!(k.fx > 0.0)) k = default_intrinsics(img.dim(1), img.dim(0));
        const auto pc = backproject(result.depth, img, k);
        const std::string ply_path = (fs::path(out_dir) / "cloud.ply").string();
        write_ply(pc, ply_path);
        std::cout << "pointcloud: " << ply_path << "\n";
    }
    if (!trace_path.empty()) {
        std::ofstream(trace_path) << trace.dump(2) << "\n";
        std::cout << "trace: " << trace_path << "\n";
    }
    return 0;
}

int cmd_compare(const std::string& data_dir, const std::string& config_path,
                const std::string& checkpoint, const std::string& out_dir) {
    PipelineParams<Scalar> p;
    if (!checkpoint.empty()) {
        p = load_pipeline_checkpoint<Scalar>(checkpoint);
    } else {
        const RunConfig cfg = load_run_config(config_path);
        p = PipelineParams<Scalar>::build(cfg);
        Rng root(cfg.seed);
        Rng init_rng = root.fork("init");
        p.init(init_rng);
    }
    DatasetProfile profile = profile_by_name(p.config.dataset.profile);
    if (fs::exists(fs::path(data_dir) / "profile.json")) profile = load_profile_json(data_dir);
    const auto samples = load_dataset_dir<Scalar>(data_dir, profile);
    auto seg = make_segmenter(p);
    auto enh = make_enhancer<Scalar>(p.config);
    const auto summary = compare_enhancement_run(p, samples, *seg.ptr, *enh, out_dir);
    std::cout << "images: " << summary.at("images").dump() << "\n";
    std::cout << "dominant_class_ge_fraction: " << summary.at("dominant_class_ge_fraction").dump() << "\n";
    std::cout << "threshold_met: " << summary.at("threshold_met").dump() << "\n";
    std::cout << "summary: " << (fs::path(out_dir) / "summary.json").string() << "\n";
    return 0;
}

int cmd_synth(const std::string& out_dir, std::size_t count, std::uint64_t seed, std::size_t width,
              std::size_t height) {
    const DatasetProfile profile = synthetic_profile(width, height);
    const auto c = corpus<Scalar>(profile, count, seed, width, height);
    write_dataset_dir((fs::path(out_dir) / "train").string(), c.train, profile);
    write_dataset_dir((fs::path(out_dir) / "val").string(), c.val, profile);
    write_dataset_dir((fs::path(out_dir) / "test").string(), c.test, profile);
    std::cout << "train: " << c.train.size() << " val: " << c.val.size()
              << " test: " << c.test.size() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-diffusion monocular depth estimation pipeline"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, data_dir, profile_flag, out_dir, image_path;
    std::string from_report, trace_path;
    bool oracle = false, want_ply = false, no_enhance = false;
    std::uint64_t seed = 0;
    std::size_t count = 200, width = 64, height = 64;

    auto* train = app.add_subcommand("train", "train the pipeline from a run config");
    train->add_option("--config", config_path, "run config JSON")->required();

    auto* evaluate = app.add_subcommand("evaluate", "run metrics over a dataset directory");
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint file");
    evaluate->add_option("--data", data_dir, "dataset directory");
    evaluate->add_option("--profile", profile_flag, "nyu | kitti | synthetic");
    evaluate->add_option("--out", out_dir, "output directory for reports");
    evaluate->add_option("--from-report", from_report, "render a stored MetricReport JSON");
    evaluate->add_flag("--oracle", oracle, "score ground truth against itself");
    auto* eval_seed = evaluate->add_option("--seed", seed, "noise seed override");

    auto* infer = app.add_subcommand("infer", "estimate depth for one image");
    infer->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    infer->add_option("--image", image_path, "input RGB PNG")->required();
    infer->add_option("--out", out_dir, "output directory")->default_val("infer_out");
    infer->add_flag("--ply", want_ply, "also write a point cloud");
    infer->add_flag("--no-enhance", no_enhance, "skip the 2x enhancement stage");
    auto* infer_seed = infer->add_option("--seed", seed, "noise seed");
    infer->add_option("--trace", trace_path, "write the stage trace JSON here");

    auto* compare = app.add_subcommand("compare-enhancement",
                                       "class-probability comparison across enhancement variants");
    compare->add_option("--data", data_dir, "dataset directory")->required();
    compare->add_option("--config", config_path, "run config JSON");
    compare->add_option("--checkpoint", checkpoint, "use a trained checkpoint instead of --config");
    compare->add_option("--out", out_dir, "output directory")->default_val("compare_out");

    auto* synth = app.add_subcommand("synth", "materialize a synthetic corpus to disk");
    synth->add_option("--out", out_dir, "output root directory")->required();
    synth->add_option("--count", count, "number of scenes")->default_val(200);
    synth->add_option("--seed", seed, "corpus seed")->default_val(0);
    synth->add_option("--width", width, "image width")->default_val(64);
    synth->add_option("--height", height, "image height")->default_val(64);

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(config_path);
        if (evaluate->parsed())
            return cmd_evaluate(checkpoint, data_dir, profile_flag, out_dir, from_report, oracle,
                                seed, !eval_seed->empty());
        if (infer->parsed())
            return cmd_infer(checkpoint, image_path, out_dir, want_ply, no_enhance, seed,
                             !infer_seed->empty(), trace_path);
        if (compare->parsed()) {
            if (checkpoint.empty() && config_path.empty())
                throw validation_error("compare-enhancement: need --config or --checkpoint");
            return cmd_compare(data_dir, config_path, checkpoint, out_dir);
        }
        if (synth->parsed()) return cmd_synth(out_dir, count, seed, width, height);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
