#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffdepth/core/image.hpp"
#include "diffdepth/embedding/embedding.hpp"
#include "diffdepth/io/png.hpp"

namespace diffdepth {

// Bilinear resampling with half-pixel-center alignment: output pixel j reads
// source coordinate (j + 0.5) / scale - 0.5, clamped at the borders.
template <typename T>
Image<T> bilinear_resize(const Image<T>& img, double scale) {
    require_image(img, "bilinear_resize");
    if (!(scale > 0.0)) throw std::invalid_argument("bilinear_resize: scale must be positive");
    const std::size_t h = img.dim(0), w = img.dim(1);
    const std::size_t ho = static_cast<std::size_t>(std::llround(h * scale));
    const std::size_t wo = static_cast<std::size_t>(std::llround(w * scale));
    if (ho < 1 || wo < 1) throw std::invalid_argument("bilinear_resize: degenerate output size");

    Image<T> out({ho, wo, 3});
    for (std::size_t yo = 0; yo < ho; ++yo) {
        const double sy = (static_cast<double>(yo) + 0.5) / scale - 0.5;
        const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = cy - static_cast<double>(y0);
        for (std::size_t xo = 0; xo < wo; ++xo) {
            const double sx = (static_cast<double>(xo) + 0.5) / scale - 0.5;
            const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = cx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v00 = static_cast<double>(img(y0, x0, c));
                const double v01 = static_cast<double>(img(y0, x1, c));
                const double v10 = static_cast<double>(img(y1, x0, c));
                const double v11 = static_cast<double>(img(y1, x1, c));
                const double top = v00 + (v01 - v00) * fx;
                const double bot = v10 + (v11 - v10) * fx;
                out(yo, xo, c) = static_cast<T>(top + (bot - top) * fy);
            }
        }
    }
    return out;
}

// ---- enhancer backends (2x super-resolution stage) ----

template <typename T>
class EnhancerBackend {
public:
    virtual ~EnhancerBackend() = default;
    virtual Image<T> upscale2x(const Image<T>& img) = 0;
    virtual std::string name() const = 0;
};

template <typename T>
class BilinearEnhancer : public EnhancerBackend<T> {
public:
    Image<T> upscale2x(const Image<T>& img) override { return bilinear_resize(img, 2.0); }
    std::string name() const override { return "bilinear2x"; }
};

// Directory exchange: input.png in, output.png (2H x 2W) out, with an
// optional command run in between.
template <typename T>
class ExternalEnhancerAdapter : public EnhancerBackend<T> {
public:
    ExternalEnhancerAdapter(std::string exchange_dir, std::string command = {})
        : dir_(std::move(exchange_dir)), command_(std::move(command)) {}

    Image<T> upscale2x(const Image<T>& img) override {
        io::write_png_rgb8(dir_ + "/input.png", img);
        if (!command_.empty()) {
            const int rc = std::system(command_.c_str());
            if (rc != 0)
                throw std::runtime_error("external enhancer command failed with status " + std::to_string(rc));
        }
        return io::read_png_rgb8<T>(dir_ + "/output.png");
    }

    std::string name() const override { return "external-adapter"; }

private:
    std::string dir_;
    std::string command_;
};

// Applies the 2x enhancer and enforces the output contract (exact 2H x 2W,
// values clamped into [0,1]). Out-of-range entries are counted, not rejected,
// since external super-resolvers commonly overshoot.
template <typename T>
Image<T> enhance(const Image<T>& img, EnhancerBackend<T>& enhancer, std::size_t* clamped_count = nullptr) {
    require_image(img, "enhance");
    Image<T> out = enhancer.upscale2x(img);
    require_image(out, "enhance (backend output)");
    if (out.dim(0) != 2 * img.dim(0) || out.dim(1) != 2 * img.dim(1))
        throw std::runtime_error("enhance: backend returned " + shape_string(out.shape) +
                                 ", expected exactly 2x spatial dims");
    const std::size_t clamped = clamp01(out);
    if (clamped_count) *clamped_count = clamped;
    return out;
}

// ---- class-probability comparison report ----

struct FlipEvent {
    std::string pair;  // e.g. "resized->super_resolved"
    std::string class_name;
    int rank_from = 0;
    int rank_to = 0;
};

// Per-variant class probabilities (softmax of pooled logits) plus the rank
// changes observed between variants.
template <typename T>
struct VariantReport {
    std::map<std::string, std::vector<T>> probabilities;  // variant -> 150 probs
    std::vector<std::string> class_names;
    std::vector<FlipEvent> flip_events;
};

template <typename T>
std::vector<T> softmax_probs(const Tensor<T>& logits) {
    T mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    std::vector<T> probs(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = static_cast<T>(std::exp(static_cast<double>(logits[i] - mx)));
        sum += static_cast<double>(probs[i]);
    }
    for (auto& p : probs) p = static_cast<T>(static_cast<double>(p) / sum);
    return probs;
}

namespace detail {

template <typename T>
std::vector<int> rank_of_class(const std::vector<T>& probs) {
    std::vector<std::size_t> order(probs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&probs](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    std::vector<int> rank(probs.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);
    return rank;
}

template <typename T>
void collect_flips(const std::string& pair, const std::vector<T>& a, const std::vector<T>& b,
                   const std::vector<std::string>& names, std::vector<FlipEvent>& out) {
    const std::vector<int> ra = rank_of_class(a);
    const std::vector<int> rb = rank_of_class(b);
    for (std::size_t c = 0; c < a.size(); ++c) {
        const bool in_top5 = ra[c] < 5 || rb[c] < 5;
        const bool argmax_change = (ra[c] == 0) != (rb[c] == 0);
        if ((in_top5 && ra[c] != rb[c]) || argmax_change)
            out.push_back({pair, names[c], ra[c], rb[c]});
    }
}

}  // namespace detail

inline std::vector<std::string> default_class_names() {
    std::vector<std::string> names(kSemanticClasses);
    for (std::size_t i = 0; i < names.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "class_%03zu", i);
        names[i] = buf;
    }
    return names;
}

// Compares segmenter class probabilities across the original image, its plain
// bilinear 2x resize, and the enhancer's 2x output.
template <typename T>
VariantReport<T> class_probability_report(const Image<T>& img, SegmenterBackend<T>& segmenter,
                                          EnhancerBackend<T>& enhancer) {
    require_image(img, "class_probability_report");
    VariantReport<T> rep;

    const SemanticContext<T> c_orig = extract_semantic_context(img, segmenter);
    const Image<T> resized = bilinear_resize(img, 2.0);
    const SemanticContext<T> c_resized = extract_semantic_context(resized, segmenter);
    const Image<T> sr = enhance(img, enhancer);
    const SemanticContext<T> c_sr = extract_semantic_context(sr, segmenter);

    rep.class_names = c_orig.class_names ? *c_orig.class_names : default_class_names();
    rep.probabilities["original"] = softmax_probs(c_orig.logits);
    rep.probabilities["resized"] = softmax_probs(c_resized.logits);
    rep.probabilities["super_resolved"] = softmax_probs(c_sr.logits);

    detail::collect_flips("original->resized", rep.probabilities["original"],
                          rep.probabilities["resized"], rep.class_names, rep.flip_events);
    detail::collect_flips("original->super_resolved", rep.probabilities["original"],
                          rep.probabilities["super_resolved"], rep.class_names, rep.flip_events);
    detail::collect_flips("resized->super_resolved", rep.probabilities["resized"],
                          rep.probabilities["super_resolved"], rep.class_names, rep.flip_events);
    return rep;
}

template <typename T>
nlohmann::ordered_json variant_report_to_json(const VariantReport<T>& rep) {
    nlohmann::ordered_json j;
    for (const auto& [variant, probs] : rep.probabilities) {
        nlohmann::ordered_json v;
        for (std::size_t c = 0; c < probs.size(); ++c) v[rep.class_names[c]] = static_cast<double>(probs[c]);
        j[variant] = std::move(v);
    }
    nlohmann::ordered_json flips = nlohmann::ordered_json::array();
    for (const auto& f : rep.flip_events)
        flips.push_back({{"pair", f.pair}, {"class", f.class_name}, {"rank_from", f.rank_from}, {"rank_to", f.rank_to}});
    j["flip_events"] = std::move(flips);
    return j;
}

}  // namespace diffdepth
