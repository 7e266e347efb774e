#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diffdepth/depth/depth_map.hpp"

namespace diffdepth {

// The six depth-evaluation metrics over one prediction set.
struct MetricReport {
    double rmse = 0.0;      // meters
    double rel = 0.0;       // |a-d|/d, mean
    double log10_err = 0.0; // |log10 a - log10 d|, mean
    double rmse_log = 0.0;  // sqrt(mean (ln a - ln d)^2)
    double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
    std::size_t pixel_count = 0;
};

// Streaming accumulator so pooled multi-sample evaluation is exactly the
// single pass over all masked pixels.
class MetricAccumulator {
public:
    // a = prediction, d = ground truth; both positive, already masked/capped.
    void add_pixel(double a, double d) {
        if (!(d > 0.0)) throw std::invalid_argument("metrics: non-positive ground truth inside mask");
        const double diff = a - d;
        sum_sq_ += diff * diff;
        sum_rel_ += std::abs(diff) / d;
        sum_log10_ += std::abs(std::log10(a) - std::log10(d));
        const double lg = std::log(a) - std::log(d);
        sum_log_sq_ += lg * lg;
        const double ratio = std::max(a / d, d / a);
        n1_ += ratio < 1.25;
        n2_ += ratio < 1.25 * 1.25;
        n3_ += ratio < 1.25 * 1.25 * 1.25;
        ++count_;
    }

    // Applies the evaluation mask (gt valid and within cap) and clamps the
    // prediction into the cap before scoring.
    template <typename T>
    void add_map(const DepthMap<T>& pred, const DepthMap<T>& gt, double cap_min, double cap_max) {
        if (!pred.values.same_shape(gt.values))
            throw std::invalid_argument("compute_metrics: shape mismatch");
        for (std::size_t i = 0; i < gt.values.size(); ++i) {
            if (!gt.valid(i)) continue;
            const double d = static_cast<double>(gt.values[i]);
            if (d < cap_min || d > cap_max) continue;
            const double a = std::clamp(static_cast<double>(pred.values[i]), cap_min, cap_max);
            add_pixel(a, d);
        }
    }

    std::size_t count() const { return count_; }

    MetricReport finalize() const {
        if (count_ == 0) throw std::invalid_argument("compute_metrics: empty evaluation mask");
        const double n = static_cast<double>(count_);
        MetricReport r;
        r.rmse = std::sqrt(sum_sq_ / n);
        r.rel = sum_rel_ / n;
        r.log10_err = sum_log10_ / n;
        r.rmse_log = std::sqrt(sum_log_sq_ / n);
        r.delta1 = static_cast<double>(n1_) / n;
        r.delta2 = static_cast<double>(n2_) / n;
        r.delta3 = static_cast<double>(n3_) / n;
        r.pixel_count = count_;
        return r;
    }

private:
    double sum_sq_ = 0.0, sum_rel_ = 0.0, sum_log10_ = 0.0, sum_log_sq_ = 0.0;
    std::size_t n1_ = 0, n2_ = 0, n3_ = 0, count_ = 0;
};

template <typename T>
MetricReport compute_metrics(const DepthMap<T>& pred, const DepthMap<T>& gt,
                             double cap_min, double cap_max) {
    if (!(cap_min > 0.0 && cap_min < cap_max))
        throw std::invalid_argument("compute_metrics: invalid cap");
    MetricAccumulator acc;
    acc.add_map(pred, gt, cap_min, cap_max);
    return acc.finalize();
}

inline nlohmann::ordered_json metric_report_to_json(const MetricReport& r) {
    return nlohmann::ordered_json{
        {"rmse", r.rmse},        {"rel", r.rel}, {"log10", r.log10_err}, {"rmse_log", r.rmse_log},
        {"d1", r.delta1},        {"d2", r.delta2}, {"d3", r.delta3},
        {"pixels", r.pixel_count}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.rmse = j.at("rmse").get<double>();
    r.rel = j.at("rel").get<double>();
    r.log10_err = j.at("log10").get<double>();
    r.rmse_log = j.at("rmse_log").get<double>();
    r.delta1 = j.at("d1").get<double>();
    r.delta2 = j.at("d2").get<double>();
    r.delta3 = j.at("d3").get<double>();
    r.pixel_count = j.at("pixels").get<std::size_t>();
    return r;
}

// Table column orders follow the two reporting conventions: indoor tables
// carry log10, outdoor tables carry RMSE_log.
enum class TableStyle { log10, rmse_log };

inline std::string render_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows,
                                       TableStyle style) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s%8s%8s%8s%8s%8s%8s\n", "Method", "RMSE", "REL",
                  style == TableStyle::log10 ? "log10" : "RMSE_log", "d1", "d2", "d3");
    out += buf;
    for (const auto& [name, r] : rows) {
        const double third = style == TableStyle::log10 ? r.log10_err : r.rmse_log;
        std::snprintf(buf, sizeof(buf), "%-16s%8.3f%8.3f%8.3f%8.3f%8.3f%8.3f\n", name.c_str(),
                      r.rmse, r.rel, third, r.delta1, r.delta2, r.delta3);
        out += buf;
    }
    return out;
}

}  // namespace diffdepth
