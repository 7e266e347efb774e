#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "diffdepth/core/tensor.hpp"

namespace diffdepth {

// Scale-invariant log depth loss over masked pixels:
//   g_i = ln(pred_i) - ln(gt_i)
//   L   = sqrt(mean(g^2) - lambda * mean(g)^2),  lambda = variance weight
// Gradient w.r.t. pred is written into g_pred (zero where masked out).
template <typename T>
double silog_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                  const std::vector<std::uint8_t>& mask, Tensor<T>* g_pred = nullptr,
                  double variance_weight = 0.85) {
    require_same_shape(pred, gt, "silog_loss");
    if (mask.size() != pred.size()) throw std::invalid_argument("silog_loss: mask size mismatch");
    std::size_t n = 0;
    double sum_g = 0.0, sum_g2 = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        const double p = static_cast<double>(pred[i]);
        const double d = static_cast<double>(gt[i]);
        if (!(p > 0.0 && d > 0.0)) throw std::invalid_argument("silog_loss: non-positive depth");
        const double g = std::log(p) - std::log(d);
        sum_g += g;
        sum_g2 += g * g;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("silog_loss: empty mask");
    const double nn = static_cast<double>(n);
    const double mean_g = sum_g / nn;
    const double inner = std::max(sum_g2 / nn - variance_weight * mean_g * mean_g, 0.0);
    const double loss = std::sqrt(inner);

    if (g_pred) {
        *g_pred = Tensor<T>(pred.shape);
        if (loss > 1e-12) {
            for (std::size_t i = 0; i < pred.size(); ++i) {
                if (!mask[i]) continue;
                const double p = static_cast<double>(pred[i]);
                const double g = std::log(p) - std::log(static_cast<double>(gt[i]));
                // dL/dg_i = (g_i - lambda*mean_g) / (n * L); dg_i/dp_i = 1/p_i
                (*g_pred)[i] = static_cast<T>((g - variance_weight * mean_g) / (nn * loss * p));
            }
        }
    }
    return loss;
}

// Softmax cross-entropy on a logit vector; gradient = softmax - onehot.
template <typename T>
double cross_entropy_loss(const Tensor<T>& logits, std::size_t label, Tensor<T>* g_logits = nullptr) {
    if (label >= logits.size()) throw std::invalid_argument("cross_entropy_loss: label out of range");
    double mx = static_cast<double>(logits[0]);
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, static_cast<double>(logits[i]));
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(static_cast<double>(logits[i]) - mx);
    const double log_z = std::log(sum) + mx;
    const double loss = log_z - static_cast<double>(logits[label]);
    if (g_logits) {
        *g_logits = Tensor<T>(logits.shape);
        for (std::size_t i = 0; i < logits.size(); ++i)
            (*g_logits)[i] = static_cast<T>(std::exp(static_cast<double>(logits[i]) - log_z) -
                                            (i == label ? 1.0 : 0.0));
    }
    return loss;
}

}  // namespace diffdepth
