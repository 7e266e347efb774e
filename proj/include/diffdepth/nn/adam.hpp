#pragma once

#include <cmath>
#include <vector>

#include "diffdepth/nn/param.hpp"

namespace diffdepth::nn {

// Adam with bias correction. State is allocated lazily against the param set
// on the first step; the parameter layout must not change afterwards.
template <typename T>
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamSet<T>& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.value->shape);
                v_.emplace_back(p.value->shape);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto& val = *params[pi].value;
            auto& grad = *params[pi].grad;
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (std::size_t i = 0; i < val.size(); ++i) {
                const double g = static_cast<double>(grad[i]);
                m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g);
                v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
                const double mhat = static_cast<double>(m[i]) / bc1;
                const double vhat = static_cast<double>(v[i]) / bc2;
                val[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace diffdepth::nn
