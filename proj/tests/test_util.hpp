#pragma once

#include <cmath>
#include <cstdlib>
#include <string>

#include "diffdepth/core/rng.hpp"
#include "diffdepth/core/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / denom;
}

// Error measure for gradient checks: relative where the values are sizable,
// absolute near zero.
inline bool grad_close(double analytic, double numeric, double rel_tol, double abs_tol = 1e-9) {
    return std::abs(analytic - numeric) <= rel_tol * std::max(std::abs(analytic), std::abs(numeric)) + abs_tol;
}

template <typename T>
diffdepth::Tensor<T> random_tensor(std::vector<std::size_t> shape, diffdepth::Rng& rng,
                                   double lo = -1.0, double hi = 1.0) {
    diffdepth::Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
diffdepth::Tensor<T> random_normal_tensor(std::vector<std::size_t> shape, diffdepth::Rng& rng) {
    diffdepth::Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.normal());
    return t;
}

inline std::string temp_dir(const std::string& tag) {
    std::string tmpl = "/tmp/diffdepth_" + tag + "_XXXXXX";
    char* buf = tmpl.data();
    if (!mkdtemp(buf)) throw std::runtime_error("mkdtemp failed");
    return tmpl;
}

}  // namespace testutil
