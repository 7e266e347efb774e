#pragma once

#include <string>
#include <vector>

#include "diffdepth/core/tensor.hpp"

namespace diffdepth::nn {

// Named view onto one parameter tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
};

template <typename T>
using ParamSet = std::vector<ParamRef<T>>;

template <typename T>
void zero_grads(ParamSet<T>& params) {
    for (auto& p : params) p.grad->fill(T{});
}

template <typename T>
std::size_t param_count(const ParamSet<T>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value->size();
    return n;
}

}  // namespace diffdepth::nn
