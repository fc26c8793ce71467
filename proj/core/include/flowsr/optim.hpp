#pragma once

#include <functional>
#include <string>

#include "flowsr/tensor.hpp"

namespace flowsr {

/// A trainable tensor with its gradient accumulator. The name is the key
/// under which the value is stored in checkpoints.
struct Param {
    Tensor value;
    Tensor grad;
    std::string name;

    Param() = default;
    explicit Param(Tensor v, std::string n = "")
        : value(std::move(v)), grad(value.shape()), name(std::move(n)) {}

    void zero_grad() { grad.fill(0.0); }
};

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Tensor m;
    Tensor v;
    long t = 0;
    AdamHyper hyper;
};

/// One Adam update with bias correction. Consumes param.grad and resets it
/// to zero. Throws if the gradient is non-finite, naming the parameter.
void adam_step(Param& param, AdamState& state);

/// Central-difference gradient estimate of a scalar function, same shape as `at`.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double step = 1e-5);

}  // namespace flowsr
