#include "flowsr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace flowsr {

void adam_step(Param& param, AdamState& state) {
    require(param.value.same_shape(param.grad), "adam_step: value/grad shape mismatch for '" + param.name + "'");
    if (state.m.empty()) {
        state.m = Tensor(param.value.shape());
        state.v = Tensor(param.value.shape());
    }
    require(state.m.same_shape(param.value) && state.v.same_shape(param.value),
            "adam_step: moment shape mismatch for '" + param.name + "'");
    if (!param.grad.all_finite())
        throw std::runtime_error("adam_step: non-finite gradient for parameter '" + param.name + "'");

    const AdamHyper& h = state.hyper;
    state.t += 1;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));

    for (std::int64_t i = 0; i < param.value.size(); ++i) {
        const double g = param.grad[i];
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param.value[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
    param.zero_grad();
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double step) {
    Tensor grad(at.shape());
    Tensor x = at;
    for (std::int64_t i = 0; i < at.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double fp = f(x);
        x[i] = orig - step;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite function value at element " + std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

}  // namespace flowsr
