#pragma once

#include <cmath>
#include <string>

#include "fast/tensor.hpp"

namespace fast::num {

// AdamW with decoupled weight decay applied after the adaptive step.
template <typename T>
struct OptimizerState {
    Tensor<T> m;  // first moment
    Tensor<T> v;  // second moment
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    static OptimizerState zeros_like(const Tensor<T>& param) {
        OptimizerState s;
        s.m = Tensor<T>::zeros(param.shape);
        s.v = Tensor<T>::zeros(param.shape);
        return s;
    }
};

template <typename T>
void adamw_step(Tensor<T>& param, const Tensor<T>& grad, OptimizerState<T>& state, double lr) {
    if (!param.same_shape(grad) || !param.same_shape(state.m) || !param.same_shape(state.v))
        throw ShapeError("adamw_step: parameter/gradient/state shape mismatch");
    if (lr < 0.0) throw ConfigError("adamw_step: negative learning rate");
    if (!grad.all_finite()) throw NumericError("adamw_step: non-finite gradient");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::int64_t i = 0; i < param.size(); ++i) {
        const double g = static_cast<double>(grad.v[i]);
        double m = static_cast<double>(state.m.v[i]);
        double v = static_cast<double>(state.v.v[i]);
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        state.m.v[i] = static_cast<T>(m);
        state.v.v[i] = static_cast<T>(v);
        double p = static_cast<double>(param.v[i]);
        p -= lr * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
        p -= lr * state.weight_decay * p;
        param.v[i] = static_cast<T>(p);
    }
}

// Linear warmup from floor_fraction*base to base, then cosine decay back to
// floor_fraction*base over the remaining epochs.
struct Schedule {
    double base_lr = 1e-3;
    int warmup_epochs = 10;
    int total_epochs = 200;
    double floor_fraction = 0.1;
};

inline double schedule_lr(const Schedule& s, int epoch) {
    if (epoch < 0 || epoch >= s.total_epochs)
        throw ConfigError("schedule_lr: epoch " + std::to_string(epoch) + " outside [0," +
                          std::to_string(s.total_epochs) + ")");
    if (s.floor_fraction <= 0.0 || s.floor_fraction > 1.0)
        throw ConfigError("schedule_lr: floor_fraction must be in (0,1]");
    const double lo = s.floor_fraction * s.base_lr;
    if (epoch < s.warmup_epochs)
        return lo + (s.base_lr - lo) * static_cast<double>(epoch) / s.warmup_epochs;
    const int span = s.total_epochs - 1 - s.warmup_epochs;
    if (span <= 0) return s.base_lr;
    const double phase = static_cast<double>(epoch - s.warmup_epochs) / span;
    return lo + (s.base_lr - lo) * 0.5 * (1.0 + std::cos(M_PI * phase));
}

}  // namespace fast::num
