#include "dvhn/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "dvhn/errors.hpp"

namespace dvhn {

Amsgrad::Amsgrad(AmsgradConfig cfg, std::size_t num_params)
    : cfg_(cfg), m_(num_params, 0.0), v_(num_params, 0.0), vmax_(num_params, 0.0) {
    if (!(cfg_.lr >= 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
        !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) || !(cfg_.delta > 0.0) ||
        !(cfg_.weight_decay >= 0.0)) {
        throw OptimizerError("invalid AMSGrad hyperparameters");
    }
}

void Amsgrad::step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ShapeError("optimizer: parameter/gradient length does not match state");
    }
    if (!std::all_of(grads.begin(), grads.end(), [](double g) { return std::isfinite(g); })) {
        throw OptimizerError("optimizer: non-finite gradient at step " + std::to_string(t_ + 1));
    }
    ++t_;
    beta1_pow_ *= cfg_.beta1;
    beta2_pow_ *= cfg_.beta2;
    const double c1 = 1.0 - beta1_pow_;
    const double c2 = 1.0 - beta2_pow_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
        vmax_[i] = std::max(vmax_[i], v_[i]);
        const double update = (m_[i] / c1) / (std::sqrt(vmax_[i] / c2) + cfg_.delta);
        params[i] -= cfg_.lr * update + cfg_.lr * cfg_.weight_decay * params[i];
    }
}

void Amsgrad::step(ModelParams& params, const ParamGrads& grads) {
    auto flat = flatten(params);
    const auto g = flatten(grads);
    step(std::span<double>(flat), std::span<const double>(g));
    assign_flat(params, flat);
}

}  // namespace dvhn
