#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dvhn/model.hpp"

namespace dvhn {

struct AmsgradConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double delta = 1e-8;
    double weight_decay = 5e-4;
};

/// AMSGrad with bias correction and decoupled weight decay:
///
///   m    <- b1 m + (1 - b1) g
///   v    <- b2 v + (1 - b2) g^2
///   vmax <- max(vmax, v)
///   p    <- p - lr * (m / (1 - b1^t)) / (sqrt(vmax / (1 - b2^t)) + delta) - lr * wd * p
class Amsgrad {
public:
    Amsgrad(AmsgradConfig cfg, std::size_t num_params);

    /// Throws OptimizerError (leaving params and state untouched) if any
    /// gradient is non-finite.
    void step(std::span<double> params, std::span<const double> grads);
    void step(ModelParams& params, const ParamGrads& grads);

    [[nodiscard]] std::uint64_t steps() const { return t_; }
    [[nodiscard]] const AmsgradConfig& config() const { return cfg_; }
    [[nodiscard]] const std::vector<double>& first_moment() const { return m_; }
    [[nodiscard]] const std::vector<double>& second_moment() const { return v_; }
    [[nodiscard]] const std::vector<double>& max_second_moment() const { return vmax_; }

private:
    AmsgradConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::vector<double> vmax_;
    std::uint64_t t_ = 0;
    double beta1_pow_ = 1.0;
    double beta2_pow_ = 1.0;
};

}  // namespace dvhn
