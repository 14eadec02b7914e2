#include "bdcn/optim.hpp"

#include <cmath>
#include <string>

#include "bdcn/errors.hpp"

namespace bdcn {

SgdMomentum::SgdMomentum(std::vector<Tensor> params, SgdSettings settings)
    : params_(std::move(params)), settings_(settings) {
    if (!(settings_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (settings_.momentum < 0.0 || settings_.momentum >= 1.0) {
        throw ConfigError("momentum must lie in [0, 1)");
    }
    if (settings_.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
}

void SgdMomentum::step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        for (float g : params_[k].grad()) {
            if (!std::isfinite(g)) {
                throw TrainingError("non-finite gradient in parameter #" + std::to_string(k));
            }
        }
    }
    const auto mu = static_cast<float>(settings_.momentum);
    const auto wd = static_cast<float>(settings_.weight_decay);
    const auto lr = static_cast<float>(settings_.learning_rate);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto data = params_[k].data();
        auto grad = params_[k].grad();
        auto& v = velocity_[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const float g = grad.empty() ? 0.0f : grad[i];
            v[i] = mu * v[i] + g + wd * data[i];
            data[i] -= lr * v[i];
        }
    }
}

void SgdMomentum::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace bdcn
