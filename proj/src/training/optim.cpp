#include "rcl/optim.hpp"

#include <cmath>

#include "rcl/error.hpp"

namespace rcl {

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("Adam learning rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
    if (params.size() != grads.size()) throw ShapeError("Adam: parameter and gradient counts differ");
    if (m_.empty()) {
        for (auto* p : params) {
            m_.emplace_back(p->shape());
            v_.emplace_back(p->shape());
        }
    }
    if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");

    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k]->data();
        const auto g = grads[k]->data();
        auto m = m_[k].data();
        auto v = v_[k].data();
        if (g.size() != p.size() || m.size() != p.size()) throw ShapeError("Adam: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        }
    }
}

}  // namespace rcl
