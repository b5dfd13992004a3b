#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rcl/tensor.hpp"

namespace rcl {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Adam with bias correction. Moment buffers are created on the first
/// step and matched to parameters by position.
class Adam {
public:
    explicit Adam(AdamConfig config = {});

    // Applies one update. `grads[i]` belongs to `params[i]`.
    void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);

    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace rcl
