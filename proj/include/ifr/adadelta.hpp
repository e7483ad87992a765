#pragma once

#include "ifr/error.hpp"
#include "ifr/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ifr::nn {

struct AdaDeltaConfig {
    double learning_rate = 0.01;
    double weight_decay = 0.001;
    double rho = 0.95;
    double epsilon = 1e-6;
};

// AdaDelta with the learning rate applied as a multiplier on the computed
// update. The squared-update average tracks the unscaled update.
template <class T>
class AdaDelta {
public:
    AdaDelta() = default;

    explicit AdaDelta(const std::vector<TensorPtr<T>>& params) {
        for (const auto& p : params) {
            sq_grad_.emplace_back(p->size(), T{0});
            sq_update_.emplace_back(p->size(), T{0});
        }
    }

    // Applies one update from the gradients stored on `params`. Missing
    // gradients count as zero. Throws NumericalError (and leaves every
    // parameter untouched) when any gradient is non-finite.
    void step(const std::vector<TensorPtr<T>>& params, const AdaDeltaConfig& cfg) {
        if (params.size() != sq_grad_.size()) throw DimensionMismatch("optimizer/parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& p = *params[i];
            if (p.size() != sq_grad_[i].size()) throw DimensionMismatch("optimizer/parameter shape mismatch");
            for (T g : p.grad)
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericalError("non-finite gradient in parameter tensor " + std::to_string(i) +
                                         "; optimizer step aborted");
        }
        const T rho = static_cast<T>(cfg.rho), eps = static_cast<T>(cfg.epsilon);
        const T lr = static_cast<T>(cfg.learning_rate), decay2 = static_cast<T>(2 * cfg.weight_decay);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            auto& eg = sq_grad_[i];
            auto& ex = sq_update_[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                const T g = (p.has_grad() ? p.grad[k] : T{0}) + decay2 * p.values[k];
                eg[k] = rho * eg[k] + (T{1} - rho) * g * g;
                const T update = std::sqrt(ex[k] + eps) / std::sqrt(eg[k] + eps) * g;
                ex[k] = rho * ex[k] + (T{1} - rho) * update * update;
                p.values[k] -= lr * update;
            }
        }
    }

    const std::vector<std::vector<T>>& squared_gradients() const { return sq_grad_; }
    const std::vector<std::vector<T>>& squared_updates() const { return sq_update_; }
    std::vector<std::vector<T>>& squared_gradients() { return sq_grad_; }
    std::vector<std::vector<T>>& squared_updates() { return sq_update_; }

    friend bool operator==(const AdaDelta&, const AdaDelta&) = default;

private:
    std::vector<std::vector<T>> sq_grad_;
    std::vector<std::vector<T>> sq_update_;
};

} // namespace ifr::nn
