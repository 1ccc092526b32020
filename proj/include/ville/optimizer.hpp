#pragma once

#include <map>
#include <string>
#include <vector>

#include "ville/tensor.hpp"

namespace ville {

struct OptimizerConfig {
    std::string kind = "adamw";  // adamw | lion
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // applied only to parameters with decay=true
};

// Owns per-parameter moment state keyed by parameter name, so it survives
// checkpoint round-trips and re-collection of the parameter list. Moments are
// kept in f64 regardless of the parameter dtype.
class Optimizer {
public:
    Optimizer(std::vector<Parameter*> params, OptimizerConfig cfg);

    void step(double lr);
    void zero_grad();
    // after adapter apply/merge the parameter set changes shape
    void rebind(std::vector<Parameter*> params);

    int64_t step_count() const { return t_; }
    const OptimizerConfig& config() const { return cfg_; }

    struct Slot {
        std::vector<double> m, v;
    };
    const std::map<std::string, Slot>& state() const { return state_; }
    void restore_state(std::map<std::string, Slot> s, int64_t t) {
        state_ = std::move(s);
        t_ = t;
    }

private:
    std::vector<Parameter*> params_;
    OptimizerConfig cfg_;
    std::map<std::string, Slot> state_;
    int64_t t_ = 0;
};

// Linear warmup to a constant: lr(0) = 0, lr(warmup) = base, flat afterwards.
double lr_schedule(int64_t step, int64_t warmup_steps, double base_lr);

}  // namespace ville
