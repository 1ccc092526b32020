#include "ville/optimizer.hpp"

#include <cmath>

namespace ville {

Optimizer::Optimizer(std::vector<Parameter*> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(std::move(cfg)) {
    if (cfg_.kind != "adamw" && cfg_.kind != "lion")
        throw ConfigError("optimizer: unknown kind '" + cfg_.kind + "'");
    if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1)
        throw ConfigError("optimizer: betas must be in [0,1)");
}

void Optimizer::rebind(std::vector<Parameter*> params) {
    params_ = std::move(params);
    // stale slots (e.g. merged adapters) are dropped lazily on save
}

void Optimizer::zero_grad() {
    for (Parameter* p : params_) p->tensor.zero_grad();
}

void Optimizer::step(double lr) {
    ++t_;
    for (Parameter* p : params_) {
        if (!p->trainable()) continue;
        Tensor t = p->tensor;
        if (!t.has_grad()) continue;  // parameter unused this step
        size_t n = static_cast<size_t>(t.numel());
        Slot& slot = state_[p->name];
        if (slot.m.size() != n) {
            slot.m.assign(n, 0.0);
            slot.v.assign(n, 0.0);
        }
        double wd = p->decay ? cfg_.weight_decay : 0.0;
        if (cfg_.kind == "adamw") {
            double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
            double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
            for (size_t i = 0; i < n; ++i) {
                double g = t.grad_val(static_cast<int64_t>(i));
                slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
                slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = slot.m[i] / bc1;
                double vhat = slot.v[i] / bc2;
                double x = t.val(static_cast<int64_t>(i));
                x -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd * x);
                t.set_val(static_cast<int64_t>(i), x);
            }
        } else {  // lion
            for (size_t i = 0; i < n; ++i) {
                double g = t.grad_val(static_cast<int64_t>(i));
                double u = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
                double s = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
                double x = t.val(static_cast<int64_t>(i));
                x -= lr * (s + wd * x);
                t.set_val(static_cast<int64_t>(i), x);
                slot.m[i] = cfg_.beta2 * slot.m[i] + (1.0 - cfg_.beta2) * g;
            }
        }
    }
}

double lr_schedule(int64_t step, int64_t warmup_steps, double base_lr) {
    if (step < 0) throw ArgumentError("lr_schedule: negative step");
    if (warmup_steps < 0) throw ArgumentError("lr_schedule: negative warmup");
    if (warmup_steps == 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace ville
