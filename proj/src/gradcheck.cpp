#include "ville/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ville {

GradCheckResult grad_check(const std::function<Tensor()>& forward,
                           const std::vector<Parameter*>& params, double eps,
                           int64_t max_coords_per_param, Rng* rng) {
    if (params.empty()) throw ArgumentError("grad_check: no parameters");
    for (const Parameter* p : params) {
        if (p->tensor.dtype() != DType::f64)
            throw DomainError("grad_check: parameter '" + p->name + "' is not f64");
        if (!p->tensor.requires_grad())
            throw ArgumentError("grad_check: parameter '" + p->name + "' does not require grad");
    }
    if (eps <= 0) throw ArgumentError("grad_check: eps must be positive");

    for (const Parameter* p : params) p->tensor.zero_grad();
    Tensor loss = forward();
    if (loss.numel() != 1) throw ArgumentError("grad_check: forward must return a scalar");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Parameter* p : params) {
        std::vector<double> g(static_cast<size_t>(p->tensor.numel()));
        for (int64_t i = 0; i < p->tensor.numel(); ++i) g[static_cast<size_t>(i)] = p->tensor.grad_val(i);
        analytic.push_back(std::move(g));
    }

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor t = params[pi]->tensor;
        std::vector<int64_t> coords;
        if (max_coords_per_param < 0 || max_coords_per_param >= t.numel()) {
            coords.resize(static_cast<size_t>(t.numel()));
            for (int64_t i = 0; i < t.numel(); ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            if (!rng) throw ArgumentError("grad_check: sampling coords requires an rng");
            coords = rng->sample_without_replacement(t.numel(), max_coords_per_param);
        }
        for (int64_t c : coords) {
            double orig = t.val(c);
            double lp, lm;
            {
                NoGradGuard ng;
                t.set_val(c, orig + eps);
                lp = forward().scalar();
                t.set_val(c, orig - eps);
                lm = forward().scalar();
                t.set_val(c, orig);
            }
            double num = (lp - lm) / (2.0 * eps);
            double ana = analytic[pi][static_cast<size_t>(c)];
            double abs_err = std::abs(num - ana);
            double rel = abs_err / std::max({std::abs(num), std::abs(ana), 1e-6});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = params[pi]->name;
                res.worst_coord = c;
            }
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
            ++res.coords_checked;
        }
    }
    return res;
}

}  // namespace ville
