#pragma once

#include <functional>
#include <vector>

#include "ville/tensor.hpp"

namespace ville {

struct GradCheckResult {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int64_t coords_checked = 0;
    // where the worst coordinate lives, for debugging
    std::string worst_param;
    int64_t worst_coord = -1;
};

// Central-difference check of analytic gradients for a scalar-valued forward
// closure. `forward` must rebuild its graph on every call and be
// deterministic. Parameters must be f64 leaves with requires_grad; training
// dtype (f32) would drown the comparison in roundoff, so it is rejected.
// max_coords_per_param < 0 checks every coordinate; otherwise a random subset.
GradCheckResult grad_check(const std::function<Tensor()>& forward,
                           const std::vector<Parameter*>& params, double eps = 1e-5,
                           int64_t max_coords_per_param = -1, Rng* rng = nullptr);

}  // namespace ville
