#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ville/errors.hpp"
#include "ville/rng.hpp"

namespace ville {

// Numeric width is a runtime property: tests run the whole stack in f64 for
// finite-difference agreement, training runs f32. Mixing widths in one op is
// an error rather than a silent promotion.
enum class DType { f32, f64 };

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }
inline size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

class Tensor;

struct TensorImpl {
    std::vector<int64_t> shape;
    DType dtype = DType::f32;
    std::vector<float> v32;
    std::vector<double> v64;
    std::vector<float> g32;  // lazily allocated, persists until zero_grad
    std::vector<double> g64;
    bool requires_grad = false;
    // Reverse-mode graph: results hold their inputs alive; backward_fn reads
    // this node's grad and accumulates into the parents'.
    std::vector<Tensor> parents;
    std::function<void(TensorImpl&)> backward_fn;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    bool defined() const { return impl_ != nullptr; }
    TensorImpl& impl() const { return *impl_; }
    const std::shared_ptr<TensorImpl>& ptr() const { return impl_; }

    const std::vector<int64_t>& shape() const { return impl_->shape; }
    int64_t dim(size_t i) const { return impl_->shape.at(i); }
    size_t rank() const { return impl_->shape.size(); }
    int64_t numel() const { return impl_->numel(); }
    DType dtype() const { return impl_->dtype; }
    bool requires_grad() const { return impl_->requires_grad; }

    std::span<float> data_f32() const { return impl_->v32; }
    std::span<double> data_f64() const { return impl_->v64; }

    // Generic element access; convenient for tests and cold paths.
    double val(int64_t i) const {
        return impl_->dtype == DType::f32 ? static_cast<double>(impl_->v32[static_cast<size_t>(i)])
                                          : impl_->v64[static_cast<size_t>(i)];
    }
    void set_val(int64_t i, double v) {
        if (impl_->dtype == DType::f32)
            impl_->v32[static_cast<size_t>(i)] = static_cast<float>(v);
        else
            impl_->v64[static_cast<size_t>(i)] = v;
    }
    double scalar() const {
        if (numel() != 1) throw ShapeError("scalar() on tensor with numel " + std::to_string(numel()));
        return val(0);
    }

    bool has_grad() const { return !impl_->g32.empty() || !impl_->g64.empty(); }
    void ensure_grad() const {
        if (impl_->dtype == DType::f32) {
            if (impl_->g32.empty()) impl_->g32.assign(static_cast<size_t>(numel()), 0.0f);
        } else {
            if (impl_->g64.empty()) impl_->g64.assign(static_cast<size_t>(numel()), 0.0);
        }
    }
    double grad_val(int64_t i) const {
        if (!has_grad()) return 0.0;
        return impl_->dtype == DType::f32 ? static_cast<double>(impl_->g32[static_cast<size_t>(i)])
                                          : impl_->g64[static_cast<size_t>(i)];
    }
    void zero_grad() const {
        impl_->g32.clear();
        impl_->g64.clear();
    }

    std::vector<double> to_vector() const {
        std::vector<double> out(static_cast<size_t>(numel()));
        for (int64_t i = 0; i < numel(); ++i) out[static_cast<size_t>(i)] = val(i);
        return out;
    }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// --- construction ---

Tensor tensor_zeros(std::vector<int64_t> shape, DType dt, bool requires_grad = false);
Tensor tensor_full(std::vector<int64_t> shape, double value, DType dt, bool requires_grad = false);
Tensor tensor_from(const std::vector<double>& values, std::vector<int64_t> shape, DType dt,
                   bool requires_grad = false);
Tensor tensor_randn(std::vector<int64_t> shape, DType dt, Rng& rng, double stddev,
                    bool requires_grad = false);

// --- grad mode / numeric guards ---

bool grad_enabled();
bool finite_checks_enabled();
void set_finite_checks(bool on);

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
};

// Scalar-rooted reverse pass. Gradients accumulate additively across calls
// until zero_grad, which is what lets one optimizer step sum several losses.
void backward(const Tensor& root);

// --- parameters ---

struct Parameter {
    std::string name;
    Tensor tensor;
    bool decay = false;  // weight decay opt-in (embedding head only by default)
    bool trainable() const { return tensor.requires_grad(); }
};

std::string shape_to_string(const std::vector<int64_t>& shape);
void check_finite_values(const Tensor& t, const char* op_name);

}  // namespace ville
