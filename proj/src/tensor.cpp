#include "ville/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace ville {

namespace {

thread_local int no_grad_depth = 0;
thread_local bool finite_checks = true;

std::shared_ptr<TensorImpl> alloc(std::vector<int64_t> shape, DType dt) {
    for (int64_t d : shape)
        if (d < 0) throw ShapeError("negative dimension in " + shape_to_string(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->dtype = dt;
    size_t n = static_cast<size_t>(impl->numel());
    if (dt == DType::f32)
        impl->v32.assign(n, 0.0f);
    else
        impl->v64.assign(n, 0.0);
    return impl;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor tensor_zeros(std::vector<int64_t> shape, DType dt, bool requires_grad) {
    auto impl = alloc(std::move(shape), dt);
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor tensor_full(std::vector<int64_t> shape, double value, DType dt, bool requires_grad) {
    Tensor t = tensor_zeros(std::move(shape), dt, requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i) t.set_val(i, value);
    return t;
}

Tensor tensor_from(const std::vector<double>& values, std::vector<int64_t> shape, DType dt,
                   bool requires_grad) {
    Tensor t = tensor_zeros(std::move(shape), dt, requires_grad);
    if (static_cast<int64_t>(values.size()) != t.numel())
        throw ShapeError("tensor_from: " + std::to_string(values.size()) + " values for shape " +
                         shape_to_string(t.shape()));
    for (int64_t i = 0; i < t.numel(); ++i) t.set_val(i, values[static_cast<size_t>(i)]);
    return t;
}

Tensor tensor_randn(std::vector<int64_t> shape, DType dt, Rng& rng, double stddev,
                    bool requires_grad) {
    Tensor t = tensor_zeros(std::move(shape), dt, requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i) t.set_val(i, rng.gaussian(0.0, stddev));
    return t;
}

bool grad_enabled() { return no_grad_depth == 0; }
bool finite_checks_enabled() { return finite_checks; }
void set_finite_checks(bool on) { finite_checks = on; }

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

void check_finite_values(const Tensor& t, const char* op_name) {
    if (!finite_checks) return;
    bool ok = t.dtype() == DType::f32 ? all_finite(t.impl().v32) : all_finite(t.impl().v64);
    if (!ok) throw NumericError(std::string(op_name) + ": non-finite value in output");
}

namespace {

void check_finite_grad(TensorImpl& n, const char* where) {
    if (!finite_checks) return;
    bool ok = n.dtype == DType::f32 ? all_finite(n.g32) : all_finite(n.g64);
    if (!ok) throw NumericError(std::string(where) + ": non-finite gradient");
}

}  // namespace

void backward(const Tensor& root) {
    if (!root.defined()) throw ArgumentError("backward: undefined tensor");
    if (root.numel() != 1)
        throw ArgumentError("backward: root must be scalar, got " + shape_to_string(root.shape()));
    if (!root.requires_grad()) throw StateError("backward: root does not require grad");

    // Iterative post-order over the parent DAG.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.push_back({&root.impl(), 0});
    seen.insert(&root.impl());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorImpl* p = &node->parents[idx].impl();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    {
        Tensor r = root;
        r.ensure_grad();
        if (r.dtype() == DType::f32)
            r.impl().g32[0] += 1.0f;
        else
            r.impl().g64[0] += 1.0;
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (!node->backward_fn) continue;
        if (node->dtype == DType::f32) {
            if (node->g32.empty()) node->g32.assign(static_cast<size_t>(node->numel()), 0.0f);
        } else {
            if (node->g64.empty()) node->g64.assign(static_cast<size_t>(node->numel()), 0.0);
        }
        check_finite_grad(*node, "backward");
        node->backward_fn(*node);
    }
    for (TensorImpl* node : order)
        if (!node->backward_fn) check_finite_grad(*node, "backward(leaf)");
}

}  // namespace ville
