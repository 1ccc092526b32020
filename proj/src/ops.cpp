#include "ville/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ville/kernels.hpp"

namespace ville {

namespace {

constexpr double kNormFloor = 1e-12;

template <typename T>
std::vector<T>& vals(TensorImpl& n) {
    if constexpr (std::is_same_v<T, float>)
        return n.v32;
    else
        return n.v64;
}

// Grad buffer of a node, allocated on first touch.
template <typename T>
std::vector<T>& gbuf(TensorImpl& n) {
    if constexpr (std::is_same_v<T, float>) {
        if (n.g32.empty()) n.g32.assign(static_cast<size_t>(n.numel()), 0.0f);
        return n.g32;
    } else {
        if (n.g64.empty()) n.g64.assign(static_cast<size_t>(n.numel()), 0.0);
        return n.g64;
    }
}

template <typename T>
std::vector<T>& grad_of(TensorImpl& n) {
    return gbuf<T>(n);
}

DType same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw ArgumentError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                            " vs " + dtype_name(b.dtype()) + ")");
    return a.dtype();
}

void require_rank(const Tensor& t, size_t r, const char* op) {
    if (t.rank() != r)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_to_string(t.shape()));
}

Tensor make_result(std::vector<int64_t> shape, DType dt, std::vector<Tensor> parents) {
    Tensor out = tensor_zeros(std::move(shape), dt, false);
    bool rg = false;
    if (grad_enabled())
        for (const auto& p : parents)
            if (p.requires_grad()) rg = true;
    out.impl().requires_grad = rg;
    if (rg) out.impl().parents = std::move(parents);
    return out;
}

bool tracked(const Tensor& out) { return out.requires_grad(); }

}  // namespace

// ---------------------------------------------------------------- elementwise

namespace {

enum class EwKind { Add, Sub, Mul };

template <typename T>
Tensor ew_impl(const Tensor& a, const Tensor& b, EwKind kind, const char* name) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(name) + ": " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    Tensor out = make_result(a.shape(), a.dtype(), {a, b});
    auto& oa = vals<T>(a.impl());
    auto& ob = vals<T>(b.impl());
    auto& oo = vals<T>(out.impl());
    size_t n = oo.size();
    for (size_t i = 0; i < n; ++i) {
        switch (kind) {
            case EwKind::Add: oo[i] = oa[i] + ob[i]; break;
            case EwKind::Sub: oo[i] = oa[i] - ob[i]; break;
            case EwKind::Mul: oo[i] = oa[i] * ob[i]; break;
        }
    }
    check_finite_values(out, name);
    if (tracked(out)) {
        out.impl().backward_fn = [kind](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pa = self.parents[0].impl();
            TensorImpl& pb = self.parents[1].impl();
            size_t n = go.size();
            if (pa.requires_grad) {
                auto& ga = gbuf<T>(pa);
                auto& vb = vals<T>(pb);
                for (size_t i = 0; i < n; ++i)
                    ga[i] += kind == EwKind::Mul ? go[i] * vb[i] : go[i];
            }
            if (pb.requires_grad) {
                auto& gb = gbuf<T>(pb);
                auto& va = vals<T>(pa);
                for (size_t i = 0; i < n; ++i) {
                    switch (kind) {
                        case EwKind::Add: gb[i] += go[i]; break;
                        case EwKind::Sub: gb[i] -= go[i]; break;
                        case EwKind::Mul: gb[i] += go[i] * va[i]; break;
                    }
                }
            }
        };
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    DType dt = same_dtype(a, b, "add");
    return dt == DType::f32 ? ew_impl<float>(a, b, EwKind::Add, "add")
                            : ew_impl<double>(a, b, EwKind::Add, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    DType dt = same_dtype(a, b, "sub");
    return dt == DType::f32 ? ew_impl<float>(a, b, EwKind::Sub, "sub")
                            : ew_impl<double>(a, b, EwKind::Sub, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    DType dt = same_dtype(a, b, "mul");
    return dt == DType::f32 ? ew_impl<float>(a, b, EwKind::Mul, "mul")
                            : ew_impl<double>(a, b, EwKind::Mul, "mul");
}

namespace {

template <typename T>
Tensor scale_impl(const Tensor& a, double c) {
    Tensor out = make_result(a.shape(), a.dtype(), {a});
    auto& va = vals<T>(a.impl());
    auto& vo = vals<T>(out.impl());
    for (size_t i = 0; i < vo.size(); ++i) vo[i] = static_cast<T>(c) * va[i];
    check_finite_values(out, "scale");
    if (tracked(out)) {
        out.impl().backward_fn = [c](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pa = self.parents[0].impl();
            if (!pa.requires_grad) return;
            auto& ga = gbuf<T>(pa);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += static_cast<T>(c) * go[i];
        };
    }
    return out;
}

}  // namespace

Tensor scale(const Tensor& a, double c) {
    return a.dtype() == DType::f32 ? scale_impl<float>(a, c) : scale_impl<double>(a, c);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

namespace {

template <typename T>
Tensor exp_impl(const Tensor& a) {
    Tensor out = make_result(a.shape(), a.dtype(), {a});
    auto& va = vals<T>(a.impl());
    auto& vo = vals<T>(out.impl());
    for (size_t i = 0; i < vo.size(); ++i) vo[i] = std::exp(va[i]);
    check_finite_values(out, "exp");
    if (tracked(out)) {
        auto saved = std::make_shared<std::vector<T>>(vo);
        out.impl().backward_fn = [saved](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pa = self.parents[0].impl();
            if (!pa.requires_grad) return;
            auto& ga = gbuf<T>(pa);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (*saved)[i];
        };
    }
    return out;
}

}  // namespace

Tensor exp_t(const Tensor& a) {
    return a.dtype() == DType::f32 ? exp_impl<float>(a) : exp_impl<double>(a);
}

namespace {

template <typename T>
Tensor mul_scalar_tensor_impl(const Tensor& x, const Tensor& s) {
    Tensor out = make_result(x.shape(), x.dtype(), {x, s});
    auto& vx = vals<T>(x.impl());
    auto& vo = vals<T>(out.impl());
    T sv = vals<T>(s.impl())[0];
    for (size_t i = 0; i < vo.size(); ++i) vo[i] = sv * vx[i];
    check_finite_values(out, "mul_scalar_tensor");
    if (tracked(out)) {
        out.impl().backward_fn = [](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            TensorImpl& ps = self.parents[1].impl();
            T sv = vals<T>(ps)[0];
            if (px.requires_grad) {
                auto& gx = gbuf<T>(px);
                for (size_t i = 0; i < go.size(); ++i) gx[i] += sv * go[i];
            }
            if (ps.requires_grad) {
                auto& gs = gbuf<T>(ps);
                auto& vx = vals<T>(px);
                T acc = T(0);
                for (size_t i = 0; i < go.size(); ++i) acc += go[i] * vx[i];
                gs[0] += acc;
            }
        };
    }
    return out;
}

}  // namespace

Tensor mul_scalar_tensor(const Tensor& x, const Tensor& s) {
    same_dtype(x, s, "mul_scalar_tensor");
    if (s.numel() != 1) throw ShapeError("mul_scalar_tensor: scalar operand has numel != 1");
    return x.dtype() == DType::f32 ? mul_scalar_tensor_impl<float>(x, s)
                                   : mul_scalar_tensor_impl<double>(x, s);
}

// ------------------------------------------------------------- linear algebra

namespace {

template <typename T>
Tensor matmul_impl(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    int64_t am = a.dim(0), an = a.dim(1), bm = b.dim(0), bn = b.dim(1);
    int64_t m = ta ? an : am;
    int64_t k = ta ? am : an;
    int64_t k2 = tb ? bn : bm;
    int64_t n = tb ? bm : bn;
    if (k != k2)
        throw ShapeError("matmul: inner dims " + std::to_string(k) + " vs " + std::to_string(k2) +
                         " for " + shape_to_string(a.shape()) + (ta ? "^T" : "") + " @ " +
                         shape_to_string(b.shape()) + (tb ? "^T" : ""));
    Tensor out = make_result({m, n}, a.dtype(), {a, b});
    gemm<T>(m, n, k, vals<T>(a.impl()).data(), an, ta, vals<T>(b.impl()).data(), bn, tb,
            vals<T>(out.impl()).data(), n, T(1), T(0));
    check_finite_values(out, "matmul");
    if (tracked(out)) {
        out.impl().backward_fn = [ta, tb, m, n, k](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pa = self.parents[0].impl();
            TensorImpl& pb = self.parents[1].impl();
            int64_t an = pa.shape[1];
            int64_t bn = pb.shape[1];
            const T* gc = go.data();
            if (pa.requires_grad) {
                T* ga = gbuf<T>(pa).data();
                const T* bd = vals<T>(pb).data();
                if (!ta) {
                    // dA[m,k] = dC @ op(B)^T
                    gemm<T>(m, k, n, gc, n, false, bd, bn, !tb, ga, an, T(1), T(1));
                } else {
                    // A stored [k,m]; dA = op(B) @ dC^T
                    gemm<T>(k, m, n, bd, bn, tb, gc, n, true, ga, an, T(1), T(1));
                }
            }
            if (pb.requires_grad) {
                T* gb = gbuf<T>(pb).data();
                const T* ad = vals<T>(pa).data();
                if (!tb) {
                    // dB[k,n] = op(A)^T @ dC
                    gemm<T>(k, n, m, ad, an, !ta, gc, n, false, gb, bn, T(1), T(1));
                } else {
                    // B stored [n,k]; dB = dC^T @ op(A)
                    gemm<T>(n, k, m, gc, n, true, ad, an, ta, gb, bn, T(1), T(1));
                }
            }
        };
    }
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    same_dtype(a, b, "matmul");
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    return a.dtype() == DType::f32 ? matmul_impl<float>(a, b, trans_a, trans_b)
                                   : matmul_impl<double>(a, b, trans_a, trans_b);
}

namespace {

template <typename T>
Tensor transpose_impl(const Tensor& a) {
    int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = make_result({n, m}, a.dtype(), {a});
    auto& va = vals<T>(a.impl());
    auto& vo = vals<T>(out.impl());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) vo[static_cast<size_t>(j * m + i)] = va[static_cast<size_t>(i * n + j)];
    if (tracked(out)) {
        out.impl().backward_fn = [m, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pa = self.parents[0].impl();
            if (!pa.requires_grad) return;
            auto& ga = gbuf<T>(pa);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j)
                    ga[static_cast<size_t>(i * n + j)] += go[static_cast<size_t>(j * m + i)];
        };
    }
    return out;
}

}  // namespace

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    return a.dtype() == DType::f32 ? transpose_impl<float>(a) : transpose_impl<double>(a);
}

namespace {

template <typename T>
Tensor add_bias_impl(const Tensor& x, const Tensor& b) {
    int64_t m = x.dim(0), n = x.dim(1);
    Tensor out = make_result(x.shape(), x.dtype(), {x, b});
    auto& vx = vals<T>(x.impl());
    auto& vb = vals<T>(b.impl());
    auto& vo = vals<T>(out.impl());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
            vo[static_cast<size_t>(i * n + j)] = vx[static_cast<size_t>(i * n + j)] + vb[static_cast<size_t>(j)];
    check_finite_values(out, "add_bias");
    if (tracked(out)) {
        out.impl().backward_fn = [m, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            TensorImpl& pb = self.parents[1].impl();
            if (px.requires_grad) {
                auto& gx = gbuf<T>(px);
                for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
            }
            if (pb.requires_grad) {
                auto& gb = gbuf<T>(pb);
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j)
                        gb[static_cast<size_t>(j)] += go[static_cast<size_t>(i * n + j)];
            }
        };
    }
    return out;
}

}  // namespace

Tensor add_bias(const Tensor& x, const Tensor& b) {
    same_dtype(x, b, "add_bias");
    require_rank(x, 2, "add_bias");
    require_rank(b, 1, "add_bias");
    if (x.dim(1) != b.dim(0))
        throw ShapeError("add_bias: " + shape_to_string(x.shape()) + " + " +
                         shape_to_string(b.shape()));
    return x.dtype() == DType::f32 ? add_bias_impl<float>(x, b) : add_bias_impl<double>(x, b);
}

// -------------------------------------------------------------------- shape

namespace {

template <typename T>
Tensor reshape_impl(const Tensor& x, std::vector<int64_t> new_shape) {
    Tensor out = make_result(std::move(new_shape), x.dtype(), {x});
    vals<T>(out.impl()) = vals<T>(x.impl());
    if (tracked(out)) {
        out.impl().backward_fn = [](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        };
    }
    return out;
}

}  // namespace

Tensor reshape(const Tensor& x, std::vector<int64_t> new_shape) {
    int64_t n = 1;
    for (int64_t d : new_shape) n *= d;
    if (n != x.numel())
        throw ShapeError("reshape: numel " + std::to_string(x.numel()) + " -> " +
                         shape_to_string(new_shape));
    return x.dtype() == DType::f32 ? reshape_impl<float>(x, std::move(new_shape))
                                   : reshape_impl<double>(x, std::move(new_shape));
}

namespace {

template <typename T>
Tensor slice_rows_impl(const Tensor& x, int64_t begin, int64_t count) {
    int64_t n = x.dim(1);
    Tensor out = make_result({count, n}, x.dtype(), {x});
    auto& vx = vals<T>(x.impl());
    auto& vo = vals<T>(out.impl());
    std::copy(vx.begin() + begin * n, vx.begin() + (begin + count) * n, vo.begin());
    if (tracked(out)) {
        out.impl().backward_fn = [begin, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            for (size_t i = 0; i < go.size(); ++i)
                gx[static_cast<size_t>(begin * n) + i] += go[i];
        };
    }
    return out;
}

}  // namespace

Tensor slice_rows(const Tensor& x, int64_t begin, int64_t count) {
    require_rank(x, 2, "slice_rows");
    if (count <= 0) throw ArgumentError("slice_rows: count must be positive");
    if (begin < 0 || begin + count > x.dim(0))
        throw IndexError("slice_rows: [" + std::to_string(begin) + "," +
                         std::to_string(begin + count) + ") of " + std::to_string(x.dim(0)) +
                         " rows");
    return x.dtype() == DType::f32 ? slice_rows_impl<float>(x, begin, count)
                                   : slice_rows_impl<double>(x, begin, count);
}

namespace {

template <typename T>
Tensor concat_rows_impl(const std::vector<Tensor>& parts) {
    int64_t cols = parts[0].dim(1);
    int64_t rows = 0;
    for (const auto& p : parts) rows += p.dim(0);
    Tensor out = make_result({rows, cols}, parts[0].dtype(), parts);
    auto& vo = vals<T>(out.impl());
    size_t off = 0;
    for (const auto& p : parts) {
        auto& vp = vals<T>(p.impl());
        std::copy(vp.begin(), vp.end(), vo.begin() + static_cast<int64_t>(off));
        off += vp.size();
    }
    if (tracked(out)) {
        out.impl().backward_fn = [](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            size_t off = 0;
            for (auto& parent : self.parents) {
                TensorImpl& pp = parent.impl();
                size_t n = static_cast<size_t>(pp.numel());
                if (pp.requires_grad) {
                    auto& gp = gbuf<T>(pp);
                    for (size_t i = 0; i < n; ++i) gp[i] += go[off + i];
                }
                off += n;
            }
        };
    }
    return out;
}

}  // namespace

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_rows: no parts");
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_rows");
        same_dtype(parts[0], p, "concat_rows");
        if (p.dim(1) != parts[0].dim(1))
            throw ShapeError("concat_rows: column mismatch " + shape_to_string(p.shape()) +
                             " vs " + shape_to_string(parts[0].shape()));
    }
    return parts[0].dtype() == DType::f32 ? concat_rows_impl<float>(parts)
                                          : concat_rows_impl<double>(parts);
}

namespace {

template <typename T>
Tensor take_rows_impl(const Tensor& x, const std::vector<int64_t>& rows) {
    int64_t n = x.dim(1);
    int64_t k = static_cast<int64_t>(rows.size());
    Tensor out = make_result({k, n}, x.dtype(), {x});
    auto& vx = vals<T>(x.impl());
    auto& vo = vals<T>(out.impl());
    for (int64_t i = 0; i < k; ++i)
        std::copy(vx.begin() + rows[static_cast<size_t>(i)] * n,
                  vx.begin() + (rows[static_cast<size_t>(i)] + 1) * n, vo.begin() + i * n);
    if (tracked(out)) {
        auto idx = std::make_shared<std::vector<int64_t>>(rows);
        out.impl().backward_fn = [idx, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            for (size_t i = 0; i < idx->size(); ++i) {
                int64_t r = (*idx)[i];
                for (int64_t j = 0; j < n; ++j)
                    gx[static_cast<size_t>(r * n + j)] += go[i * static_cast<size_t>(n) + static_cast<size_t>(j)];
            }
        };
    }
    return out;
}

}  // namespace

Tensor take_rows(const Tensor& x, const std::vector<int64_t>& rows) {
    require_rank(x, 2, "take_rows");
    if (rows.empty()) throw ArgumentError("take_rows: empty row list");
    for (int64_t r : rows)
        if (r < 0 || r >= x.dim(0))
            throw IndexError("take_rows: row " + std::to_string(r) + " out of " +
                             std::to_string(x.dim(0)));
    return x.dtype() == DType::f32 ? take_rows_impl<float>(x, rows)
                                   : take_rows_impl<double>(x, rows);
}

Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& ids) {
    require_rank(table, 2, "gather_rows");
    for (int64_t id : ids)
        if (id < 0 || id >= table.dim(0))
            throw IndexError("gather_rows: id " + std::to_string(id) + " out of vocab " +
                             std::to_string(table.dim(0)));
    return take_rows(table, ids);
}

// ----------------------------------------------------------------- reductions

namespace {

template <typename T>
Tensor mean_rows_impl(const Tensor& x) {
    int64_t m = x.dim(0), n = x.dim(1);
    Tensor out = make_result({n}, x.dtype(), {x});
    auto& vx = vals<T>(x.impl());
    auto& vo = vals<T>(out.impl());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) vo[static_cast<size_t>(j)] += vx[static_cast<size_t>(i * n + j)];
    for (int64_t j = 0; j < n; ++j) vo[static_cast<size_t>(j)] /= static_cast<T>(m);
    check_finite_values(out, "mean_rows");
    if (tracked(out)) {
        out.impl().backward_fn = [m, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j)
                    gx[static_cast<size_t>(i * n + j)] += go[static_cast<size_t>(j)] / static_cast<T>(m);
        };
    }
    return out;
}

template <typename T>
Tensor sum_mean_all_impl(const Tensor& x, bool mean) {
    Tensor out = make_result({1}, x.dtype(), {x});
    auto& vx = vals<T>(x.impl());
    T acc = T(0);
    for (T v : vx) acc += v;
    T denom = mean ? static_cast<T>(x.numel()) : T(1);
    vals<T>(out.impl())[0] = acc / denom;
    check_finite_values(out, mean ? "mean_all" : "sum_all");
    if (tracked(out)) {
        out.impl().backward_fn = [denom](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            T g = go[0] / denom;
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        };
    }
    return out;
}

}  // namespace

Tensor mean_rows(const Tensor& x) {
    require_rank(x, 2, "mean_rows");
    if (x.dim(0) == 0) throw ShapeError("mean_rows: zero rows");
    return x.dtype() == DType::f32 ? mean_rows_impl<float>(x) : mean_rows_impl<double>(x);
}

Tensor mean_all(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
    return x.dtype() == DType::f32 ? sum_mean_all_impl<float>(x, true)
                                   : sum_mean_all_impl<double>(x, true);
}

Tensor sum_all(const Tensor& x) {
    return x.dtype() == DType::f32 ? sum_mean_all_impl<float>(x, false)
                                   : sum_mean_all_impl<double>(x, false);
}

// ------------------------------------------------------ nonlinearities, norms

namespace {

template <typename T>
Tensor gelu_impl(const Tensor& x) {
    Tensor out = make_result(x.shape(), x.dtype(), {x});
    auto& vx = vals<T>(x.impl());
    auto& vo = vals<T>(out.impl());
    const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
    for (size_t i = 0; i < vo.size(); ++i)
        vo[i] = static_cast<T>(0.5) * vx[i] * (T(1) + std::erf(vx[i] * inv_sqrt2));
    check_finite_values(out, "gelu");
    if (tracked(out)) {
        out.impl().backward_fn = [](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            auto& vx = vals<T>(px);
            const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
            const T inv_sqrt2pi = static_cast<T>(0.3989422804014326779);
            for (size_t i = 0; i < go.size(); ++i) {
                T x = vx[i];
                T cdf = static_cast<T>(0.5) * (T(1) + std::erf(x * inv_sqrt2));
                T pdf = inv_sqrt2pi * std::exp(static_cast<T>(-0.5) * x * x);
                gx[i] += go[i] * (cdf + x * pdf);
            }
        };
    }
    return out;
}

template <typename T>
Tensor softmax_rows_impl(const Tensor& x) {
    int64_t m = x.dim(0), n = x.dim(1);
    Tensor out = make_result(x.shape(), x.dtype(), {x});
    auto& vo = vals<T>(out.impl());
    vo = vals<T>(x.impl());
    softmax_rows_inplace<T>(vo.data(), m, n, nullptr);
    check_finite_values(out, "softmax_rows");
    if (tracked(out)) {
        auto probs = std::make_shared<std::vector<T>>(vo);
        out.impl().backward_fn = [probs, m, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            for (int64_t i = 0; i < m; ++i) {
                const T* p = probs->data() + i * n;
                const T* g = go.data() + i * n;
                T dot = T(0);
                for (int64_t j = 0; j < n; ++j) dot += p[j] * g[j];
                for (int64_t j = 0; j < n; ++j)
                    gx[static_cast<size_t>(i * n + j)] += p[j] * (g[j] - dot);
            }
        };
    }
    return out;
}

template <typename T>
Tensor layer_norm_impl(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    int64_t m = x.dim(0), n = x.dim(1);
    Tensor out = make_result(x.shape(), x.dtype(), {x, gamma, beta});
    auto& vx = vals<T>(x.impl());
    auto& vg = vals<T>(gamma.impl());
    auto& vb = vals<T>(beta.impl());
    auto& vo = vals<T>(out.impl());
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(m * n));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        const T* row = vx.data() + i * n;
        T mu = T(0);
        for (int64_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<T>(n);
        T var = T(0);
        for (int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<T>(n);
        T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        (*inv_std)[static_cast<size_t>(i)] = inv;
        for (int64_t j = 0; j < n; ++j) {
            T h = (row[j] - mu) * inv;
            (*xhat)[static_cast<size_t>(i * n + j)] = h;
            vo[static_cast<size_t>(i * n + j)] = vg[static_cast<size_t>(j)] * h + vb[static_cast<size_t>(j)];
        }
    }
    check_finite_values(out, "layer_norm");
    if (tracked(out)) {
        out.impl().backward_fn = [xhat, inv_std, m, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            TensorImpl& pg = self.parents[1].impl();
            TensorImpl& pb = self.parents[2].impl();
            auto& vg = vals<T>(pg);
            if (px.requires_grad) {
                auto& gx = gbuf<T>(px);
                for (int64_t i = 0; i < m; ++i) {
                    const T* g = go.data() + i * n;
                    const T* h = xhat->data() + i * n;
                    T inv = (*inv_std)[static_cast<size_t>(i)];
                    T mean_dh = T(0), mean_dh_h = T(0);
                    for (int64_t j = 0; j < n; ++j) {
                        T dh = g[j] * vg[static_cast<size_t>(j)];
                        mean_dh += dh;
                        mean_dh_h += dh * h[j];
                    }
                    mean_dh /= static_cast<T>(n);
                    mean_dh_h /= static_cast<T>(n);
                    for (int64_t j = 0; j < n; ++j) {
                        T dh = g[j] * vg[static_cast<size_t>(j)];
                        gx[static_cast<size_t>(i * n + j)] += inv * (dh - mean_dh - h[j] * mean_dh_h);
                    }
                }
            }
            if (pg.requires_grad) {
                auto& gg = gbuf<T>(pg);
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j)
                        gg[static_cast<size_t>(j)] += go[static_cast<size_t>(i * n + j)] *
                                                      (*xhat)[static_cast<size_t>(i * n + j)];
            }
            if (pb.requires_grad) {
                auto& gb = gbuf<T>(pb);
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j)
                        gb[static_cast<size_t>(j)] += go[static_cast<size_t>(i * n + j)];
            }
        };
    }
    return out;
}

template <typename T>
Tensor l2_normalize_rows_impl(const Tensor& x, const char* name) {
    int64_t m = x.dim(0), n = x.dim(1);
    Tensor out = make_result(x.shape(), x.dtype(), {x});
    auto& vx = vals<T>(x.impl());
    auto& vo = vals<T>(out.impl());
    for (int64_t i = 0; i < m; ++i) {
        const T* row = vx.data() + i * n;
        T sq = T(0);
        for (int64_t j = 0; j < n; ++j) sq += row[j] * row[j];
        if (static_cast<double>(sq) < kNormFloor)
            throw DomainError(std::string(name) + ": zero-norm vector (row " + std::to_string(i) + ")");
        T inv = T(1) / std::sqrt(sq);
        for (int64_t j = 0; j < n; ++j) vo[static_cast<size_t>(i * n + j)] = row[j] * inv;
    }
    check_finite_values(out, name);
    if (tracked(out)) {
        auto unit = std::make_shared<std::vector<T>>(vo);
        out.impl().backward_fn = [unit, m, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            auto& vx = vals<T>(px);
            for (int64_t i = 0; i < m; ++i) {
                const T* y = unit->data() + i * n;
                const T* g = go.data() + i * n;
                const T* row = vx.data() + i * n;
                T sq = T(0);
                for (int64_t j = 0; j < n; ++j) sq += row[j] * row[j];
                T inv = T(1) / std::sqrt(sq);
                T dot = T(0);
                for (int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
                for (int64_t j = 0; j < n; ++j)
                    gx[static_cast<size_t>(i * n + j)] += inv * (g[j] - y[j] * dot);
            }
        };
    }
    return out;
}

}  // namespace

Tensor gelu(const Tensor& x) {
    return x.dtype() == DType::f32 ? gelu_impl<float>(x) : gelu_impl<double>(x);
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    return x.dtype() == DType::f32 ? softmax_rows_impl<float>(x) : softmax_rows_impl<double>(x);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    same_dtype(x, gamma, "layer_norm");
    same_dtype(x, beta, "layer_norm");
    require_rank(x, 2, "layer_norm");
    require_rank(gamma, 1, "layer_norm");
    require_rank(beta, 1, "layer_norm");
    if (gamma.dim(0) != x.dim(1) || beta.dim(0) != x.dim(1))
        throw ShapeError("layer_norm: affine params " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " vs width " + std::to_string(x.dim(1)));
    return x.dtype() == DType::f32 ? layer_norm_impl<float>(x, gamma, beta, eps)
                                   : layer_norm_impl<double>(x, gamma, beta, eps);
}

Tensor l2_normalize(const Tensor& x) {
    require_rank(x, 1, "l2_normalize");
    Tensor as_mat = reshape(x, {1, x.dim(0)});
    Tensor normed = as_mat.dtype() == DType::f32
                        ? l2_normalize_rows_impl<float>(as_mat, "l2_normalize")
                        : l2_normalize_rows_impl<double>(as_mat, "l2_normalize");
    return reshape(normed, {x.dim(0)});
}

Tensor l2_normalize_rows(const Tensor& x) {
    require_rank(x, 2, "l2_normalize_rows");
    return x.dtype() == DType::f32 ? l2_normalize_rows_impl<float>(x, "l2_normalize_rows")
                                   : l2_normalize_rows_impl<double>(x, "l2_normalize_rows");
}

// ------------------------------------------------------------------ attention

namespace {

template <typename T>
Tensor attention_impl(const Tensor& q, const Tensor& k, const Tensor& v, int64_t n_heads,
                      std::shared_ptr<std::vector<uint8_t>> mask, double att_scale) {
    int64_t nq = q.dim(0), d = q.dim(1), nk = k.dim(0);
    int64_t dh = d / n_heads;
    Tensor out = make_result({nq, d}, q.dtype(), {q, k, v});
    auto& vq = vals<T>(q.impl());
    auto& vk = vals<T>(k.impl());
    auto& vv = vals<T>(v.impl());
    auto& vo = vals<T>(out.impl());

    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(n_heads * nq * nk));
    std::vector<T> scores(static_cast<size_t>(nq * nk));
    const uint8_t* mptr = mask ? mask->data() : nullptr;
    for (int64_t h = 0; h < n_heads; ++h) {
        gemm<T>(nq, nk, dh, vq.data() + h * dh, d, false, vk.data() + h * dh, d, true,
                scores.data(), nk, static_cast<T>(att_scale), T(0));
        softmax_rows_inplace<T>(scores.data(), nq, nk, mptr);
        std::copy(scores.begin(), scores.end(), probs->begin() + h * nq * nk);
        gemm<T>(nq, dh, nk, scores.data(), nk, false, vv.data() + h * dh, d, false,
                vo.data() + h * dh, d, T(1), T(0));
    }
    check_finite_values(out, "attention");

    if (tracked(out)) {
        out.impl().backward_fn = [probs, n_heads, nq, nk, d, dh, att_scale](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pq = self.parents[0].impl();
            TensorImpl& pk = self.parents[1].impl();
            TensorImpl& pv = self.parents[2].impl();
            auto& vq = vals<T>(pq);
            auto& vk = vals<T>(pk);
            auto& vv = vals<T>(pv);
            std::vector<T> dp(static_cast<size_t>(nq * nk));
            std::vector<T> ds(static_cast<size_t>(nq * nk));
            for (int64_t h = 0; h < n_heads; ++h) {
                const T* p = probs->data() + h * nq * nk;
                // dP = dOh @ Vh^T
                gemm<T>(nq, nk, dh, go.data() + h * dh, d, false, vv.data() + h * dh, d, true,
                        dp.data(), nk, T(1), T(0));
                if (pv.requires_grad) {
                    T* gv = gbuf<T>(pv).data();
                    gemm<T>(nk, dh, nq, p, nk, true, go.data() + h * dh, d, false, gv + h * dh, d,
                            T(1), T(1));
                }
                // dS = P o (dP - rowsum(dP o P)); masked entries have P = 0.
                for (int64_t i = 0; i < nq; ++i) {
                    T dot = T(0);
                    for (int64_t j = 0; j < nk; ++j)
                        dot += dp[static_cast<size_t>(i * nk + j)] * p[i * nk + j];
                    for (int64_t j = 0; j < nk; ++j)
                        ds[static_cast<size_t>(i * nk + j)] =
                            p[i * nk + j] * (dp[static_cast<size_t>(i * nk + j)] - dot);
                }
                if (pq.requires_grad) {
                    T* gq = gbuf<T>(pq).data();
                    gemm<T>(nq, dh, nk, ds.data(), nk, false, vk.data() + h * dh, d, false,
                            gq + h * dh, d, static_cast<T>(att_scale), T(1));
                }
                if (pk.requires_grad) {
                    T* gk = gbuf<T>(pk).data();
                    gemm<T>(nk, dh, nq, ds.data(), nk, true, vq.data() + h * dh, d, false,
                            gk + h * dh, d, static_cast<T>(att_scale), T(1));
                }
            }
        };
    }
    return out;
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t n_heads,
                 const std::vector<uint8_t>* mask, double att_scale) {
    same_dtype(q, k, "attention");
    same_dtype(q, v, "attention");
    require_rank(q, 2, "attention");
    require_rank(k, 2, "attention");
    require_rank(v, 2, "attention");
    int64_t nq = q.dim(0), d = q.dim(1), nk = k.dim(0);
    if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != nk)
        throw ShapeError("attention: q" + shape_to_string(q.shape()) + " k" +
                         shape_to_string(k.shape()) + " v" + shape_to_string(v.shape()));
    if (n_heads < 1 || d % n_heads != 0)
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
    std::shared_ptr<std::vector<uint8_t>> m;
    if (mask) {
        if (static_cast<int64_t>(mask->size()) != nq * nk)
            throw ShapeError("attention: mask size " + std::to_string(mask->size()) +
                             " != " + std::to_string(nq * nk));
        for (int64_t i = 0; i < nq; ++i) {
            bool any = false;
            for (int64_t j = 0; j < nk; ++j)
                if ((*mask)[static_cast<size_t>(i * nk + j)]) { any = true; break; }
            if (!any) throw DomainError("attention: row " + std::to_string(i) + " fully masked");
        }
        m = std::make_shared<std::vector<uint8_t>>(*mask);
    }
    return q.dtype() == DType::f32 ? attention_impl<float>(q, k, v, n_heads, m, att_scale)
                                   : attention_impl<double>(q, k, v, n_heads, m, att_scale);
}

// ------------------------------------------------------- similarities, losses

namespace {

template <typename T>
Tensor cosine_similarity_impl(const Tensor& a, const Tensor& b) {
    auto& va = vals<T>(a.impl());
    auto& vb = vals<T>(b.impl());
    double na2 = 0, nb2 = 0, dot = 0;
    for (size_t i = 0; i < va.size(); ++i) {
        na2 += static_cast<double>(va[i]) * va[i];
        nb2 += static_cast<double>(vb[i]) * vb[i];
        dot += static_cast<double>(va[i]) * vb[i];
    }
    if (na2 < kNormFloor || nb2 < kNormFloor)
        throw DomainError("cosine_similarity: zero-norm input");
    Tensor out = make_result({1}, a.dtype(), {a, b});
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    double c = dot / (na * nb);
    vals<T>(out.impl())[0] = static_cast<T>(c);
    check_finite_values(out, "cosine_similarity");
    if (tracked(out)) {
        out.impl().backward_fn = [](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pa = self.parents[0].impl();
            TensorImpl& pb = self.parents[1].impl();
            auto& va = vals<T>(pa);
            auto& vb = vals<T>(pb);
            double na2 = 0, nb2 = 0, dot = 0;
            for (size_t i = 0; i < va.size(); ++i) {
                na2 += static_cast<double>(va[i]) * va[i];
                nb2 += static_cast<double>(vb[i]) * vb[i];
                dot += static_cast<double>(va[i]) * vb[i];
            }
            double na = std::sqrt(na2), nb = std::sqrt(nb2);
            double c = dot / (na * nb);
            double g = static_cast<double>(go[0]);
            if (pa.requires_grad) {
                auto& ga = gbuf<T>(pa);
                for (size_t i = 0; i < va.size(); ++i)
                    ga[i] += static_cast<T>(g * (vb[i] / (na * nb) - c * va[i] / na2));
            }
            if (pb.requires_grad) {
                auto& gb = gbuf<T>(pb);
                for (size_t i = 0; i < vb.size(); ++i)
                    gb[i] += static_cast<T>(g * (va[i] / (na * nb) - c * vb[i] / nb2));
            }
        };
    }
    return out;
}

template <typename T>
Tensor cross_entropy_rows_impl(const Tensor& logits, const std::vector<int64_t>& targets) {
    int64_t m = logits.dim(0), v = logits.dim(1);
    Tensor out = make_result({1}, logits.dtype(), {logits});
    auto& vz = vals<T>(logits.impl());
    double loss = 0;
    for (int64_t i = 0; i < m; ++i) {
        const T* row = vz.data() + i * v;
        double mx = -INFINITY;
        for (int64_t j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0;
        for (int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        loss += mx + std::log(sum) - static_cast<double>(row[targets[static_cast<size_t>(i)]]);
    }
    vals<T>(out.impl())[0] = static_cast<T>(loss);
    check_finite_values(out, "cross_entropy_rows");
    if (tracked(out)) {
        auto tgt = std::make_shared<std::vector<int64_t>>(targets);
        out.impl().backward_fn = [tgt, m, v](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& pz = self.parents[0].impl();
            if (!pz.requires_grad) return;
            auto& gz = gbuf<T>(pz);
            auto& vz = vals<T>(pz);
            T g = go[0];
            for (int64_t i = 0; i < m; ++i) {
                const T* row = vz.data() + i * v;
                double mx = -INFINITY;
                for (int64_t j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
                double sum = 0;
                for (int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
                for (int64_t j = 0; j < v; ++j) {
                    double p = std::exp(static_cast<double>(row[j]) - mx) / sum;
                    double grad = p - (j == (*tgt)[static_cast<size_t>(i)] ? 1.0 : 0.0);
                    gz[static_cast<size_t>(i * v + j)] += g * static_cast<T>(grad);
                }
            }
        };
    }
    return out;
}

template <typename T>
Tensor pick_impl(const Tensor& x, int64_t row, const std::vector<int64_t>& cols) {
    int64_t n = x.dim(1);
    int64_t k = static_cast<int64_t>(cols.size());
    Tensor out = make_result({k}, x.dtype(), {x});
    auto& vx = vals<T>(x.impl());
    auto& vo = vals<T>(out.impl());
    for (int64_t j = 0; j < k; ++j)
        vo[static_cast<size_t>(j)] = vx[static_cast<size_t>(row * n + cols[static_cast<size_t>(j)])];
    if (tracked(out)) {
        auto cidx = std::make_shared<std::vector<int64_t>>(cols);
        out.impl().backward_fn = [cidx, row, n](TensorImpl& self) {
            auto& go = grad_of<T>(self);
            TensorImpl& px = self.parents[0].impl();
            if (!px.requires_grad) return;
            auto& gx = gbuf<T>(px);
            for (size_t j = 0; j < cidx->size(); ++j)
                gx[static_cast<size_t>(row * n + (*cidx)[j])] += go[j];
        };
    }
    return out;
}

}  // namespace

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    same_dtype(a, b, "cosine_similarity");
    require_rank(a, 1, "cosine_similarity");
    require_rank(b, 1, "cosine_similarity");
    if (a.dim(0) != b.dim(0))
        throw ShapeError("cosine_similarity: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    return a.dtype() == DType::f32 ? cosine_similarity_impl<float>(a, b)
                                   : cosine_similarity_impl<double>(a, b);
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int64_t>& targets) {
    require_rank(logits, 2, "cross_entropy_rows");
    if (static_cast<int64_t>(targets.size()) != logits.dim(0))
        throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(logits.dim(0)) + " rows");
    for (int64_t t : targets)
        if (t < 0 || t >= logits.dim(1))
            throw IndexError("cross_entropy_rows: target " + std::to_string(t) + " out of " +
                             std::to_string(logits.dim(1)));
    return logits.dtype() == DType::f32 ? cross_entropy_rows_impl<float>(logits, targets)
                                        : cross_entropy_rows_impl<double>(logits, targets);
}

Tensor softmax_cross_entropy(const Tensor& logits, int64_t target) {
    require_rank(logits, 1, "softmax_cross_entropy");
    Tensor as_mat = reshape(logits, {1, logits.dim(0)});
    return cross_entropy_rows(as_mat, {target});
}

Tensor pick(const Tensor& x, int64_t row, const std::vector<int64_t>& cols) {
    require_rank(x, 2, "pick");
    if (cols.empty()) throw ArgumentError("pick: no columns");
    if (row < 0 || row >= x.dim(0))
        throw IndexError("pick: row " + std::to_string(row) + " out of " + std::to_string(x.dim(0)));
    for (int64_t c : cols)
        if (c < 0 || c >= x.dim(1))
            throw IndexError("pick: col " + std::to_string(c) + " out of " + std::to_string(x.dim(1)));
    return x.dtype() == DType::f32 ? pick_impl<float>(x, row, cols)
                                   : pick_impl<double>(x, row, cols);
}

}  // namespace ville
