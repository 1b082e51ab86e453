#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ar2/errors.hpp"
#include "ar2/gemm.hpp"

namespace ar2 {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor storage. Gradients live beside the data and are
// allocated lazily on the first backward pass that reaches the tensor.
template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

template <typename T>
class TapeT;

// Value-semantic handle onto shared tensor storage.
template <typename T>
class TensorT {
public:
    TensorT() : impl_(std::make_shared<TensorImpl<T>>()) {}

    static TensorT zeros(const Shape& shape, bool requires_grad = false) {
        return filled(shape, T(0), requires_grad);
    }
    static TensorT filled(const Shape& shape, T value, bool requires_grad = false) {
        TensorT t;
        t.impl_->shape = shape;
        t.impl_->data.assign(size_t(shape_numel(shape)), value);
        t.impl_->requires_grad = requires_grad;
        return t;
    }
    static TensorT from_data(const Shape& shape, std::vector<T> data,
                             bool requires_grad = false) {
        if (int64_t(data.size()) != shape_numel(shape))
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        TensorT t;
        t.impl_->shape = shape;
        t.impl_->data = std::move(data);
        t.impl_->requires_grad = requires_grad;
        return t;
    }
    static TensorT scalar(T value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return int64_t(impl_->data.size()); }
    int64_t dim(size_t i) const { return impl_->shape[i]; }

    const std::vector<T>& data() const { return impl_->data; }
    std::vector<T>& data() { return impl_->data; }
    T* ptr() { return impl_->data.data(); }
    const T* ptr() const { return impl_->data.data(); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<T>& grad() const { return impl_->grad; }
    std::vector<T>& grad_buffer() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() { impl_->grad.clear(); }

    T item() const {
        if (numel() != 1)
            throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return impl_->data[0];
    }

    // Deep copy of data; gradients are not copied.
    TensorT clone() const {
        TensorT t;
        t.impl_->shape = impl_->shape;
        t.impl_->data = impl_->data;
        t.impl_->requires_grad = impl_->requires_grad;
        return t;
    }

    // Same storage, viewed without gradient participation.
    TensorT detach() const {
        TensorT t;
        t.impl_ = std::make_shared<TensorImpl<T>>();
        t.impl_->shape = impl_->shape;
        t.impl_->data = impl_->data;
        return t;
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> d(impl_->data.size());
        for (size_t i = 0; i < d.size(); ++i) d[i] = U(impl_->data[i]);
        auto t = TensorT<U>::from_data(impl_->shape, std::move(d));
        t.set_requires_grad(impl_->requires_grad);
        return t;
    }

    bool all_finite() const {
        for (T v : impl_->data)
            if (!std::isfinite(double(v))) return false;
        return true;
    }

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }
    bool same_storage(const TensorT& o) const { return impl_ == o.impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;

    friend class TapeT<T>;
};

// Reverse-mode tape. Operations append themselves in execution order, which
// is already topological, so backward() is a single reverse sweep.
template <typename T>
class TapeT {
public:
    struct Record {
        const char* op;
        std::function<void()> backward;
    };

    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    // RAII activation; ops record onto the innermost active tape. A scope
    // built from no_tape() suspends recording (frozen-model passes).
    class Scope {
    public:
        explicit Scope(TapeT& tape) : prev_(current_slot()) { current_slot() = &tape; }
        explicit Scope(std::nullptr_t) : prev_(current_slot()) { current_slot() = nullptr; }
        ~Scope() { current_slot() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        TapeT* prev_;
    };

    static std::nullptr_t no_tape() { return nullptr; }

    static TapeT* current() { return current_slot(); }

    void record(const char* op, std::function<void()> backward) {
        records_.push_back({op, std::move(backward)});
    }

    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Repeated
    // calls accumulate into existing gradients.
    void backward(TensorT<T> loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " +
                             shape_str(loss.shape()));
        loss.grad_buffer()[0] += T(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
    }

private:
    static TapeT*& current_slot() {
        thread_local TapeT* active = nullptr;
        return active;
    }

    std::vector<Record> records_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

namespace detail {

template <typename T>
bool tracing(std::initializer_list<const TensorT<T>*> inputs) {
    if (TapeT<T>::current() == nullptr) return false;
    for (const TensorT<T>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// Upstream gradient of `out`, or nullptr when out is off the loss path.
template <typename T>
const std::vector<T>* upstream(const std::shared_ptr<TensorImpl<T>>& out) {
    return out->grad.empty() ? nullptr : &out->grad;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* po = out.ptr();
    for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
    if (detail::tracing<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        TapeT<T>::current()->record("add", [ai, bi, oi] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < g->size(); ++i) ai->grad[i] += (*g)[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < g->size(); ++i) bi->grad[i] += (*g)[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* po = out.ptr();
    for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] - pb[i];
    if (detail::tracing<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        TapeT<T>::current()->record("sub", [ai, bi, oi] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < g->size(); ++i) ai->grad[i] += (*g)[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < g->size(); ++i) bi->grad[i] -= (*g)[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* po = out.ptr();
    for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] * pb[i];
    if (detail::tracing<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        TapeT<T>::current()->record("mul", [ai, bi, oi] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < g->size(); ++i) ai->grad[i] += (*g)[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < g->size(); ++i) bi->grad[i] += (*g)[i] * ai->data[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.ptr();
    T* po = out.ptr();
    for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] * s;
    if (detail::tracing<T>({&a})) {
        out.set_requires_grad(true);
        auto ai = a.impl();
        auto oi = out.impl();
        TapeT<T>::current()->record("scale", [ai, oi, s] {
            auto* g = detail::upstream(oi);
            if (!g || !ai->requires_grad) return;
            ai->ensure_grad();
            for (size_t i = 0; i < g->size(); ++i) ai->grad[i] += (*g)[i] * s;
        });
    }
    return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += double(a.ptr()[i]);
    auto out = TensorT<T>::scalar(T(acc));
    if (detail::tracing<T>({&a})) {
        out.set_requires_grad(true);
        auto ai = a.impl();
        auto oi = out.impl();
        TapeT<T>::current()->record("sum", [ai, oi] {
            auto* g = detail::upstream(oi);
            if (!g || !ai->requires_grad) return;
            ai->ensure_grad();
            const T gv = (*g)[0];
            for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += gv;
        });
    }
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.ptr();
    T* po = out.ptr();
    for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
    if (detail::tracing<T>({&a})) {
        out.set_requires_grad(true);
        auto ai = a.impl();
        auto oi = out.impl();
        TapeT<T>::current()->record("relu", [ai, oi] {
            auto* g = detail::upstream(oi);
            if (!g || !ai->requires_grad) return;
            ai->ensure_grad();
            for (size_t i = 0; i < g->size(); ++i)
                if (ai->data[i] > T(0)) ai->grad[i] += (*g)[i];
        });
    }
    return out;
}

// Mean of squared elementwise differences, accumulated in double.
template <typename T>
TensorT<T> mse(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const int64_t n = a.numel();
    if (n == 0) throw ShapeError("mse: empty tensors");
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = double(a.ptr()[i]) - double(b.ptr()[i]);
        acc += d * d;
    }
    auto out = TensorT<T>::scalar(T(acc / double(n)));
    if (detail::tracing<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        TapeT<T>::current()->record("mse", [ai, bi, oi, n] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            const T c = (*g)[0] * T(2) / T(n);
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    ai->grad[i] += c * (ai->data[i] - bi->data[i]);
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    bi->grad[i] -= c * (ai->data[i] - bi->data[i]);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Network ops
// ---------------------------------------------------------------------------

// Cross-correlation of input [B,C,H,W] with kernel [K,C,R,S], lowered to
// im2col + GEMM per batch item.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, int stride,
                  int padding) {
    const Shape& xs = input.shape();
    const Shape& ks = kernel.shape();
    if (xs.size() != 4 || ks.size() != 4)
        throw ShapeError("conv2d: expected 4-d input and kernel, got " +
                         shape_str(xs) + " and " + shape_str(ks));
    if (xs[1] != ks[1])
        throw ShapeError("conv2d: input channels " + std::to_string(xs[1]) +
                         " != kernel channels " + std::to_string(ks[1]));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
    const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t K = ks[0], R = ks[2], S = ks[3];
    if (R > H + 2 * padding || S > W + 2 * padding)
        throw ShapeError("conv2d: kernel " + std::to_string(R) + "x" +
                         std::to_string(S) + " larger than padded input " +
                         std::to_string(H + 2 * padding) + "x" +
                         std::to_string(W + 2 * padding));
    const int64_t OH = (H + 2 * padding - R) / stride + 1;
    const int64_t OW = (W + 2 * padding - S) / stride + 1;
    const int64_t CRS = C * R * S;
    const int64_t OHW = OH * OW;

    auto im2col = [=](const T* x, T* col) {
        // col[(c*R+r)*S+s, oh*OW+ow] = x[c, oh*stride+r-pad, ow*stride+s-pad]
        for (int64_t c = 0; c < C; ++c) {
            const T* xc = x + c * H * W;
            for (int64_t r = 0; r < R; ++r) {
                for (int64_t s = 0; s < S; ++s) {
                    T* crow = col + ((c * R + r) * S + s) * OHW;
                    for (int64_t oh = 0; oh < OH; ++oh) {
                        const int64_t ih = oh * stride + r - padding;
                        T* dst = crow + oh * OW;
                        if (ih < 0 || ih >= H) {
                            for (int64_t ow = 0; ow < OW; ++ow) dst[ow] = T(0);
                            continue;
                        }
                        const T* src = xc + ih * W;
                        for (int64_t ow = 0; ow < OW; ++ow) {
                            const int64_t iw = ow * stride + s - padding;
                            dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
                        }
                    }
                }
            }
        }
    };

    auto out = TensorT<T>::zeros({B, K, OH, OW});
    {
        std::vector<T> col(size_t(CRS * OHW));
        for (int64_t b = 0; b < B; ++b) {
            im2col(input.ptr() + b * C * H * W, col.data());
            gemm_nn<T>(size_t(K), size_t(OHW), size_t(CRS), kernel.ptr(), size_t(CRS),
                       col.data(), size_t(OHW), out.ptr() + b * K * OHW, size_t(OHW),
                       false);
        }
    }

    if (detail::tracing<T>({&input, &kernel})) {
        out.set_requires_grad(true);
        auto xi = input.impl(), ki = kernel.impl(), oi = out.impl();
        TapeT<T>::current()->record("conv2d", [=] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            std::vector<T> col(size_t(CRS * OHW));
            std::vector<T> colT;
            std::vector<T> kT;
            std::vector<T> dcol;
            if (xi->requires_grad) {
                xi->ensure_grad();
                kT.resize(size_t(CRS * K));
                transpose<T>(size_t(K), size_t(CRS), ki->data.data(), size_t(CRS),
                             kT.data(), size_t(K));
                dcol.resize(size_t(CRS * OHW));
            }
            if (ki->requires_grad) {
                ki->ensure_grad();
                colT.resize(size_t(CRS * OHW));
            }
            for (int64_t b = 0; b < B; ++b) {
                const T* gb = g->data() + b * K * OHW;
                if (ki->requires_grad) {
                    // dK += g_b x col_b^T; col is transposed so the product runs
                    // through gemm_nn, whose inner loop vectorizes.
                    im2col(xi->data.data() + b * C * H * W, col.data());
                    transpose<T>(size_t(CRS), size_t(OHW), col.data(), size_t(OHW),
                                 colT.data(), size_t(CRS));
                    gemm_nn<T>(size_t(K), size_t(CRS), size_t(OHW), gb, size_t(OHW),
                               colT.data(), size_t(CRS), ki->grad.data(), size_t(CRS),
                               true);
                }
                if (xi->requires_grad) {
                    // dcol = K^T x g_b, then col2im scatter-add.
                    gemm_nn<T>(size_t(CRS), size_t(OHW), size_t(K), kT.data(), size_t(K),
                               gb, size_t(OHW), dcol.data(), size_t(OHW), false);
                    T* dx = xi->grad.data() + b * C * H * W;
                    for (int64_t c = 0; c < C; ++c) {
                        for (int64_t r = 0; r < R; ++r) {
                            for (int64_t s = 0; s < S; ++s) {
                                const T* crow = dcol.data() + ((c * R + r) * S + s) * OHW;
                                for (int64_t oh = 0; oh < OH; ++oh) {
                                    const int64_t ih = oh * stride + r - padding;
                                    if (ih < 0 || ih >= H) continue;
                                    T* dst = dx + (c * H + ih) * W;
                                    const T* src = crow + oh * OW;
                                    for (int64_t ow = 0; ow < OW; ++ow) {
                                        const int64_t iw = ow * stride + s - padding;
                                        if (iw >= 0 && iw < W) dst[iw] += src[ow];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// [B,C,H,W] -> [B,C], spatial mean per channel (double accumulation).
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& input) {
    const Shape& xs = input.shape();
    if (xs.size() != 4)
        throw ShapeError("global_avg_pool: expected 4-d input, got " + shape_str(xs));
    const int64_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
    if (HW < 1) throw ShapeError("global_avg_pool: empty spatial extent");
    auto out = TensorT<T>::zeros({B, C});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = input.ptr() + bc * HW;
        double acc = 0.0;
        for (int64_t i = 0; i < HW; ++i) acc += double(src[i]);
        out.ptr()[bc] = T(acc / double(HW));
    }
    if (detail::tracing<T>({&input})) {
        out.set_requires_grad(true);
        auto xi = input.impl();
        auto oi = out.impl();
        TapeT<T>::current()->record("global_avg_pool", [xi, oi, B, C, HW] {
            auto* g = detail::upstream(oi);
            if (!g || !xi->requires_grad) return;
            xi->ensure_grad();
            const T inv = T(1) / T(HW);
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const T gv = (*g)[size_t(bc)] * inv;
                T* dst = xi->grad.data() + bc * HW;
                for (int64_t i = 0; i < HW; ++i) dst[i] += gv;
            }
        });
    }
    return out;
}

// out[b,c] = sum_k weight[c,k] * input[b,k] + bias[c]
template <typename T>
TensorT<T> linear(const TensorT<T>& input, const TensorT<T>& weight,
                  const TensorT<T>& bias) {
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    if (xs.size() != 2 || ws.size() != 2 || bias.shape().size() != 1)
        throw ShapeError("linear: expected input [B,C], weight [Cls,C], bias [Cls]");
    if (xs[1] != ws[1] || bias.dim(0) != ws[0])
        throw ShapeError("linear: dimension mismatch, input " + shape_str(xs) +
                         " weight " + shape_str(ws) + " bias " +
                         shape_str(bias.shape()));
    const int64_t B = xs[0], C = xs[1], Cls = ws[0];
    auto out = TensorT<T>::zeros({B, Cls});
    for (int64_t b = 0; b < B; ++b) {
        const T* x = input.ptr() + b * C;
        T* o = out.ptr() + b * Cls;
        for (int64_t c = 0; c < Cls; ++c) {
            const T* w = weight.ptr() + c * C;
            double acc = double(bias.ptr()[c]);
            for (int64_t k = 0; k < C; ++k) acc += double(w[k]) * double(x[k]);
            o[c] = T(acc);
        }
    }
    if (detail::tracing<T>({&input, &weight, &bias})) {
        out.set_requires_grad(true);
        auto xi = input.impl(), wi = weight.impl(), bi = bias.impl(), oi = out.impl();
        TapeT<T>::current()->record("linear", [xi, wi, bi, oi, B, C, Cls] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            if (xi->requires_grad) {
                xi->ensure_grad();
                // dx = g x W
                gemm_nn<T>(size_t(B), size_t(C), size_t(Cls), g->data(), size_t(Cls),
                           wi->data.data(), size_t(C), xi->grad.data(), size_t(C),
                           true);
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                // dW[c,k] += sum_b g[b,c] * x[b,k]
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < Cls; ++c) {
                        const T gv = (*g)[size_t(b * Cls + c)];
                        T* dw = wi->grad.data() + c * C;
                        const T* x = xi->data.data() + b * C;
                        for (int64_t k = 0; k < C; ++k) dw[k] += gv * x[k];
                    }
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < Cls; ++c)
                        bi->grad[size_t(c)] += (*g)[size_t(b * Cls + c)];
            }
        });
    }
    return out;
}

// Mean over the batch of -log softmax(logits)[label], stabilized by
// max-subtraction. Labels must lie in [0, Classes).
template <typename T>
TensorT<T> softmax_cross_entropy(const TensorT<T>& logits,
                                 const std::vector<int>& labels) {
    const Shape& ls = logits.shape();
    if (ls.size() != 2)
        throw ShapeError("softmax_cross_entropy: expected logits [B,Classes], got " +
                         shape_str(ls));
    const int64_t B = ls[0], Cls = ls[1];
    if (int64_t(labels.size()) != B)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
    for (int y : labels)
        if (y < 0 || y >= Cls)
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) +
                             " out of range [0," + std::to_string(Cls) + ")");

    std::vector<T> probs(size_t(B * Cls));
    double loss_acc = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        const T* row = logits.ptr() + b * Cls;
        double mx = double(row[0]);
        for (int64_t c = 1; c < Cls; ++c) mx = std::max(mx, double(row[c]));
        double denom = 0.0;
        for (int64_t c = 0; c < Cls; ++c) denom += std::exp(double(row[c]) - mx);
        const double log_denom = std::log(denom);
        for (int64_t c = 0; c < Cls; ++c)
            probs[size_t(b * Cls + c)] =
                T(std::exp(double(row[c]) - mx) / denom);
        loss_acc += -(double(row[labels[size_t(b)]]) - mx - log_denom);
    }
    auto out = TensorT<T>::scalar(T(loss_acc / double(B)));
    if (detail::tracing<T>({&logits})) {
        out.set_requires_grad(true);
        auto li = logits.impl();
        auto oi = out.impl();
        TapeT<T>::current()->record("softmax_cross_entropy",
                                    [li, oi, labels, probs, B, Cls] {
            auto* g = detail::upstream(oi);
            if (!g || !li->requires_grad) return;
            li->ensure_grad();
            const T c0 = (*g)[0] / T(B);
            for (int64_t b = 0; b < B; ++b) {
                T* dst = li->grad.data() + b * Cls;
                const T* p = probs.data() + b * Cls;
                for (int64_t c = 0; c < Cls; ++c) dst[c] += c0 * p[c];
                dst[labels[size_t(b)]] -= c0;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// CAM-specific ops
// ---------------------------------------------------------------------------

// Index pair naming one activation-map extraction: batch item + class row.
struct CamPair {
    int64_t item;
    int64_t cls;
};

// out[p,h,w] = sum_k weight[cls_p, k] * features[item_p, k, h, w].
// Differentiable with respect to both the feature maps and the head weights.
template <typename T>
TensorT<T> cam_project(const TensorT<T>& features, const TensorT<T>& weight,
                       const std::vector<CamPair>& pairs) {
    const Shape& fs = features.shape();
    const Shape& ws = weight.shape();
    if (fs.size() != 4 || ws.size() != 2)
        throw ShapeError("cam_project: expected features [B,C,H,W], weight [Cls,C]");
    if (fs[1] != ws[1])
        throw ShapeError("cam_project: channel mismatch, features " + shape_str(fs) +
                         " weight " + shape_str(ws));
    const int64_t B = fs[0], C = fs[1], HW = fs[2] * fs[3];
    for (const CamPair& p : pairs) {
        if (p.item < 0 || p.item >= B)
            throw ShapeError("cam_project: batch index " + std::to_string(p.item) +
                             " out of range");
        if (p.cls < 0 || p.cls >= ws[0])
            throw ShapeError("cam_project: class " + std::to_string(p.cls) +
                             " out of range [0," + std::to_string(ws[0]) + ")");
    }
    const int64_t P = int64_t(pairs.size());
    auto out = TensorT<T>::zeros({P, fs[2], fs[3]});
    for (int64_t p = 0; p < P; ++p) {
        const T* f = features.ptr() + pairs[size_t(p)].item * C * HW;
        const T* w = weight.ptr() + pairs[size_t(p)].cls * C;
        T* o = out.ptr() + p * HW;
        for (int64_t k = 0; k < C; ++k) {
            const T wk = w[k];
            const T* fk = f + k * HW;
            for (int64_t i = 0; i < HW; ++i) o[i] += wk * fk[i];
        }
    }
    if (detail::tracing<T>({&features, &weight})) {
        out.set_requires_grad(true);
        auto fi = features.impl(), wi = weight.impl(), oi = out.impl();
        TapeT<T>::current()->record("cam_project", [fi, wi, oi, pairs, C, HW] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            if (fi->requires_grad) fi->ensure_grad();
            if (wi->requires_grad) wi->ensure_grad();
            for (size_t p = 0; p < pairs.size(); ++p) {
                const T* gp = g->data() + int64_t(p) * HW;
                const T* f = fi->data.data() + pairs[p].item * C * HW;
                const T* w = wi->data.data() + pairs[p].cls * C;
                for (int64_t k = 0; k < C; ++k) {
                    if (fi->requires_grad) {
                        T* df = fi->grad.data() + (pairs[p].item * C + k) * HW;
                        const T wk = w[k];
                        for (int64_t i = 0; i < HW; ++i) df[i] += wk * gp[i];
                    }
                    if (wi->requires_grad) {
                        const T* fk = f + k * HW;
                        double acc = 0.0;
                        for (int64_t i = 0; i < HW; ++i)
                            acc += double(gp[i]) * double(fk[i]);
                        wi->grad[size_t(pairs[p].cls * C + k)] += T(acc);
                    }
                }
            }
        });
    }
    return out;
}

// sum_p weights[p] * mean over the trailing dims of (a_p - target_p)^2.
// The per-slice weights fold in the 1/batch and alpha factors of the
// alignment loss, so the whole loss reduces to one op.
template <typename T>
TensorT<T> weighted_slice_mse(const TensorT<T>& a, const TensorT<T>& target,
                              const std::vector<T>& weights) {
    if (a.shape() != target.shape())
        throw ShapeError("weighted_slice_mse: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(target.shape()));
    if (a.shape().empty() || a.dim(0) != int64_t(weights.size()))
        throw ShapeError("weighted_slice_mse: need one weight per leading slice");
    const int64_t P = a.dim(0);
    const int64_t M = P > 0 ? a.numel() / P : 0;
    double acc = 0.0;
    for (int64_t p = 0; p < P; ++p) {
        const T* pa = a.ptr() + p * M;
        const T* pt = target.ptr() + p * M;
        double s = 0.0;
        for (int64_t i = 0; i < M; ++i) {
            double d = double(pa[i]) - double(pt[i]);
            s += d * d;
        }
        acc += double(weights[size_t(p)]) * s / double(M);
    }
    auto out = TensorT<T>::scalar(T(acc));
    if (detail::tracing<T>({&a, &target})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), ti = target.impl(), oi = out.impl();
        TapeT<T>::current()->record("weighted_slice_mse", [ai, ti, oi, weights, P, M] {
            auto* g = detail::upstream(oi);
            if (!g) return;
            for (int64_t p = 0; p < P; ++p) {
                const T c = (*g)[0] * weights[size_t(p)] * T(2) / T(M);
                if (ai->requires_grad) {
                    ai->ensure_grad();
                    for (int64_t i = p * M; i < (p + 1) * M; ++i)
                        ai->grad[size_t(i)] += c * (ai->data[size_t(i)] - ti->data[size_t(i)]);
                }
                if (ti->requires_grad) {
                    ti->ensure_grad();
                    for (int64_t i = p * M; i < (p + 1) * M; ++i)
                        ti->grad[size_t(i)] -= c * (ai->data[size_t(i)] - ti->data[size_t(i)]);
                }
            }
        });
    }
    return out;
}

// Per leading slice: (v - min) / max(max - min, eps), so each non-constant
// slice spans [0,1] and constant slices map to zeros. The scale factors are
// treated as constants in the backward pass (detached), making this a plain
// per-slice affine map for gradient purposes.
template <typename T>
TensorT<T> minmax_normalize_slices(const TensorT<T>& a) {
    if (a.shape().empty())
        throw ShapeError("minmax_normalize_slices: scalar input");
    const int64_t P = a.dim(0);
    const int64_t M = P > 0 ? a.numel() / P : 0;
    if (M < 1) throw ShapeError("minmax_normalize_slices: empty slices");
    std::vector<T> lo(static_cast<size_t>(P)), inv_span(static_cast<size_t>(P));
    auto out = TensorT<T>::zeros(a.shape());
    for (int64_t p = 0; p < P; ++p) {
        const T* pa = a.ptr() + p * M;
        T mn = pa[0], mx = pa[0];
        for (int64_t i = 1; i < M; ++i) {
            mn = std::min(mn, pa[i]);
            mx = std::max(mx, pa[i]);
        }
        lo[size_t(p)] = mn;
        inv_span[size_t(p)] = T(1) / std::max(mx - mn, T(1e-8));
        T* po = out.ptr() + p * M;
        for (int64_t i = 0; i < M; ++i) po[i] = (pa[i] - mn) * inv_span[size_t(p)];
    }
    if (detail::tracing<T>({&a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        TapeT<T>::current()->record("minmax_normalize_slices", [ai, oi, inv_span, P, M] {
            auto* g = detail::upstream(oi);
            if (!g || !ai->requires_grad) return;
            ai->ensure_grad();
            for (int64_t p = 0; p < P; ++p) {
                const T c = inv_span[size_t(p)];
                for (int64_t i = p * M; i < (p + 1) * M; ++i)
                    ai->grad[size_t(i)] += c * (*g)[size_t(i)];
            }
        });
    }
    return out;
}

}  // namespace ar2
