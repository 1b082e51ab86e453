#pragma once

// Independent numerical oracles for the test suites. Everything here is
// deliberately written as plain loops over raw buffers so it shares no code
// with the library paths it checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "ar2/tensor.hpp"

namespace oracle {

// Direct cross-correlation, one multiply-add at a time.
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int64_t B,
                                        int64_t C, int64_t H, int64_t W,
                                        const std::vector<double>& k, int64_t K,
                                        int64_t R, int64_t S, int stride, int pad,
                                        int64_t& OH, int64_t& OW) {
    OH = (H + 2 * pad - R) / stride + 1;
    OW = (W + 2 * pad - S) / stride + 1;
    std::vector<double> out(size_t(B * K * OH * OW), 0.0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t ko = 0; ko < K; ++ko)
            for (int64_t oh = 0; oh < OH; ++oh)
                for (int64_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t r = 0; r < R; ++r)
                            for (int64_t s = 0; s < S; ++s) {
                                const int64_t ih = oh * stride + r - pad;
                                const int64_t iw = ow * stride + s - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x[size_t(((b * C + c) * H + ih) * W + iw)] *
                                       k[size_t(((ko * C + c) * R + r) * S + s)];
                            }
                    out[size_t(((b * K + ko) * OH + oh) * OW + ow)] = acc;
                }
    return out;
}

// out[b,c] = sum_k w[c,k] x[b,k] + bias[c]
inline std::vector<double> naive_linear(const std::vector<double>& x, int64_t B,
                                        int64_t C, const std::vector<double>& w,
                                        int64_t Cls, const std::vector<double>& bias) {
    std::vector<double> out(size_t(B * Cls), 0.0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < Cls; ++c) {
            double acc = bias[size_t(c)];
            for (int64_t k = 0; k < C; ++k)
                acc += w[size_t(c * C + k)] * x[size_t(b * C + k)];
            out[size_t(b * Cls + c)] = acc;
        }
    return out;
}

// Central finite differences of `loss()` with respect to every element of
// `param`, perturbing the live parameter storage in place.
template <typename T>
std::vector<double> fd_gradient(ar2::TensorT<T>& param,
                                const std::function<double()>& loss,
                                double step = 1e-3) {
    std::vector<double> grad(size_t(param.numel()));
    for (int64_t i = 0; i < param.numel(); ++i) {
        const T saved = param.ptr()[i];
        param.ptr()[i] = T(double(saved) + step);
        const double up = loss();
        param.ptr()[i] = T(double(saved) - step);
        const double down = loss();
        param.ptr()[i] = saved;
        grad[size_t(i)] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Relative error with a floor so finite-difference noise on near-zero
// gradients is judged in absolute terms.
inline double rel_error(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <typename T>
double max_rel_error(const std::vector<T>& analytic, const std::vector<double>& fd,
                     double floor = 1e-3) {
    double worst = 0.0;
    for (size_t i = 0; i < fd.size(); ++i)
        worst = std::max(worst, rel_error(double(analytic[i]), fd[i], floor));
    return worst;
}

}  // namespace oracle
