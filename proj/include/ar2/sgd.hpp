#pragma once

#include <unordered_map>
#include <vector>

#include "ar2/errors.hpp"
#include "ar2/tensor.hpp"

namespace ar2 {

// SGD with classical momentum: v <- momentum*v + grad, p <- p - lr*v.
// Velocity buffers are created on first use and keyed by parameter storage.
template <typename T>
class SgdStateT {
public:
    SgdStateT(T learning_rate, T momentum) : lr_(learning_rate), momentum_(momentum) {
        if (!(learning_rate >= T(0)))
            throw ConfigError("sgd: learning rate must be non-negative");
        if (!(momentum >= T(0)) || momentum >= T(1))
            throw ConfigError("sgd: momentum must lie in [0,1)");
    }

    T learning_rate() const { return lr_; }
    T momentum() const { return momentum_; }
    void set_learning_rate(T lr) { lr_ = lr; }

    // Applies one update to every parameter and clears their gradients.
    void step(const std::vector<TensorT<T>>& params) {
        for (const TensorT<T>& p : params) {
            if (!p.has_grad())
                throw NumericError("sgd: parameter of shape " + shape_str(p.shape()) +
                                   " has no gradient");
        }
        for (TensorT<T> p : params) {
            auto& v = velocity_for(p);
            const std::vector<T>& g = p.grad();
            T* pd = p.ptr();
            for (size_t i = 0; i < v.size(); ++i) {
                v[i] = momentum_ * v[i] + g[i];
                pd[i] -= lr_ * v[i];
            }
            p.zero_grad();
        }
    }

private:
    std::vector<T>& velocity_for(const TensorT<T>& p) {
        auto key = p.impl().get();
        auto it = velocities_.find(key);
        if (it == velocities_.end())
            it = velocities_.emplace(key, std::vector<T>(p.data().size(), T(0))).first;
        if (it->second.size() != p.data().size())
            throw ShapeError("sgd: velocity/parameter size mismatch");
        return it->second;
    }

    T lr_;
    T momentum_;
    std::unordered_map<const TensorImpl<T>*, std::vector<T>> velocities_;
};

using SgdState = SgdStateT<float>;

template <typename T>
void zero_grads(const std::vector<TensorT<T>>& params) {
    for (TensorT<T> p : params) p.zero_grad();
}

}  // namespace ar2
