#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ar2/errors.hpp"
#include "ar2/rng.hpp"
#include "ar2/tensor.hpp"

namespace ar2 {

// Architecture metadata for the CAM-compatible classifier: a plain
// convolutional backbone (3x3 kernels, no bias, relu after every layer,
// stride-2 downsampling at layers 3 and 5) followed by global average
// pooling and a single linear head. Channel widths are
// {w, w, 2w, 2w, 2w, 2w} for base width w.
struct ArchConfig {
    int64_t input_hw = 32;
    int64_t input_channels = 3;
    int64_t classes = 10;
    int64_t base_width = 32;

    bool operator==(const ArchConfig&) const = default;

    int64_t feature_channels() const { return 2 * base_width; }
    int64_t feature_hw() const { return input_hw / 4; }

    std::vector<int64_t> layer_widths() const {
        const int64_t w = base_width;
        return {w, w, 2 * w, 2 * w, 2 * w, 2 * w};
    }
    static std::vector<int> layer_strides() { return {1, 1, 2, 1, 2, 1}; }

    void validate() const {
        if (input_hw < 16)
            throw ConfigError("architecture: input size " + std::to_string(input_hw) +
                              " too small for the two stride-2 layers (need >= 16)");
        if (classes < 2) throw ConfigError("architecture: need at least 2 classes");
        if (base_width < 1) throw ConfigError("architecture: base width must be >= 1");
        if (input_channels < 1)
            throw ConfigError("architecture: input channels must be >= 1");
    }
};

template <typename T>
struct ForwardResultT {
    TensorT<T> logits;    // [B, Classes]
    TensorT<T> features;  // [B, C, H_f, W_f], the last conv activation
};

// Backbone / head split. The two sets are disjoint and together cover every
// trainable parameter; refinement steps update only the backbone set.
template <typename T>
struct ParamPartitionT {
    std::vector<TensorT<T>> backbone;
    std::vector<TensorT<T>> head;

    std::vector<TensorT<T>> all() const {
        std::vector<TensorT<T>> v = backbone;
        v.insert(v.end(), head.begin(), head.end());
        return v;
    }
};

template <typename T>
class CamNetT {
public:
    CamNetT() = default;

    // Deterministic He-style initialization from the seed; bias starts at 0.
    static CamNetT build(const ArchConfig& arch, uint64_t seed) {
        arch.validate();
        CamNetT net;
        net.arch_ = arch;
        Rng rng = Rng::derive(seed, 0x6d6f64656cull);  // model stream
        const auto widths = arch.layer_widths();
        const auto strides = ArchConfig::layer_strides();
        int64_t in_ch = arch.input_channels;
        for (size_t l = 0; l < widths.size(); ++l) {
            const int64_t out_ch = widths[l];
            const int64_t fan_in = in_ch * 9;
            const double std_dev = std::sqrt(2.0 / double(fan_in));
            auto w = TensorT<T>::zeros({out_ch, in_ch, 3, 3}, true);
            for (int64_t i = 0; i < w.numel(); ++i)
                w.ptr()[i] = T(rng.normal() * std_dev);
            net.conv_weights_.push_back(std::move(w));
            net.conv_strides_.push_back(strides[l]);
            in_ch = out_ch;
        }
        const int64_t c = arch.feature_channels();
        const double head_std = std::sqrt(2.0 / double(c));
        net.head_weight_ = TensorT<T>::zeros({arch.classes, c}, true);
        for (int64_t i = 0; i < net.head_weight_.numel(); ++i)
            net.head_weight_.ptr()[i] = T(rng.normal() * head_std);
        net.head_bias_ = TensorT<T>::zeros({arch.classes}, true);
        return net;
    }

    const ArchConfig& arch() const { return arch_; }
    size_t conv_layer_count() const { return conv_weights_.size(); }
    const TensorT<T>& conv_weight(size_t l) const { return conv_weights_[l]; }
    TensorT<T>& conv_weight(size_t l) { return conv_weights_[l]; }
    int conv_stride(size_t l) const { return conv_strides_[l]; }
    const TensorT<T>& head_weight() const { return head_weight_; }
    TensorT<T>& head_weight() { return head_weight_; }
    const TensorT<T>& head_bias() const { return head_bias_; }
    TensorT<T>& head_bias() { return head_bias_; }

    // Full pass returning logits together with the last-conv feature map.
    ForwardResultT<T> forward(const TensorT<T>& batch) const {
        const Shape& s = batch.shape();
        if (s.size() != 4 || s[1] != arch_.input_channels || s[2] != arch_.input_hw ||
            s[3] != arch_.input_hw)
            throw ShapeError("forward: batch " + shape_str(s) + " does not match model input [B," +
                             std::to_string(arch_.input_channels) + "," +
                             std::to_string(arch_.input_hw) + "," +
                             std::to_string(arch_.input_hw) + "]");
        TensorT<T> x = batch;
        for (size_t l = 0; l < conv_weights_.size(); ++l)
            x = relu(conv2d(x, conv_weights_[l], conv_strides_[l], 1));
        TensorT<T> pooled = global_avg_pool(x);
        TensorT<T> logits = linear(pooled, head_weight_, head_bias_);
        return {std::move(logits), std::move(x)};
    }

    ParamPartitionT<T> partition_params() const {
        ParamPartitionT<T> p;
        p.backbone = conv_weights_;
        p.head = {head_weight_, head_bias_};
        return p;
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& w : conv_weights_) n += w.numel();
        return n + head_weight_.numel() + head_bias_.numel();
    }

    // Fresh storage for every parameter; used to freeze the reference model.
    CamNetT clone() const {
        CamNetT net;
        net.arch_ = arch_;
        net.conv_strides_ = conv_strides_;
        for (const auto& w : conv_weights_) net.conv_weights_.push_back(w.clone());
        net.head_weight_ = head_weight_.clone();
        net.head_bias_ = head_bias_.clone();
        return net;
    }

    template <typename U>
    CamNetT<U> cast() const {
        CamNetT<U> net;
        net.arch_ = arch_;
        net.conv_strides_ = conv_strides_;
        for (const auto& w : conv_weights_) net.conv_weights_.push_back(w.template cast<U>());
        net.head_weight_ = head_weight_.template cast<U>();
        net.head_bias_ = head_bias_.template cast<U>();
        return net;
    }

    void set_requires_grad(bool v) {
        for (auto& w : conv_weights_) w.set_requires_grad(v);
        head_weight_.set_requires_grad(v);
        head_bias_.set_requires_grad(v);
    }

    // Named parameter views in checkpoint order.
    std::vector<std::pair<std::string, TensorT<T>>> named_params() const {
        std::vector<std::pair<std::string, TensorT<T>>> out;
        for (size_t l = 0; l < conv_weights_.size(); ++l)
            out.emplace_back("conv" + std::to_string(l) + ".weight", conv_weights_[l]);
        out.emplace_back("head.weight", head_weight_);
        out.emplace_back("head.bias", head_bias_);
        return out;
    }

private:
    ArchConfig arch_;
    std::vector<TensorT<T>> conv_weights_;
    std::vector<int> conv_strides_;
    TensorT<T> head_weight_;
    TensorT<T> head_bias_;

    template <typename U>
    friend class CamNetT;
};

using CamNet = CamNetT<float>;
using ForwardResult = ForwardResultT<float>;
using ParamPartition = ParamPartitionT<float>;

}  // namespace ar2
