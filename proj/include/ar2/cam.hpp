#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "ar2/model.hpp"
#include "ar2/tensor.hpp"

namespace ar2 {

// One class activation map at feature-map resolution.
struct CamMap {
    std::vector<float> values;  // h*w row-major
    int h = 0;
    int w = 0;
    int class_id = -1;
    std::string source;  // which model produced it
};

// Ordered unique class ids entering the alignment loss; size <= 2k.
struct ClassSet {
    std::vector<int> ids;
};

// M_c[h,w] = sum_k W[c,k] * features[b,k,h,w] for every batch item.
// Differentiable w.r.t. backbone parameters through `features` when invoked
// under a tape (via cam_project); this overload returns detached maps.
template <typename T>
std::vector<CamMap> compute_cam(const CamNetT<T>& model, const TensorT<T>& features,
                                int class_id, const std::string& source = "") {
    const Shape& fs = features.shape();
    if (fs.size() != 4)
        throw ShapeError("compute_cam: expected 4-d features, got " + shape_str(fs));
    if (class_id < 0 || class_id >= model.arch().classes)
        throw ShapeError("compute_cam: class " + std::to_string(class_id) +
                         " out of range for " + std::to_string(model.arch().classes) +
                         " classes");
    if (fs[1] != model.arch().feature_channels())
        throw ShapeError("compute_cam: features have " + std::to_string(fs[1]) +
                         " channels, model expects " +
                         std::to_string(model.arch().feature_channels()));
    const int64_t B = fs[0], C = fs[1], H = fs[2], W = fs[3];
    std::vector<CamMap> maps(static_cast<size_t>(B));
    const T* wrow = model.head_weight().ptr() + int64_t(class_id) * C;
    for (int64_t b = 0; b < B; ++b) {
        CamMap& m = maps[size_t(b)];
        m.h = int(H);
        m.w = int(W);
        m.class_id = class_id;
        m.source = source;
        m.values.assign(size_t(H * W), 0.0f);
        for (int64_t k = 0; k < C; ++k) {
            const T* f = features.ptr() + ((b * C + k) * H * W);
            for (int64_t i = 0; i < H * W; ++i)
                m.values[size_t(i)] += float(wrow[k] * f[i]);
        }
    }
    return maps;
}

// Bilinear upsample to H x W then min-max normalize into [0,1]; constant maps
// normalize to all zeros.
std::vector<float> upsample_normalize(const CamMap& cam, int H, int W);

// Indices of the k largest values in `row`, ties broken toward the lower
// class id (sort is on (-value, id)).
template <typename T>
std::vector<int> topk_row(const T* row, int classes, int k) {
    std::vector<int> idx(static_cast<size_t>(classes));
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
    });
    idx.resize(size_t(k));
    return idx;
}

// C(x, x') per batch item: union of the top-k classes of the two logit rows,
// deduplicated, ordered by first appearance (x's ranking first).
template <typename T>
ClassSet top2k_union(const T* row_x, const T* row_xp, int classes, int k) {
    if (k < 1) throw ConfigError("top2k: k must be >= 1");
    if (2 * k > classes)
        throw ConfigError("top2k: 2k = " + std::to_string(2 * k) + " exceeds class count " +
                          std::to_string(classes));
    ClassSet set;
    auto push = [&](int id) {
        if (std::find(set.ids.begin(), set.ids.end(), id) == set.ids.end())
            set.ids.push_back(id);
    };
    for (int id : topk_row(row_x, classes, k)) push(id);
    for (int id : topk_row(row_xp, classes, k)) push(id);
    return set;
}

// Forward both batches without recording and build the per-item class sets.
template <typename T>
std::vector<ClassSet> top2k_classes(CamNetT<T>& model, const TensorT<T>& x,
                                    const TensorT<T>& xp, int k) {
    auto out_x = model.forward(x);
    auto out_xp = model.forward(xp);
    const int64_t B = x.shape()[0];
    const int classes = model.arch().classes;
    std::vector<ClassSet> sets(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b)
        sets[size_t(b)] = top2k_union(out_x.logits.ptr() + b * classes,
                                      out_xp.logits.ptr() + b * classes, classes, k);
    return sets;
}

// L = mean over batch items of
//     sum_{c in C(x,x')} [ MSE(M_c(x;th), M_c(x;ref)) + alpha*MSE(M_c(x';th), M_c(x;ref)) ].
// Reference terms are detached; gradient flows into theta only. When
// `normalized` is set, every map is min-max normalized with detached scale
// factors before the MSE (comparison variant; default is raw maps).
template <typename T>
TensorT<T> cam_alignment_loss(CamNetT<T>& theta, CamNetT<T>& theta_ref,
                              const TensorT<T>& x, const TensorT<T>& xp, int k,
                              double alpha, bool normalized = false) {
    if (!(theta.arch() == theta_ref.arch()))
        throw ShapeError("cam_alignment_loss: architecture mismatch between model and reference");
    if (alpha < 0) throw ConfigError("cam_alignment_loss: alpha must be >= 0");
    const int64_t B = x.shape()[0];

    // Class selection and the reference forward happen outside any tape.
    std::vector<ClassSet> sets;
    TensorT<T> ref_features;
    {
        typename TapeT<T>::Scope off(TapeT<T>::no_tape());
        sets = top2k_classes(theta, x, xp, k);
        ref_features = theta_ref.forward(x).features;
    }

    std::vector<CamPair> pairs;
    std::vector<T> w_clean, w_corrupt;
    for (int64_t b = 0; b < B; ++b)
        for (int id : sets[size_t(b)].ids) {
            pairs.push_back({b, id});
            w_clean.push_back(T(1) / T(B));
            w_corrupt.push_back(T(alpha) / T(B));
        }

    auto feat_x = theta.forward(x).features;
    auto feat_xp = theta.forward(xp).features;
    auto cam_x = cam_project(feat_x, theta.head_weight(), pairs);
    auto cam_xp = cam_project(feat_xp, theta.head_weight(), pairs);
    TensorT<T> cam_ref;
    {
        typename TapeT<T>::Scope off(TapeT<T>::no_tape());
        cam_ref = cam_project(ref_features, theta_ref.head_weight(), pairs);
    }

    if (normalized) {
        cam_x = minmax_normalize_slices(cam_x);
        cam_xp = minmax_normalize_slices(cam_xp);
        typename TapeT<T>::Scope off(TapeT<T>::no_tape());
        cam_ref = minmax_normalize_slices(cam_ref);
    }

    auto clean_term = weighted_slice_mse(cam_x, cam_ref, w_clean);
    auto corrupt_term = weighted_slice_mse(cam_xp, cam_ref, w_corrupt);
    return add(clean_term, corrupt_term);
}

}  // namespace ar2
