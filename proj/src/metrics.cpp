#include "ar2/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ar2/hash.hpp"
#include "ar2/rng.hpp"

namespace fs = std::filesystem;

namespace ar2 {

std::vector<int> predict(CamNet& model, const Dataset& data, int batch_size) {
    if (data.size() < 1) throw DataError("predict: empty dataset");
    if (batch_size < 1) throw ConfigError("predict: batch_size must be >= 1");
    const int classes = model.arch().classes;
    std::vector<int> preds(size_t(data.size()));
    Tape::Scope off(Tape::no_tape());
    for (int64_t start = 0; start < data.size(); start += batch_size) {
        const int64_t count = std::min<int64_t>(batch_size, data.size() - start);
        std::vector<int64_t> idx(static_cast<size_t>(count));
        std::iota(idx.begin(), idx.end(), start);
        auto logits = model.forward(data.gather(idx)).logits;
        for (int64_t b = 0; b < count; ++b) {
            const float* row = logits.ptr() + b * classes;
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (row[c] > row[best]) best = c;
            preds[size_t(start + b)] = best;
        }
    }
    return preds;
}

double error_percent(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw DataError("error_percent: prediction/label size mismatch");
    int64_t wrong = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] != labels[i]) ++wrong;
    return 100.0 * double(wrong) / double(predictions.size());
}

double clean_error(CamNet& model, const Dataset& data) {
    return error_percent(predict(model, data), data.labels);
}

Dataset corrupted_copy(const Dataset& clean, Kind kind, int severity, uint64_t eval_seed) {
    Dataset out = clean;
    const int64_t fl = clean.image_floats();
    for (int64_t i = 0; i < clean.size(); ++i) {
        CorruptionSpec spec{kind, severity, Rng::derive_seed(eval_seed, uint64_t(i))};
        corrupt_chw(clean.image_ptr(i), out.image_ptr(i), clean.hw, spec);
        // Quantize like the on-disk cache so every path sees identical bytes.
        float* img = out.image_ptr(i);
        for (int64_t p = 0; p < fl; ++p) img[p] = float(quantize_u8(img[p])) / 255.0f;
    }
    out.content_hash = out.compute_hash();
    return out;
}

EvalCache::EvalCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) fs::create_directories(dir_);
}

Dataset EvalCache::corrupted(const Dataset& clean, Kind kind, int severity,
                             uint64_t eval_seed) {
    // Persistence uses the cifar-binary layout, which pins 32x32 10-class
    // data; other geometries are generated in memory each time.
    if (dir_.empty() || clean.hw != 32 || clean.classes != 10)
        return corrupted_copy(clean, kind, severity, eval_seed);

    uint64_t key = clean.content_hash;
    const int k = int(kind);
    key = fnv1a(&k, sizeof k, key);
    key = fnv1a(&severity, sizeof severity, key);
    key = fnv1a(&eval_seed, sizeof eval_seed, key);
    char name[64];
    std::snprintf(name, sizeof name, "corrupt-%016llx.bin", (unsigned long long)key);
    const std::string path = dir_ + "/" + name;

    if (fs::exists(path)) {
        Dataset cached = load_cifar_binary(path);
        if (cached.size() != clean.size())
            throw DataError("eval cache: " + path + " has wrong record count");
        cached.split = clean.split;
        return cached;
    }
    Dataset out = corrupted_copy(clean, kind, severity, eval_seed);
    const std::string tmp = path + ".tmp";
    save_cifar_binary(tmp, out);
    fs::rename(tmp, path);
    return out;
}

SeverityErrors severity_errors(CamNet& model, const Dataset& test, Kind kind,
                               uint64_t eval_seed, EvalCache& cache) {
    SeverityErrors errors{};
    for (int s = 1; s <= 5; ++s) {
        Dataset corrupted = cache.corrupted(test, kind, s, eval_seed);
        errors[size_t(s - 1)] = error_percent(predict(model, corrupted), corrupted.labels);
    }
    return errors;
}

double corruption_error(const SeverityErrors& model_errors,
                        const SeverityErrors& baseline_errors) {
    double num = 0.0, den = 0.0;
    for (int s = 0; s < 5; ++s) {
        num += model_errors[size_t(s)];
        den += baseline_errors[size_t(s)];
    }
    if (den <= 0.0)
        throw NumericError("corruption_error: baseline made no errors; CE undefined");
    return 100.0 * num / den;
}

double mce(const std::map<Kind, double>& ce_by_kind) {
    double acc = 0.0;
    for (Kind k : all_kinds()) {
        auto it = ce_by_kind.find(k);
        if (it == ce_by_kind.end())
            throw ConfigError(std::string("mce: missing CE for ") + kind_name(k));
        acc += it->second;
    }
    return acc / double(kNumKinds);
}

TransferMatrix compute_transfer_matrix(CamNet& vanilla,
                                       std::vector<std::pair<Kind, CamNet>>& repaired,
                                       const Dataset& test, uint64_t eval_seed,
                                       EvalCache& cache) {
    if (repaired.empty()) throw ConfigError("transfer matrix: no repaired models given");
    for (size_t i = 0; i < repaired.size(); ++i)
        for (size_t j = i + 1; j < repaired.size(); ++j)
            if (repaired[i].first == repaired[j].first)
                throw ConfigError(std::string("transfer matrix: duplicate model for ") +
                                  kind_name(repaired[i].first));

    TransferMatrix tm;
    for (const auto& [kind, model] : repaired) tm.columns.push_back(kind);
    tm.entries.assign(size_t(kNumKinds), std::vector<double>(repaired.size(), 0.0));

    for (Kind row : all_kinds()) {
        const auto base = severity_errors(vanilla, test, row, eval_seed, cache);
        for (size_t c = 0; c < repaired.size(); ++c) {
            const auto model_e =
                severity_errors(repaired[c].second, test, row, eval_seed, cache);
            // CE of vanilla against itself is 100 by construction.
            tm.entries[size_t(int(row))][c] = corruption_error(model_e, base) - 100.0;
        }
    }
    return tm;
}

}  // namespace ar2
