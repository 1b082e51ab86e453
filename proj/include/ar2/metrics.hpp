#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ar2/corruptions.hpp"
#include "ar2/dataset.hpp"
#include "ar2/model.hpp"

namespace ar2 {

// Top-1 predictions over the whole set, batched forward passes.
std::vector<int> predict(CamNet& model, const Dataset& data, int batch_size = 128);

// 100 * fraction of mismatches.
double error_percent(const std::vector<int>& predictions, const std::vector<int>& labels);

// 100 * (1 - top-1 accuracy) on the set as-is.
double clean_error(CamNet& model, const Dataset& data);

using SeverityErrors = std::array<double, 5>;

// Deterministic corrupted evaluation copy. Per-image stream is
// derive(eval_seed, image index); outputs are quantized to 8 bits exactly as
// the on-disk cache stores them, so cached and uncached paths agree bitwise
// and every model is scored on identical images.
Dataset corrupted_copy(const Dataset& clean, Kind kind, int severity, uint64_t eval_seed);

// Disk cache of corrupted evaluation sets, keyed by (dataset hash, kind,
// severity, eval seed). An empty directory name disables persistence.
class EvalCache {
public:
    explicit EvalCache(std::string dir = "");
    Dataset corrupted(const Dataset& clean, Kind kind, int severity, uint64_t eval_seed);

private:
    std::string dir_;
};

// Per-severity errors of `model` on the corrupted copies of `test`.
SeverityErrors severity_errors(CamNet& model, const Dataset& test, Kind kind,
                               uint64_t eval_seed, EvalCache& cache);

// CE = 100 * sum(model errors) / sum(baseline errors) over severities 1..5.
// Zero baseline sum is undefined and rejected.
double corruption_error(const SeverityErrors& model_errors,
                        const SeverityErrors& baseline_errors);

// Unweighted mean over all 15 kinds; every kind must be present.
double mce(const std::map<Kind, double>& ce_by_kind);

// Column c = one repaired model; entry (r, c) = CE_r(model_c) - CE_r(vanilla).
// Rows always cover all 15 kinds in canonical order; columns cover the kinds
// a repaired model was supplied for (the full benchmark uses all 15).
struct TransferMatrix {
    std::vector<Kind> columns;
    std::vector<std::vector<double>> entries;  // [kNumKinds][columns.size()]
};

TransferMatrix compute_transfer_matrix(CamNet& vanilla,
                                       std::vector<std::pair<Kind, CamNet>>& repaired,
                                       const Dataset& test, uint64_t eval_seed,
                                       EvalCache& cache);

}  // namespace ar2
