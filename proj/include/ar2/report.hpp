#pragma once

#include <string>

#include "ar2/metrics.hpp"

namespace ar2 {

// Full evaluation of one model against one normalization baseline.
struct EvalReport {
    std::string model_id;
    std::string baseline_id;
    uint64_t eval_seed = 0;
    uint64_t dataset_hash = 0;
    double clean_error = 0.0;
    double baseline_clean_error = 0.0;
    struct KindResult {
        Kind kind = Kind::GN;
        SeverityErrors model_errors{};
        SeverityErrors baseline_errors{};
        double ce = 0.0;
    };
    std::vector<KindResult> kinds;  // all 15 in canonical order
    double mce = 0.0;

    bool operator==(const EvalReport&) const = default;
};
inline bool operator==(const EvalReport::KindResult& a, const EvalReport::KindResult& b) {
    return a.kind == b.kind && a.model_errors == b.model_errors &&
           a.baseline_errors == b.baseline_errors && a.ce == b.ce;
}

EvalReport evaluate(CamNet& model, CamNet& baseline, const Dataset& test,
                    uint64_t eval_seed, EvalCache& cache, const std::string& model_id,
                    const std::string& baseline_id);

// Machine-readable form: parses back to an equal value (doubles emitted with
// round-trip precision).
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& json_text);
void write_report(const std::string& path, const EvalReport& report);
EvalReport read_report(const std::string& path);

// Aligned human-readable table.
std::string render_report_table(const EvalReport& report);

// Transfer-matrix serialization: CSV round-trips; the heat grid renders each
// entry as a colored cell (blue negative / white zero / red positive).
void write_transfer_csv(const std::string& path, const TransferMatrix& tm);
TransferMatrix read_transfer_csv(const std::string& path);
void write_transfer_heatgrid(const std::string& path, const TransferMatrix& tm,
                             int cell_px = 24);

}  // namespace ar2
