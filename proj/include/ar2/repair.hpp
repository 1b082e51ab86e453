#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ar2/corruptions.hpp"
#include "ar2/dataset.hpp"
#include "ar2/model.hpp"
#include "ar2/sgd.hpp"

namespace ar2 {

struct RepairConfig {
    int outer_iterations = 30;  // T
    int refine_steps = 1;       // N
    int finetune_steps = 1;     // M
    int top_k = 3;              // k
    double alpha = 1.0;
    float refine_lr = 1e-3f;
    float finetune_lr = 1e-3f;
    float momentum = 0.9f;
    int batch_size = 64;
    Kind kind = Kind::GN;
    int severity = 3;
    uint64_t seed = 0;
    bool cam_normalized = false;  // comparison variant; raw maps by default

    void validate() const;
    uint64_t hash() const;  // field-order-stable content hash for provenance
};

struct StageLogEntry {
    int iteration = 0;  // 1-based outer iteration
    std::string stage;  // "refine" or "finetune"
    int step = 0;       // 1-based within the stage
    double loss = 0.0;
    int64_t unix_ms = 0;
};

struct RepairRun {
    std::vector<StageLogEntry> log;
    uint64_t config_hash = 0;
    uint64_t dataset_hash = 0;
};

// Maps a clean CHW batch to its corrupted counterpart. `idx` are the dataset
// indices of the batch rows; implementations must derive per-image streams
// from (step_seed, idx[i]) so batch composition never changes outputs.
using BatchCorruptor =
    std::function<Tensor(const Tensor& clean, const std::vector<int64_t>& idx,
                         uint64_t step_seed)>;

BatchCorruptor corruption_corruptor(Kind kind, int severity);
BatchCorruptor identity_corruptor();

// One CAM-guided refinement step: corrupt the batch, evaluate the alignment
// loss against the frozen reference, and step the backbone only. Head
// parameters are bit-unchanged.
double refine_step(CamNet& theta, CamNet& theta_ref, const Tensor& clean,
                   const std::vector<int64_t>& idx, const RepairConfig& cfg,
                   SgdState& opt, uint64_t step_seed, const BatchCorruptor& corruptor);

// One fine-tuning step: loss = (CE(clean) + CE(corrupted)) / 2, stepping all
// parameters.
double finetune_step(CamNet& theta, const Tensor& clean,
                     const std::vector<int64_t>& idx, const std::vector<int>& labels,
                     const RepairConfig& cfg, SgdState& opt, uint64_t step_seed,
                     const BatchCorruptor& corruptor);

// Alternating repair: freezes a deep copy of theta0 as reference, then runs
// T outer iterations of N refine steps followed by M fine-tune steps.
// An empty corruptor selects the configured corruption.
std::pair<CamNet, RepairRun> ar2_repair(const CamNet& theta0, const Dataset& data,
                                        const RepairConfig& cfg,
                                        const BatchCorruptor& corruptor = {});

// Ablation: the same schedule with refinement disabled — T*M fine-tune steps,
// matching ar2_repair's fine-tune budget.
std::pair<CamNet, RepairRun> finetune_only_baseline(const CamNet& theta0,
                                                    const Dataset& data,
                                                    const RepairConfig& cfg,
                                                    const BatchCorruptor& corruptor = {});

// Line-delimited structured log: one JSON object per line, header first.
void write_run_log(const std::string& path, const RepairRun& run);

}  // namespace ar2
