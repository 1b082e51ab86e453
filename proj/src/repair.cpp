#include "ar2/repair.hpp"

#include <chrono>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ar2/cam.hpp"
#include "ar2/hash.hpp"
#include "ar2/rng.hpp"

namespace ar2 {

namespace {

int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

uint64_t hash_field(uint64_t h, const void* p, size_t n) { return fnv1a(p, n, h); }

}  // namespace

void RepairConfig::validate() const {
    if (outer_iterations < 1 || refine_steps < 1 || finetune_steps < 1 || top_k < 1)
        throw ConfigError("repair: T, N, M, k must all be >= 1 (got T=" +
                          std::to_string(outer_iterations) + " N=" +
                          std::to_string(refine_steps) + " M=" +
                          std::to_string(finetune_steps) + " k=" + std::to_string(top_k) +
                          ")");
    if (alpha < 0.0) throw ConfigError("repair: alpha must be >= 0");
    if (!(refine_lr > 0.0f) || !(finetune_lr > 0.0f))
        throw ConfigError("repair: learning rates must be positive");
    if (momentum < 0.0f || momentum >= 1.0f)
        throw ConfigError("repair: momentum must lie in [0,1)");
    if (batch_size < 1) throw ConfigError("repair: batch_size must be >= 1");
    if (severity < 1 || severity > 5)
        throw ConfigError("repair: severity must be in [1,5]");
    if (int(kind) < 0 || int(kind) >= kNumKinds)
        throw ConfigError("repair: unknown corruption kind");
}

uint64_t RepairConfig::hash() const {
    uint64_t h = fnv1a("ar2-repair-config-v1", 20);
    h = hash_field(h, &outer_iterations, sizeof outer_iterations);
    h = hash_field(h, &refine_steps, sizeof refine_steps);
    h = hash_field(h, &finetune_steps, sizeof finetune_steps);
    h = hash_field(h, &top_k, sizeof top_k);
    h = hash_field(h, &alpha, sizeof alpha);
    h = hash_field(h, &refine_lr, sizeof refine_lr);
    h = hash_field(h, &finetune_lr, sizeof finetune_lr);
    h = hash_field(h, &momentum, sizeof momentum);
    h = hash_field(h, &batch_size, sizeof batch_size);
    const int k = int(kind);
    h = hash_field(h, &k, sizeof k);
    h = hash_field(h, &severity, sizeof severity);
    h = hash_field(h, &seed, sizeof seed);
    const int norm = cam_normalized ? 1 : 0;
    h = hash_field(h, &norm, sizeof norm);
    return h;
}

BatchCorruptor corruption_corruptor(Kind kind, int severity) {
    return [kind, severity](const Tensor& clean, const std::vector<int64_t>& idx,
                            uint64_t step_seed) {
        const Shape& s = clean.shape();
        if (s.size() != 4 || s[0] != int64_t(idx.size()))
            throw ShapeError("corruptor: batch/index mismatch");
        const int hw = int(s[2]);
        auto out = Tensor::zeros(s);
        const int64_t fl = 3 * int64_t(hw) * hw;
        for (size_t b = 0; b < idx.size(); ++b) {
            CorruptionSpec spec{kind, severity, Rng::derive_seed(step_seed, uint64_t(idx[b]))};
            corrupt_chw(clean.ptr() + int64_t(b) * fl, out.ptr() + int64_t(b) * fl, hw,
                        spec);
        }
        return out;
    };
}

BatchCorruptor identity_corruptor() {
    return [](const Tensor& clean, const std::vector<int64_t>&, uint64_t) {
        return clean.clone();
    };
}

double refine_step(CamNet& theta, CamNet& theta_ref, const Tensor& clean,
                   const std::vector<int64_t>& idx, const RepairConfig& cfg,
                   SgdState& opt, uint64_t step_seed, const BatchCorruptor& corruptor) {
    if (clean.dim(0) < 1) throw DataError("refine_step: empty batch");
    Tensor corrupted = corruptor(clean, idx, step_seed);

    auto parts = theta.partition_params();
    zero_grads(parts.all());

    Tape tape;
    Tensor loss;
    {
        Tape::Scope scope(tape);
        loss = cam_alignment_loss(theta, theta_ref, clean, corrupted, cfg.top_k,
                                  cfg.alpha, cfg.cam_normalized);
    }
    tape.backward(loss);
    opt.step(parts.backbone);
    // The projection also produced head-weight gradients; refinement never
    // consumes them, and they must not leak into a later fine-tune step.
    zero_grads(parts.head);
    return double(loss.item());
}

double finetune_step(CamNet& theta, const Tensor& clean,
                     const std::vector<int64_t>& idx, const std::vector<int>& labels,
                     const RepairConfig& cfg, SgdState& opt, uint64_t step_seed,
                     const BatchCorruptor& corruptor) {
    if (clean.dim(0) < 1) throw DataError("finetune_step: empty batch");
    (void)cfg;
    Tensor corrupted = corruptor(clean, idx, step_seed);

    auto parts = theta.partition_params();
    zero_grads(parts.all());

    Tape tape;
    Tensor loss;
    {
        Tape::Scope scope(tape);
        auto clean_logits = theta.forward(clean).logits;
        auto corrupt_logits = theta.forward(corrupted).logits;
        loss = scale(add(softmax_cross_entropy(clean_logits, labels),
                         softmax_cross_entropy(corrupt_logits, labels)),
                     0.5f);
    }
    tape.backward(loss);
    opt.step(parts.all());
    return double(loss.item());
}

namespace {

std::pair<CamNet, RepairRun> run_repair(const CamNet& theta0, const Dataset& data,
                                        const RepairConfig& cfg,
                                        const BatchCorruptor& custom, bool no_refine) {
    cfg.validate();
    if (data.size() < 1) throw DataError("repair: empty dataset");
    if (data.classes != theta0.arch().classes || data.hw != theta0.arch().input_hw)
        throw DataError("repair: dataset geometry does not match the model");

    CamNet theta = theta0.clone();
    theta.set_requires_grad(true);
    CamNet theta_ref = theta0.clone();
    theta_ref.set_requires_grad(false);

    const BatchCorruptor corruptor =
        custom ? custom : corruption_corruptor(cfg.kind, cfg.severity);

    SgdState refine_opt(cfg.refine_lr, cfg.momentum);
    SgdState finetune_opt(cfg.finetune_lr, cfg.momentum);

    // Seed-derived shuffled index stream, reshuffled at every epoch boundary.
    std::vector<int64_t> order(size_t(data.size()));
    std::iota(order.begin(), order.end(), int64_t(0));
    Rng shuffle_rng(Rng::derive(cfg.seed, 0x73687566666c65ull));  // batch stream
    size_t cursor = order.size();
    auto draw = [&] {
        std::vector<int64_t> idx(size_t(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            if (cursor == order.size()) {
                shuffle_rng.shuffle(order);
                cursor = 0;
            }
            idx[size_t(i)] = order[cursor++];
        }
        return idx;
    };

    RepairRun run;
    run.config_hash = cfg.hash();
    run.dataset_hash = data.content_hash;

    for (int t = 1; t <= cfg.outer_iterations; ++t) {
        if (!no_refine) {
            for (int n = 1; n <= cfg.refine_steps; ++n) {
                const auto idx = draw();
                const auto clean = data.gather(idx);
                const uint64_t step_seed =
                    Rng::derive_seed(cfg.seed, uint64_t(t), uint64_t(n));
                const double loss = refine_step(theta, theta_ref, clean, idx, cfg,
                                                refine_opt, step_seed, corruptor);
                run.log.push_back({t, "refine", n, loss, now_ms()});
            }
        }
        for (int m = 1; m <= cfg.finetune_steps; ++m) {
            const auto idx = draw();
            const auto clean = data.gather(idx);
            const auto labels = data.gather_labels(idx);
            const uint64_t step_seed =
                Rng::derive_seed(cfg.seed, uint64_t(t), (uint64_t(1) << 32) | uint64_t(m));
            const double loss = finetune_step(theta, clean, idx, labels, cfg,
                                              finetune_opt, step_seed, corruptor);
            run.log.push_back({t, "finetune", m, loss, now_ms()});
        }
    }
    return {std::move(theta), std::move(run)};
}

}  // namespace

std::pair<CamNet, RepairRun> ar2_repair(const CamNet& theta0, const Dataset& data,
                                        const RepairConfig& cfg,
                                        const BatchCorruptor& corruptor) {
    return run_repair(theta0, data, cfg, corruptor, /*no_refine=*/false);
}

std::pair<CamNet, RepairRun> finetune_only_baseline(const CamNet& theta0,
                                                    const Dataset& data,
                                                    const RepairConfig& cfg,
                                                    const BatchCorruptor& corruptor) {
    return run_repair(theta0, data, cfg, corruptor, /*no_refine=*/true);
}

void write_run_log(const std::string& path, const RepairRun& run) {
    std::ofstream out(path);
    if (!out) throw DataError("run log: cannot write " + path);
    nlohmann::json header;
    header["type"] = "run";
    header["config_hash"] = run.config_hash;
    header["dataset_hash"] = run.dataset_hash;
    header["steps"] = run.log.size();
    out << header.dump() << "\n";
    for (const StageLogEntry& e : run.log) {
        nlohmann::json j;
        j["type"] = "step";
        j["iteration"] = e.iteration;
        j["stage"] = e.stage;
        j["step"] = e.step;
        j["loss"] = e.loss;
        j["unix_ms"] = e.unix_ms;
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("run log: write failed for " + path);
}

}  // namespace ar2
