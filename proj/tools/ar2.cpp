#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "ar2/cam.hpp"
#include "ar2/checkpoint.hpp"
#include "ar2/config.hpp"
#include "ar2/corruptions.hpp"
#include "ar2/dataset.hpp"
#include "ar2/hash.hpp"
#include "ar2/metrics.hpp"
#include "ar2/model.hpp"
#include "ar2/repair.hpp"
#include "ar2/report.hpp"
#include "ar2/rng.hpp"

namespace fs = std::filesystem;
using namespace ar2;

namespace {

Kind parse_kind(const std::string& name) {
    auto kind = kind_from_name(name);
    if (!kind) {
        std::string known;
        for (Kind k : all_kinds()) known += std::string(known.empty() ? "" : " ") + kind_name(k);
        throw ConfigError("unknown corruption '" + name + "' (expected one of: " + known + ")");
    }
    return *kind;
}

uint64_t train_config_hash(const TrainConfig& cfg) {
    uint64_t h = fnv1a("ar2-train-config-v1", 19);
    auto mix = [&h](const void* p, size_t n) { h = fnv1a(p, n, h); };
    mix(&cfg.arch.input_hw, sizeof cfg.arch.input_hw);
    mix(&cfg.arch.input_channels, sizeof cfg.arch.input_channels);
    mix(&cfg.arch.classes, sizeof cfg.arch.classes);
    mix(&cfg.arch.base_width, sizeof cfg.arch.base_width);
    mix(&cfg.epochs, sizeof cfg.epochs);
    mix(&cfg.batch_size, sizeof cfg.batch_size);
    mix(&cfg.lr, sizeof cfg.lr);
    mix(&cfg.momentum, sizeof cfg.momentum);
    mix(&cfg.seed, sizeof cfg.seed);
    return h;
}

CamNet train_baseline_model(const TrainConfig& cfg, const Dataset& train,
                            double* final_loss) {
    auto net = CamNet::build(cfg.arch, cfg.seed);
    net.set_requires_grad(true);
    SgdState opt(cfg.lr, cfg.momentum);
    auto params = net.partition_params().all();

    std::vector<int64_t> order(size_t(train.size()));
    std::iota(order.begin(), order.end(), int64_t(0));
    Rng shuffle_rng(Rng::derive(cfg.seed, 0x747261696eull));  // epoch shuffles

    double epoch_loss = 0.0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double acc = 0.0;
        int64_t steps = 0;
        for (int64_t start = 0; start < train.size(); start += cfg.batch_size) {
            const int64_t count = std::min<int64_t>(cfg.batch_size, train.size() - start);
            std::vector<int64_t> idx(order.begin() + start, order.begin() + start + count);
            const auto batch = train.gather(idx);
            const auto labels = train.gather_labels(idx);
            Tape tape;
            Tensor loss;
            {
                Tape::Scope scope(tape);
                loss = softmax_cross_entropy(net.forward(batch).logits, labels);
            }
            tape.backward(loss);
            opt.step(params);
            acc += double(loss.item());
            ++steps;
        }
        epoch_loss = acc / double(steps);
        std::fprintf(stderr, "[train] epoch %d/%d  mean loss %.4f\n", epoch, cfg.epochs,
                     epoch_loss);
    }
    if (final_loss) *final_loss = epoch_loss;
    return net;
}

int cmd_train_baseline(const std::string& config_path) {
    const TrainConfig cfg = TrainConfig::from_file(config_path);
    Dataset train = load_dataset(cfg.train_data, cfg.format);
    if (train.classes != cfg.arch.classes || train.hw != cfg.arch.input_hw)
        throw DataError("train data geometry does not match the configured architecture");

    double final_loss = 0.0;
    CamNet net = train_baseline_model(cfg, train, &final_loss);

    Provenance prov;
    prov.seed = cfg.seed;
    prov.config_hash = train_config_hash(cfg);
    save_checkpoint(net, prov, cfg.out);
    std::fprintf(stderr, "[train] wrote %s\n", cfg.out.c_str());

    double err;
    std::string err_split;
    if (!cfg.test_data.empty()) {
        Dataset test = load_dataset(cfg.test_data, cfg.format);
        err = clean_error(net, test);
        err_split = "test";
    } else {
        err = clean_error(net, train);
        err_split = "train";
    }
    nlohmann::json j;
    j["model_id"] = cfg.out;
    j["clean_error"] = err;
    j["clean_error_split"] = err_split;
    j["train_images"] = train.size();
    j["epochs"] = cfg.epochs;
    j["final_train_loss"] = final_loss;
    j["config_hash"] = prov.config_hash;
    const std::string text = j.dump(2);
    std::printf("%s\n", text.c_str());
    if (!cfg.report_out.empty()) {
        std::ofstream out(cfg.report_out);
        if (!out) throw DataError("cannot write " + cfg.report_out);
        out << text << "\n";
    }
    return 0;
}

int cmd_corrupt(const std::string& in, const std::string& format_name_str,
                const std::string& kind_name_str, int severity, uint64_t seed,
                const std::string& out) {
    const DataFormat fmt = format_from_name(format_name_str);
    const Kind kind = parse_kind(kind_name_str);
    CorruptionSpec probe{kind, severity, seed};
    probe.validate();

    Dataset data = load_dataset(in, fmt);
    Dataset corrupted = data;
    for (int64_t i = 0; i < data.size(); ++i) {
        CorruptionSpec spec{kind, severity, Rng::derive_seed(seed, uint64_t(i))};
        corrupt_chw(data.image_ptr(i), corrupted.image_ptr(i), data.hw, spec);
    }
    corrupted.content_hash = corrupted.compute_hash();

    fs::create_directories(out);
    if (fmt == DataFormat::CifarBinary) {
        char name[64];
        std::snprintf(name, sizeof name, "corrupted-%s-%d.bin", kind_name(kind), severity);
        save_cifar_binary(out + "/" + name, corrupted);
        std::fprintf(stderr, "[corrupt] wrote %s/%s (%lld records)\n", out.c_str(), name,
                     (long long)corrupted.size());
    } else {
        std::vector<int64_t> per_class(size_t(corrupted.classes), 0);
        for (int64_t i = 0; i < corrupted.size(); ++i) {
            const int cls = corrupted.labels[size_t(i)];
            char dir[64];
            std::snprintf(dir, sizeof dir, "%s/class-%02d", out.c_str(), cls);
            fs::create_directories(dir);
            char file[128];
            std::snprintf(file, sizeof file, "%s/img-%06lld.ppm", dir,
                          (long long)per_class[size_t(cls)]++);
            write_ppm(file, corrupted.image(i));
        }
        std::fprintf(stderr, "[corrupt] wrote %lld images under %s\n",
                     (long long)corrupted.size(), out.c_str());
    }
    return 0;
}

int cmd_repair(const std::string& model_path, const std::string& config_path,
               const std::string& corruption_override, bool no_refine,
               const std::string& out_override, const std::string& log_override) {
    RepairCliConfig cfg = RepairCliConfig::from_file(config_path);
    if (!corruption_override.empty()) cfg.repair.kind = parse_kind(corruption_override);
    if (!out_override.empty()) cfg.out = out_override;
    if (!log_override.empty()) cfg.log_out = log_override;

    auto loaded = load_checkpoint(model_path);
    Dataset train = load_dataset(cfg.train_data, cfg.format);

    std::fprintf(stderr, "[repair] %s corruption=%s severity=%d T=%d N=%d M=%d seed=%llu%s\n",
                 model_path.c_str(), kind_name(cfg.repair.kind), cfg.repair.severity,
                 cfg.repair.outer_iterations, cfg.repair.refine_steps,
                 cfg.repair.finetune_steps, (unsigned long long)cfg.repair.seed,
                 no_refine ? " (no-refine ablation)" : "");

    auto [model, run] = no_refine
                            ? finetune_only_baseline(loaded.model, train, cfg.repair)
                            : ar2_repair(loaded.model, train, cfg.repair);

    Provenance prov;
    prov.seed = cfg.repair.seed;
    prov.config_hash = cfg.repair.hash();
    prov.outer_iterations = uint32_t(cfg.repair.outer_iterations);
    prov.refine_steps = no_refine ? 0 : uint32_t(cfg.repair.refine_steps);
    prov.finetune_steps = uint32_t(cfg.repair.finetune_steps);
    save_checkpoint(model, prov, cfg.out);

    if (!cfg.log_out.empty()) write_run_log(cfg.log_out, run);

    double last_refine = 0.0, last_finetune = 0.0;
    for (const auto& e : run.log)
        (e.stage == "refine" ? last_refine : last_finetune) = e.loss;
    std::fprintf(stderr, "[repair] wrote %s (%zu steps, last refine %.5f, last finetune %.5f)\n",
                 cfg.out.c_str(), run.log.size(), last_refine, last_finetune);
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& baseline_path,
             const std::string& data_path, const std::string& format_name_str,
             uint64_t eval_seed, const std::string& cache_dir, const std::string& out) {
    auto model = load_checkpoint(model_path);
    auto baseline = load_checkpoint(baseline_path);
    if (!(model.model.arch() == baseline.model.arch()))
        throw DataError("eval: model and baseline architectures differ");
    Dataset test = load_dataset(data_path, format_from_name(format_name_str));

    EvalCache cache(cache_dir);
    EvalReport report = evaluate(model.model, baseline.model, test, eval_seed, cache,
                                 model_path, baseline_path);
    std::printf("%s", render_report_table(report).c_str());
    if (!out.empty()) {
        write_report(out, report);
        std::fprintf(stderr, "[eval] wrote %s\n", out.c_str());
    }
    return 0;
}

int cmd_transfer_matrix(const std::string& models_dir, const std::string& baseline_path,
                        const std::string& data_path, const std::string& format_name_str,
                        uint64_t eval_seed, const std::string& cache_dir,
                        const std::string& out_csv, const std::string& out_image) {
    auto baseline = load_checkpoint(baseline_path);
    Dataset test = load_dataset(data_path, format_from_name(format_name_str));

    // Columns come from files named repaired-<KIND>.ckpt in the models dir.
    std::vector<std::pair<Kind, CamNet>> repaired;
    for (Kind kind : all_kinds()) {
        const std::string path =
            models_dir + "/repaired-" + std::string(kind_name(kind)) + ".ckpt";
        if (!fs::exists(path)) continue;
        auto loaded = load_checkpoint(path);
        if (!(loaded.model.arch() == baseline.model.arch()))
            throw DataError("transfer matrix: " + path + " architecture differs from baseline");
        repaired.emplace_back(kind, std::move(loaded.model));
    }
    if (repaired.empty())
        throw DataError("transfer matrix: no repaired-<KIND>.ckpt files in " + models_dir);

    EvalCache cache(cache_dir);
    TransferMatrix tm = compute_transfer_matrix(baseline.model, repaired, test, eval_seed, cache);
    write_transfer_csv(out_csv, tm);
    write_transfer_heatgrid(out_image, tm);

    std::printf("evaluated");
    for (Kind c : tm.columns) std::printf("%8s", kind_name(c));
    std::printf("\n");
    int off_diag = 0, off_diag_bad = 0;
    for (int r = 0; r < kNumKinds; ++r) {
        std::printf("%-9s", kind_name(Kind(r)));
        for (size_t c = 0; c < tm.columns.size(); ++c) {
            std::printf("%8.1f", tm.entries[size_t(r)][c]);
            if (Kind(r) != tm.columns[c]) {
                ++off_diag;
                if (tm.entries[size_t(r)][c] > 5.0) ++off_diag_bad;
            }
        }
        std::printf("\n");
    }
    std::printf("off-diagonal entries above +5 CE points: %d of %d\n", off_diag_bad, off_diag);
    std::fprintf(stderr, "[transfer-matrix] wrote %s and %s\n", out_csv.c_str(),
                 out_image.c_str());
    return 0;
}

// Jet-style colormap for CAM heatmaps.
void heat_color(float t, float& r, float& g, float& b) {
    t = std::min(1.0f, std::max(0.0f, t));
    r = std::min(1.0f, std::max(0.0f, 1.5f - std::abs(4.0f * t - 3.0f)));
    g = std::min(1.0f, std::max(0.0f, 1.5f - std::abs(4.0f * t - 2.0f)));
    b = std::min(1.0f, std::max(0.0f, 1.5f - std::abs(4.0f * t - 1.0f)));
}

Image cam_overlay(const Image& base, const std::vector<float>& heat) {
    Image out = base;
    for (int y = 0; y < base.h; ++y)
        for (int x = 0; x < base.w; ++x) {
            float r, g, b;
            heat_color(heat[size_t(y * base.w + x)], r, g, b);
            out.at(y, x, 0) = 0.5f * out.at(y, x, 0) + 0.5f * r;
            out.at(y, x, 1) = 0.5f * out.at(y, x, 1) + 0.5f * g;
            out.at(y, x, 2) = 0.5f * out.at(y, x, 2) + 0.5f * b;
        }
    return out;
}

int cmd_cam_dump(const std::string& model_path, const std::string& ref_path,
                 const std::string& list_path, const std::string& out_dir,
                 const std::string& kind_name_str, int severity, uint64_t seed) {
    auto model = load_checkpoint(model_path);
    auto ref = load_checkpoint(ref_path);
    if (!(model.model.arch() == ref.model.arch()))
        throw DataError("cam-dump: model and reference architectures differ");
    const Kind kind = parse_kind(kind_name_str);
    const int hw = int(model.model.arch().input_hw);

    std::ifstream list(list_path);
    if (!list) throw DataError("cam-dump: cannot open image list " + list_path);
    fs::create_directories(out_dir);

    std::string line;
    int panel_count = 0;
    while (std::getline(list, line)) {
        if (line.empty()) continue;
        Image img = read_ppm(line);
        if (img.h != hw || img.w != hw)
            throw DataError("cam-dump: " + line + " is " + std::to_string(img.h) + "x" +
                            std::to_string(img.w) + ", model expects " +
                            std::to_string(hw) + "x" + std::to_string(hw));
        CorruptionSpec spec{kind, severity, Rng::derive_seed(seed, uint64_t(panel_count))};
        Image corrupted = corrupt(img, spec);

        auto to_tensor = [&](const Image& im) {
            auto t = Tensor::zeros({1, 3, hw, hw});
            image_to_chw(im, t.ptr());
            return t;
        };

        const auto x = to_tensor(img);
        const auto xp = to_tensor(corrupted);
        // The reference model's clean prediction anchors all four maps.
        auto ref_out = ref.model.forward(x);
        int cls = 0;
        for (int c = 1; c < ref.model.arch().classes; ++c)
            if (ref_out.logits.ptr()[c] > ref_out.logits.ptr()[cls]) cls = c;

        auto heat = [&](CamNet& net, const Tensor& input) {
            auto fwd = net.forward(input);
            auto maps = compute_cam(net, fwd.features, cls);
            return upsample_normalize(maps[0], hw, hw);
        };

        const Image rows[2] = {img, corrupted};
        const Tensor* inputs[2] = {&x, &xp};
        const int gap = 2;
        Image panel(2 * hw + 3 * gap, 3 * hw + 4 * gap, 1.0f);
        for (int row = 0; row < 2; ++row) {
            Image tiles[3] = {
                rows[row],
                cam_overlay(rows[row], heat(model.model, *inputs[row])),
                cam_overlay(rows[row], heat(ref.model, *inputs[row])),
            };
            for (int col = 0; col < 3; ++col)
                for (int y = 0; y < hw; ++y)
                    for (int x2 = 0; x2 < hw; ++x2)
                        for (int c = 0; c < 3; ++c)
                            panel.at(gap + row * (hw + gap) + y,
                                     gap + col * (hw + gap) + x2, c) =
                                tiles[col].at(y, x2, c);
        }
        char name[64];
        std::snprintf(name, sizeof name, "panel-%03d-class%d.ppm", panel_count, cls);
        write_ppm(out_dir + "/" + name, panel);
        ++panel_count;
    }
    if (panel_count == 0) throw DataError("cam-dump: image list is empty");
    std::fprintf(stderr, "[cam-dump] wrote %d panels to %s\n", panel_count, out_dir.c_str());
    return 0;
}

int cmd_synth_data(int64_t n, uint64_t seed, const std::string& out, int hw) {
    Dataset ds = synthesize_shapes(n, seed, hw);
    if (hw == 32) {
        save_cifar_binary(out, ds);
    } else {
        throw ConfigError("synth-data: cifar-binary output requires --hw 32");
    }
    std::fprintf(stderr, "[synth-data] wrote %lld records to %s (hash %016llx)\n",
                 (long long)n, out.c_str(), (unsigned long long)ds.content_hash);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-guided repair of convolutional classifiers"};
    app.require_subcommand(1);

    // train-baseline
    std::string tb_config;
    auto* tb = app.add_subcommand("train-baseline", "train the vanilla model");
    tb->add_option("--config", tb_config, "key=value config file")->required();

    // corrupt
    std::string co_in, co_kind, co_out, co_format = "cifar-binary";
    int co_severity = 3;
    uint64_t co_seed = 0;
    auto* co = app.add_subcommand("corrupt", "emit a corrupted dataset");
    co->add_option("--in", co_in, "input dataset path")->required();
    co->add_option("--format", co_format, "cifar-binary | image-directory");
    co->add_option("--kind", co_kind, "corruption kind")->required();
    co->add_option("--severity", co_severity, "severity 1-5");
    co->add_option("--seed", co_seed, "corruption seed");
    co->add_option("--out", co_out, "output directory")->required();

    // repair
    std::string rp_model, rp_config, rp_corruption, rp_out, rp_log;
    bool rp_no_refine = false;
    auto* rp = app.add_subcommand("repair", "run the alternating repair");
    rp->add_option("--model", rp_model, "pretrained checkpoint")->required();
    rp->add_option("--config", rp_config, "key=value config file")->required();
    rp->add_option("--corruption", rp_corruption, "override the target corruption kind");
    rp->add_flag("--no-refine", rp_no_refine, "fine-tune-only ablation");
    rp->add_option("--out", rp_out, "override output checkpoint path");
    rp->add_option("--log", rp_log, "override run-log path");

    // eval
    std::string ev_model, ev_baseline, ev_data, ev_cache, ev_out, ev_format = "cifar-binary";
    uint64_t ev_seed = 1234;
    auto* ev = app.add_subcommand("eval", "full corruption evaluation");
    ev->add_option("--model", ev_model, "model checkpoint")->required();
    ev->add_option("--baseline", ev_baseline, "normalization baseline checkpoint")->required();
    ev->add_option("--data", ev_data, "clean test dataset")->required();
    ev->add_option("--format", ev_format, "cifar-binary | image-directory");
    ev->add_option("--eval-seed", ev_seed, "evaluation corruption seed");
    ev->add_option("--cache", ev_cache, "corrupted-set cache directory");
    ev->add_option("--out", ev_out, "machine-readable report path");

    // transfer-matrix
    std::string tm_models, tm_baseline, tm_data, tm_cache, tm_format = "cifar-binary";
    std::string tm_csv = "transfer.csv", tm_image = "transfer.ppm";
    uint64_t tm_seed = 1234;
    auto* tm = app.add_subcommand("transfer-matrix", "cross-corruption CE changes");
    tm->add_option("--models", tm_models, "directory of repaired-<KIND>.ckpt files")->required();
    tm->add_option("--baseline", tm_baseline, "vanilla checkpoint")->required();
    tm->add_option("--data", tm_data, "clean test dataset")->required();
    tm->add_option("--format", tm_format, "cifar-binary | image-directory");
    tm->add_option("--eval-seed", tm_seed, "evaluation corruption seed");
    tm->add_option("--cache", tm_cache, "corrupted-set cache directory");
    tm->add_option("--out-csv", tm_csv, "CSV output path");
    tm->add_option("--out-image", tm_image, "heat-grid image path");

    // cam-dump
    std::string cd_model, cd_ref, cd_images, cd_out, cd_kind = "GN";
    int cd_severity = 3;
    uint64_t cd_seed = 0;
    auto* cd = app.add_subcommand("cam-dump", "export CAM heatmap panels");
    cd->add_option("--model", cd_model, "model checkpoint")->required();
    cd->add_option("--ref", cd_ref, "reference checkpoint")->required();
    cd->add_option("--images", cd_images, "text file listing .ppm paths")->required();
    cd->add_option("--out", cd_out, "output directory")->required();
    cd->add_option("--kind", cd_kind, "corruption kind for the corrupted row");
    cd->add_option("--severity", cd_severity, "severity 1-5");
    cd->add_option("--seed", cd_seed, "corruption seed");

    // synth-data
    int64_t sd_n = 10000;
    uint64_t sd_seed = 1;
    int sd_hw = 32;
    std::string sd_out;
    auto* sd = app.add_subcommand("synth-data", "generate the synthetic shape dataset");
    sd->add_option("--n", sd_n, "number of images");
    sd->add_option("--seed", sd_seed, "generator seed");
    sd->add_option("--hw", sd_hw, "image side length");
    sd->add_option("--out", sd_out, "output .bin path")->required();

    try {
        app.parse(argc, argv);
        if (tb->parsed()) return cmd_train_baseline(tb_config);
        if (co->parsed())
            return cmd_corrupt(co_in, co_format, co_kind, co_severity, co_seed, co_out);
        if (rp->parsed())
            return cmd_repair(rp_model, rp_config, rp_corruption, rp_no_refine, rp_out, rp_log);
        if (ev->parsed())
            return cmd_eval(ev_model, ev_baseline, ev_data, ev_format, ev_seed, ev_cache, ev_out);
        if (tm->parsed())
            return cmd_transfer_matrix(tm_models, tm_baseline, tm_data, tm_format, tm_seed,
                                       tm_cache, tm_csv, tm_image);
        if (cd->parsed())
            return cmd_cam_dump(cd_model, cd_ref, cd_images, cd_out, cd_kind, cd_severity,
                                cd_seed);
        if (sd->parsed()) return cmd_synth_data(sd_n, sd_seed, sd_out, sd_hw);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // bad invocation = config-class failure
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
