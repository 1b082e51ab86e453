#pragma once

#include <map>
#include <string>

#include "ar2/dataset.hpp"
#include "ar2/model.hpp"
#include "ar2/repair.hpp"

namespace ar2 {

// Flat key=value file: one pair per line, '#' starts a comment, blank lines
// ignored. Values are everything after the first '=' with surrounding
// whitespace trimmed.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

// Typed access that tracks consumption; finish() rejects unknown keys.
class KvReader {
public:
    KvReader(std::map<std::string, std::string> kv, std::string source);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback);
    std::string require_string(const std::string& key);
    int get_int(const std::string& key, int fallback);
    uint64_t get_u64(const std::string& key, uint64_t fallback);
    double get_double(const std::string& key, double fallback);
    float get_float(const std::string& key, float fallback);
    bool get_bool(const std::string& key, bool fallback);
    void finish() const;  // ConfigError listing any unconsumed keys

private:
    std::string take(const std::string& key);
    std::map<std::string, std::string> kv_;
    std::map<std::string, bool> consumed_;
    std::string source_;
};

// train-baseline configuration.
struct TrainConfig {
    ArchConfig arch;
    int epochs = 3;
    int batch_size = 64;
    float lr = 0.05f;
    float momentum = 0.9f;
    uint64_t seed = 1;
    std::string train_data;
    std::string test_data;  // optional; enables the clean-error report
    DataFormat format = DataFormat::CifarBinary;
    std::string out = "baseline.ckpt";
    std::string report_out;  // optional

    static TrainConfig from_file(const std::string& path);
};

// repair subcommand configuration; the architecture comes from the loaded
// checkpoint, so only repair and data keys are accepted.
struct RepairCliConfig {
    RepairConfig repair;
    std::string train_data;
    DataFormat format = DataFormat::CifarBinary;
    std::string out = "repaired.ckpt";
    std::string log_out;  // optional

    static RepairCliConfig from_file(const std::string& path);
};

}  // namespace ar2
