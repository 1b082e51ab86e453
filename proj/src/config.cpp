#include "ar2/config.hpp"

#include <fstream>

namespace ar2 {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": empty key");
        if (kv.count(key))
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": duplicate key '" + key + "'");
        kv[key] = value;
    }
    return kv;
}

KvReader::KvReader(std::map<std::string, std::string> kv, std::string source)
    : kv_(std::move(kv)), source_(std::move(source)) {}

bool KvReader::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KvReader::take(const std::string& key) {
    consumed_[key] = true;
    return kv_.at(key);
}

std::string KvReader::get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? take(key) : fallback;
}

std::string KvReader::require_string(const std::string& key) {
    if (!has(key)) throw ConfigError("config: " + source_ + ": missing key '" + key + "'");
    return take(key);
}

int KvReader::get_int(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const std::string v = take(key);
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: " + source_ + ": key '" + key +
                          "' expects an integer, got '" + v + "'");
    }
}

uint64_t KvReader::get_u64(const std::string& key, uint64_t fallback) {
    if (!has(key)) return fallback;
    const std::string v = take(key);
    try {
        size_t pos = 0;
        const uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: " + source_ + ": key '" + key +
                          "' expects an unsigned integer, got '" + v + "'");
    }
}

double KvReader::get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const std::string v = take(key);
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: " + source_ + ": key '" + key +
                          "' expects a number, got '" + v + "'");
    }
}

float KvReader::get_float(const std::string& key, float fallback) {
    return float(get_double(key, double(fallback)));
}

bool KvReader::get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = take(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: " + source_ + ": key '" + key +
                      "' expects true/false, got '" + v + "'");
}

void KvReader::finish() const {
    std::string unknown;
    for (const auto& [key, value] : kv_)
        if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
        throw ConfigError("config: " + source_ + ": unknown keys: " + unknown);
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    KvReader r(parse_kv_file(path), path);
    TrainConfig cfg;
    cfg.arch.input_hw = r.get_int("input_hw", cfg.arch.input_hw);
    cfg.arch.input_channels = r.get_int("input_channels", cfg.arch.input_channels);
    cfg.arch.classes = r.get_int("classes", cfg.arch.classes);
    cfg.arch.base_width = r.get_int("base_width", cfg.arch.base_width);
    cfg.epochs = r.get_int("epochs", cfg.epochs);
    cfg.batch_size = r.get_int("batch_size", cfg.batch_size);
    cfg.lr = r.get_float("lr", cfg.lr);
    cfg.momentum = r.get_float("momentum", cfg.momentum);
    cfg.seed = r.get_u64("seed", cfg.seed);
    cfg.train_data = r.require_string("train_data");
    cfg.test_data = r.get_string("test_data", "");
    cfg.format = format_from_name(r.get_string("format", format_name(cfg.format)));
    cfg.out = r.get_string("out", cfg.out);
    cfg.report_out = r.get_string("report_out", "");
    r.finish();
    cfg.arch.validate();
    if (cfg.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (!(cfg.lr > 0.0f)) throw ConfigError("config: lr must be positive");
    return cfg;
}

RepairCliConfig RepairCliConfig::from_file(const std::string& path) {
    KvReader r(parse_kv_file(path), path);
    RepairCliConfig cfg;
    RepairConfig& rp = cfg.repair;
    rp.outer_iterations = r.get_int("outer_iterations", rp.outer_iterations);
    rp.refine_steps = r.get_int("refine_steps", rp.refine_steps);
    rp.finetune_steps = r.get_int("finetune_steps", rp.finetune_steps);
    rp.top_k = r.get_int("top_k", rp.top_k);
    rp.alpha = r.get_double("alpha", rp.alpha);
    rp.refine_lr = r.get_float("refine_lr", rp.refine_lr);
    rp.finetune_lr = r.get_float("finetune_lr", rp.finetune_lr);
    rp.momentum = r.get_float("momentum", rp.momentum);
    rp.batch_size = r.get_int("batch_size", rp.batch_size);
    if (r.has("corruption")) {
        const std::string name = r.require_string("corruption");
        auto kind = kind_from_name(name);
        if (!kind) throw ConfigError("config: unknown corruption '" + name + "'");
        rp.kind = *kind;
    }
    rp.severity = r.get_int("severity", rp.severity);
    rp.seed = r.get_u64("seed", rp.seed);
    rp.cam_normalized = r.get_bool("cam_normalized", rp.cam_normalized);
    cfg.train_data = r.require_string("train_data");
    cfg.format = format_from_name(r.get_string("format", format_name(cfg.format)));
    cfg.out = r.get_string("out", cfg.out);
    cfg.log_out = r.get_string("log_out", "");
    r.finish();
    rp.validate();
    return cfg;
}

}  // namespace ar2
