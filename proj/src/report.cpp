#include "ar2/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;

namespace ar2 {

EvalReport evaluate(CamNet& model, CamNet& baseline, const Dataset& test,
                    uint64_t eval_seed, EvalCache& cache, const std::string& model_id,
                    const std::string& baseline_id) {
    EvalReport report;
    report.model_id = model_id;
    report.baseline_id = baseline_id;
    report.eval_seed = eval_seed;
    report.dataset_hash = test.content_hash;
    report.clean_error = clean_error(model, test);
    report.baseline_clean_error = clean_error(baseline, test);

    std::map<Kind, double> ce;
    for (Kind kind : all_kinds()) {
        EvalReport::KindResult r;
        r.kind = kind;
        r.baseline_errors = severity_errors(baseline, test, kind, eval_seed, cache);
        r.model_errors = severity_errors(model, test, kind, eval_seed, cache);
        r.ce = corruption_error(r.model_errors, r.baseline_errors);
        ce[kind] = r.ce;
        report.kinds.push_back(r);
    }
    report.mce = mce(ce);
    return report;
}

std::string report_to_json(const EvalReport& report) {
    json j;
    j["model_id"] = report.model_id;
    j["baseline_id"] = report.baseline_id;
    j["eval_seed"] = report.eval_seed;
    j["dataset_hash"] = report.dataset_hash;
    j["clean_error"] = report.clean_error;
    j["baseline_clean_error"] = report.baseline_clean_error;
    j["mce"] = report.mce;
    j["kinds"] = json::array();
    for (const auto& k : report.kinds) {
        json e;
        e["kind"] = kind_name(k.kind);
        e["model_errors"] = k.model_errors;
        e["baseline_errors"] = k.baseline_errors;
        e["ce"] = k.ce;
        j["kinds"].push_back(e);
    }
    return j.dump(2);
}

EvalReport report_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("report: invalid JSON: ") + e.what());
    }
    try {
        EvalReport r;
        r.model_id = j.at("model_id").get<std::string>();
        r.baseline_id = j.at("baseline_id").get<std::string>();
        r.eval_seed = j.at("eval_seed").get<uint64_t>();
        r.dataset_hash = j.at("dataset_hash").get<uint64_t>();
        r.clean_error = j.at("clean_error").get<double>();
        r.baseline_clean_error = j.at("baseline_clean_error").get<double>();
        r.mce = j.at("mce").get<double>();
        for (const auto& e : j.at("kinds")) {
            EvalReport::KindResult k;
            auto kind = kind_from_name(e.at("kind").get<std::string>());
            if (!kind) throw DataError("report: unknown corruption kind in JSON");
            k.kind = *kind;
            k.model_errors = e.at("model_errors").get<SeverityErrors>();
            k.baseline_errors = e.at("baseline_errors").get<SeverityErrors>();
            k.ce = e.at("ce").get<double>();
            r.kinds.push_back(k);
        }
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("report: malformed report JSON: ") + e.what());
    }
}

void write_report(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("report: cannot write " + path);
    out << report_to_json(report) << "\n";
    if (!out) throw DataError("report: write failed for " + path);
}

EvalReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("report: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return report_from_json(ss.str());
}

std::string render_report_table(const EvalReport& report) {
    std::ostringstream out;
    char line[256];
    out << "model:    " << report.model_id << "\n";
    out << "baseline: " << report.baseline_id << "\n";
    std::snprintf(line, sizeof line, "clean error: %6.2f  (baseline %6.2f)\n\n",
                  report.clean_error, report.baseline_clean_error);
    out << line;
    out << "kind   sev1   sev2   sev3   sev4   sev5      CE\n";
    out << "----  -----  -----  -----  -----  -----  ------\n";
    for (const auto& k : report.kinds) {
        std::snprintf(line, sizeof line, "%-4s  %5.1f  %5.1f  %5.1f  %5.1f  %5.1f  %6.1f\n",
                      kind_name(k.kind), k.model_errors[0], k.model_errors[1],
                      k.model_errors[2], k.model_errors[3], k.model_errors[4], k.ce);
        out << line;
    }
    std::snprintf(line, sizeof line, "\nmCE: %6.1f\n", report.mce);
    out << line;
    return out.str();
}

void write_transfer_csv(const std::string& path, const TransferMatrix& tm) {
    std::ofstream out(path);
    if (!out) throw DataError("transfer csv: cannot write " + path);
    out << "evaluated";
    for (Kind c : tm.columns) out << "," << kind_name(c);
    out << "\n";
    char num[64];
    for (int r = 0; r < kNumKinds; ++r) {
        out << kind_name(Kind(r));
        for (size_t c = 0; c < tm.columns.size(); ++c) {
            // %.17g keeps doubles exact through the round-trip.
            std::snprintf(num, sizeof num, "%.17g", tm.entries[size_t(r)][c]);
            out << "," << num;
        }
        out << "\n";
    }
    if (!out) throw DataError("transfer csv: write failed for " + path);
}

TransferMatrix read_transfer_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("transfer csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("transfer csv: empty file " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };

    TransferMatrix tm;
    auto header = split(line);
    if (header.empty() || header[0] != "evaluated")
        throw DataError("transfer csv: bad header in " + path);
    for (size_t i = 1; i < header.size(); ++i) {
        auto kind = kind_from_name(header[i]);
        if (!kind) throw DataError("transfer csv: unknown kind '" + header[i] + "'");
        tm.columns.push_back(*kind);
    }
    tm.entries.assign(size_t(kNumKinds), std::vector<double>(tm.columns.size(), 0.0));

    for (int r = 0; r < kNumKinds; ++r) {
        if (!std::getline(in, line))
            throw DataError("transfer csv: missing row " + std::to_string(r));
        auto cells = split(line);
        if (cells.size() != tm.columns.size() + 1 || cells[0] != kind_name(Kind(r)))
            throw DataError("transfer csv: malformed row '" + line + "'");
        for (size_t c = 0; c < tm.columns.size(); ++c) {
            try {
                tm.entries[size_t(r)][c] = std::stod(cells[c + 1]);
            } catch (const std::exception&) {
                throw DataError("transfer csv: bad number '" + cells[c + 1] + "'");
            }
        }
    }
    return tm;
}

void write_transfer_heatgrid(const std::string& path, const TransferMatrix& tm,
                             int cell_px) {
    if (tm.columns.empty()) throw ConfigError("heat grid: empty matrix");
    double peak = 1e-9;
    for (const auto& row : tm.entries)
        for (double v : row) peak = std::max(peak, std::abs(v));

    const int gap = 2;
    const int h = kNumKinds * (cell_px + gap) + gap;
    const int w = int(tm.columns.size()) * (cell_px + gap) + gap;
    Image grid(h, w, 0.25f);
    for (int r = 0; r < kNumKinds; ++r)
        for (size_t c = 0; c < tm.columns.size(); ++c) {
            const double t = tm.entries[size_t(r)][c] / peak;  // [-1, 1]
            // Blue for improvement (negative), red for degradation.
            float red = 1.0f, green = 1.0f, blue = 1.0f;
            if (t > 0) {
                green = 1.0f - float(t) * 0.8f;
                blue = 1.0f - float(t) * 0.8f;
            } else {
                red = 1.0f + float(t) * 0.8f;
                green = 1.0f + float(t) * 0.4f;
            }
            const int y0 = gap + r * (cell_px + gap);
            const int x0 = gap + int(c) * (cell_px + gap);
            for (int y = y0; y < y0 + cell_px; ++y)
                for (int x = x0; x < x0 + cell_px; ++x) {
                    grid.at(y, x, 0) = red;
                    grid.at(y, x, 1) = green;
                    grid.at(y, x, 2) = blue;
                }
        }
    write_ppm(path, grid);
}

}  // namespace ar2
