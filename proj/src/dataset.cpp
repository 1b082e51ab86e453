#include "ar2/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ar2/hash.hpp"
#include "ar2/rng.hpp"

namespace fs = std::filesystem;

namespace ar2 {

const char* format_name(DataFormat fmt) {
    return fmt == DataFormat::CifarBinary ? "cifar-binary" : "image-directory";
}

DataFormat format_from_name(const std::string& name) {
    if (name == "cifar-binary") return DataFormat::CifarBinary;
    if (name == "image-directory") return DataFormat::ImageDirectory;
    throw ConfigError("dataset: unknown format '" + name +
                      "' (expected cifar-binary or image-directory)");
}

Tensor Dataset::gather(const std::vector<int64_t>& idx) const {
    const int64_t fl = image_floats();
    auto out = Tensor::zeros({int64_t(idx.size()), 3, hw, hw});
    for (size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] < 0 || idx[b] >= size())
            throw DataError("dataset: index " + std::to_string(idx[b]) + " out of range");
        std::copy_n(image_ptr(idx[b]), fl, out.ptr() + int64_t(b) * fl);
    }
    return out;
}

std::vector<int> Dataset::gather_labels(const std::vector<int64_t>& idx) const {
    std::vector<int> out(idx.size());
    for (size_t b = 0; b < idx.size(); ++b) out[b] = labels[size_t(idx[b])];
    return out;
}

void Dataset::validate() const {
    if (int64_t(images.size()) != size() * image_floats())
        throw DataError("dataset: image buffer size mismatch");
    for (int y : labels)
        if (y < 0 || y >= classes)
            throw DataError("dataset: label " + std::to_string(y) + " outside [0," +
                            std::to_string(classes) + ")");
}

uint64_t Dataset::compute_hash() const {
    uint64_t h = fnv1a(&hw, sizeof(hw));
    h = fnv1a(&classes, sizeof(classes), h);
    h = fnv1a(labels.data(), labels.size() * sizeof(int), h);
    h = fnv1a(images.data(), images.size() * sizeof(float), h);
    return h;
}

namespace {

constexpr int64_t kCifarRecord = 3073;  // label byte + 3 * 32 * 32
constexpr int64_t kCifarPixels = 3072;

void append_cifar_file(Dataset& ds, const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("dataset: cannot open " + file);
    in.seekg(0, std::ios::end);
    const int64_t bytes = int64_t(in.tellg());
    in.seekg(0);
    if (bytes == 0 || bytes % kCifarRecord != 0)
        throw DataError("dataset: " + file + " has " + std::to_string(bytes) +
                        " bytes, not a multiple of the 3073-byte record");
    const int64_t n = bytes / kCifarRecord;
    std::vector<uint8_t> record(static_cast<size_t>(kCifarRecord));
    for (int64_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(record.data()), kCifarRecord);
        if (in.gcount() != kCifarRecord)
            throw DataError("dataset: short read in " + file);
        if (record[0] > 9)
            throw DataError("dataset: unknown label byte " + std::to_string(record[0]) +
                            " in " + file);
        ds.labels.push_back(int(record[0]));
        for (int64_t p = 0; p < kCifarPixels; ++p)
            ds.images.push_back(float(record[size_t(1 + p)]) / 255.0f);
    }
}

}  // namespace

Dataset load_cifar_binary(const std::string& path) {
    Dataset ds;
    ds.hw = 32;
    ds.classes = 10;
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".bin")
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw DataError("dataset: no .bin files in directory " + path);
    } else {
        files.push_back(path);
    }
    for (const auto& f : files) append_cifar_file(ds, f);
    if (ds.size() == 0) throw DataError("dataset: " + path + " is empty");
    ds.validate();
    ds.content_hash = ds.compute_hash();
    return ds;
}

Dataset load_image_directory(const std::string& path) {
    if (!fs::is_directory(path))
        throw DataError("dataset: " + path + " is not a directory");
    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_directory()) class_dirs.push_back(e.path().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw DataError("dataset: " + path + " contains no class subdirectories");

    Dataset ds;
    ds.classes = int(class_dirs.size());
    ds.hw = 0;
    for (size_t cls = 0; cls < class_dirs.size(); ++cls) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(class_dirs[cls]))
            if (e.is_regular_file() && e.path().extension() == ".ppm")
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Image img = read_ppm(f);
            if (img.h != img.w)
                throw DataError("dataset: " + f + " is not square (" +
                                std::to_string(img.h) + "x" + std::to_string(img.w) + ")");
            if (ds.hw == 0) ds.hw = img.h;
            if (img.h != ds.hw)
                throw DataError("dataset: " + f + " size differs from first image");
            const size_t off = ds.images.size();
            ds.images.resize(off + size_t(ds.image_floats()));
            image_to_chw(img, ds.images.data() + off);
            ds.labels.push_back(int(cls));
        }
    }
    if (ds.size() == 0) throw DataError("dataset: " + path + " contains no .ppm images");
    ds.validate();
    ds.content_hash = ds.compute_hash();
    return ds;
}

Dataset load_dataset(const std::string& path, DataFormat fmt) {
    return fmt == DataFormat::CifarBinary ? load_cifar_binary(path)
                                          : load_image_directory(path);
}

void save_cifar_binary(const std::string& path, const Dataset& ds) {
    if (ds.hw != 32 || ds.classes != 10)
        throw DataError("dataset: cifar-binary requires 32x32 10-class data");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("dataset: cannot write " + path);
    for (int64_t i = 0; i < ds.size(); ++i) {
        out.put(char(uint8_t(ds.labels[size_t(i)])));
        const float* img = ds.image_ptr(i);
        for (int64_t p = 0; p < kCifarPixels; ++p) out.put(char(quantize_u8(img[p])));
    }
    if (!out) throw DataError("dataset: write failed for " + path);
}

namespace {

// Boolean shape membership at subpixel (y, x) relative to center, in units of
// the size parameter r. Stripe/checker cells scale with r.
bool shape_hit(int cls, float dy, float dx, float r) {
    const float ady = std::abs(dy), adx = std::abs(dx);
    switch (cls) {
        case 0: return dy * dy + dx * dx <= r * r;                       // circle
        case 1: return std::max(ady, adx) <= 0.9f * r;                   // square
        case 2:                                                          // triangle (up)
            return dy >= -r && dy <= 0.7f * r && adx <= 0.65f * (dy + r);
        case 3: {                                                        // ring
            const float d2 = dy * dy + dx * dx;
            return d2 <= r * r && d2 >= 0.55f * 0.55f * r * r;
        }
        case 4:                                                          // plus
            return (adx <= 0.35f * r && ady <= r) || (ady <= 0.35f * r && adx <= r);
        case 5:                                                          // h-stripes
            return std::max(ady, adx) <= r &&
                   int(std::floor((dy + r) / (0.5f * r))) % 2 == 0;
        case 6:                                                          // v-stripes
            return std::max(ady, adx) <= r &&
                   int(std::floor((dx + r) / (0.5f * r))) % 2 == 0;
        case 7: return ady + adx <= 1.2f * r;                            // diamond
        case 8:                                                          // checkerboard
            return std::max(ady, adx) <= r &&
                   (int(std::floor((dy + r) / (0.67f * r))) +
                    int(std::floor((dx + r) / (0.67f * r)))) % 2 == 0;
        case 9: return std::abs(ady - adx) <= 0.3f * r && std::max(ady, adx) <= r;  // cross
        default: return false;
    }
}

}  // namespace

Dataset synthesize_shapes(int64_t n, uint64_t seed, int hw) {
    if (n < 1) throw ConfigError("synthesize_shapes: n must be >= 1");
    if (hw < 16) throw ConfigError("synthesize_shapes: hw must be >= 16");
    Dataset ds;
    ds.hw = hw;
    ds.classes = 10;
    ds.images.resize(size_t(n) * size_t(ds.image_floats()));
    ds.labels.resize(size_t(n));

    for (int64_t i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, uint64_t(i)));
        const int cls = int(rng.uniform_int(10));
        ds.labels[size_t(i)] = cls;

        float bg[3], fg[3];
        for (;;) {
            float dist = 0.0f;
            for (int c = 0; c < 3; ++c) {
                bg[c] = 0.15f + 0.7f * float(rng.uniform());
                fg[c] = 0.15f + 0.7f * float(rng.uniform());
                dist += std::abs(fg[c] - bg[c]);
            }
            if (dist / 3.0f >= 0.25f) break;  // enforce figure/ground contrast
        }
        const float cy = float(hw) / 2.0f + float(rng.uniform(-double(hw) / 8.0, double(hw) / 8.0));
        const float cx = float(hw) / 2.0f + float(rng.uniform(-double(hw) / 8.0, double(hw) / 8.0));
        const float r = float(hw) / 4.0f * float(rng.uniform(0.75, 1.25));
        const float gdir = float(rng.uniform()) * 2.0f * float(M_PI);
        const float gamp = 0.05f;

        Image img(hw, hw);
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                // 2x2 supersampled membership for soft edges.
                float cover = 0.0f;
                for (int sy = 0; sy < 2; ++sy)
                    for (int sx = 0; sx < 2; ++sx) {
                        const float py = float(y) + 0.25f + 0.5f * float(sy) - cy;
                        const float px = float(x) + 0.25f + 0.5f * float(sx) - cx;
                        if (shape_hit(cls, py, px, r)) cover += 0.25f;
                    }
                const float grad = gamp * ((float(x) / float(hw - 1) - 0.5f) * std::cos(gdir) +
                                           (float(y) / float(hw - 1) - 0.5f) * std::sin(gdir));
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = bg[c] + cover * (fg[c] - bg[c]) + grad;
            }
        for (float& v : img.px) v += 0.02f * float(rng.normal());
        img.clamp01();
        image_to_chw(img, ds.image_ptr(i));
    }
    ds.validate();
    ds.content_hash = ds.compute_hash();
    return ds;
}

}  // namespace ar2
