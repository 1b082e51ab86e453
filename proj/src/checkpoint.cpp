#include "ar2/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "ar2/hash.hpp"

namespace ar2 {

namespace {

constexpr char kMagic[4] = {'A', 'R', '2', 'C'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    }

    void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), std::streamsize(n)); }
    void u32(uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        u32(uint32_t(v));
        u32(uint32_t(v >> 32));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    bool ok() const { return bool(out_); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw DataError("checkpoint: cannot open '" + path + "'");
    }

    void bytes(void* p, size_t n) {
        in_.read(static_cast<char*>(p), std::streamsize(n));
        if (size_t(in_.gcount()) != n)
            throw CheckpointError(CheckpointError::Kind::Truncated,
                                  "checkpoint: file truncated");
    }
    uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
               uint32_t(b[3]) << 24;
    }
    uint64_t u64() {
        uint64_t lo = u32();
        return lo | uint64_t(u32()) << 32;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

private:
    std::ifstream in_;
};

}  // namespace

void save_checkpoint(const CamNet& model, const Provenance& prov, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    const ArchConfig& a = model.arch();
    w.u32(uint32_t(a.input_hw));
    w.u32(uint32_t(a.input_channels));
    w.u32(uint32_t(a.classes));
    w.u32(uint32_t(a.base_width));
    w.u64(prov.seed);
    w.u64(prov.config_hash);
    w.u32(prov.outer_iterations);
    w.u32(prov.refine_steps);
    w.u32(prov.finetune_steps);
    const auto params = model.named_params();
    w.u32(uint32_t(params.size()));
    for (const auto& [name, t] : params) {
        w.u32(uint32_t(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(uint32_t(t.shape().size()));
        for (int64_t d : t.shape()) w.u64(uint64_t(d));
        for (int64_t i = 0; i < t.numel(); ++i) w.f32(t.ptr()[i]);
    }
    if (!w.ok()) throw DataError("checkpoint: write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError(CheckpointError::Kind::BadMagic,
                              "checkpoint: bad magic bytes in '" + path + "'");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                              "checkpoint: format version " + std::to_string(version) +
                                  " not supported (expected " + std::to_string(kVersion) + ")");
    ArchConfig arch;
    arch.input_hw = r.u32();
    arch.input_channels = r.u32();
    arch.classes = r.u32();
    arch.base_width = r.u32();
    Provenance prov;
    prov.seed = r.u64();
    prov.config_hash = r.u64();
    prov.outer_iterations = r.u32();
    prov.refine_steps = r.u32();
    prov.finetune_steps = r.u32();

    CamNet model = CamNet::build(arch, 0);
    auto params = model.named_params();
    const uint32_t count = r.u32();
    if (count != params.size())
        throw CheckpointError(CheckpointError::Kind::Malformed,
                              "checkpoint: expected " + std::to_string(params.size()) +
                                  " parameter blobs, found " + std::to_string(count));
    for (auto& [name, t] : params) {
        const uint32_t name_len = r.u32();
        std::string blob_name(name_len, '\0');
        r.bytes(blob_name.data(), name_len);
        if (blob_name != name)
            throw CheckpointError(CheckpointError::Kind::Malformed,
                                  "checkpoint: unexpected blob '" + blob_name +
                                      "' (wanted '" + name + "')");
        const uint32_t ndim = r.u32();
        Shape shape(ndim);
        for (uint32_t i = 0; i < ndim; ++i) shape[i] = int64_t(r.u64());
        if (shape != t.shape())
            throw CheckpointError(CheckpointError::Kind::Malformed,
                                  "checkpoint: blob '" + name + "' has shape " +
                                      shape_str(shape) + ", model expects " +
                                      shape_str(t.shape()));
        for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = r.f32();
    }
    return {std::move(model), prov};
}

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file_hash: cannot open '" + path + "'");
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[8192];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h = fnv1a(buf, size_t(in.gcount()), h);
        if (!in) break;
    }
    return h;
}

}  // namespace ar2
