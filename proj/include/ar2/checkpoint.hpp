#pragma once

#include <cstdint>
#include <string>

#include "ar2/errors.hpp"
#include "ar2/model.hpp"

namespace ar2 {

// Training provenance carried inside every checkpoint.
struct Provenance {
    uint64_t seed = 0;
    uint64_t config_hash = 0;
    uint32_t outer_iterations = 0;
    uint32_t refine_steps = 0;
    uint32_t finetune_steps = 0;

    bool operator==(const Provenance&) const = default;
};

struct CheckpointError : DataError {
    enum class Kind { BadMagic, VersionMismatch, Truncated, Malformed };

    CheckpointError(Kind kind, const std::string& msg) : DataError(msg), kind(kind) {}

    Kind kind;
};

struct LoadedCheckpoint {
    CamNet model;
    Provenance provenance;
};

// Little-endian binary container: magic "AR2C", format version, architecture
// metadata, provenance record, then name-indexed float32 blobs. Round trips
// are bit-exact; the byte layout is documented in the README.
void save_checkpoint(const CamNet& model, const Provenance& prov, const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);

// FNV-1a over a file's bytes; used for determinism checks and cache keys.
uint64_t file_hash(const std::string& path);

}  // namespace ar2
