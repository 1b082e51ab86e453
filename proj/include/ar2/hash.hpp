#pragma once

#include <cstddef>
#include <cstdint>

namespace ar2 {

// FNV-1a 64-bit, chainable via the seed parameter.
inline uint64_t fnv1a(const void* data, size_t size,
                      uint64_t seed = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace ar2
