#pragma once

#include <cstdint>
#include <vector>

#include "ar2/image.hpp"

namespace ar2 {

// Minimal baseline JFIF codec (8-bit, 4:4:4, fixed Huffman tables). Encoding
// quantizes with the Annex-K tables scaled by `quality` in [1,100] using the
// conventional 5000/q / 200-2q scaling. The decoder handles exactly the
// subset the encoder emits plus tolerant marker skipping, and throws
// DataError on malformed streams.
std::vector<uint8_t> jpeg_encode(const Image& img, int quality);
Image jpeg_decode(const std::vector<uint8_t>& bytes);

}  // namespace ar2
