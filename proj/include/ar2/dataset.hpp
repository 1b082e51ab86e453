#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ar2/image.hpp"
#include "ar2/tensor.hpp"

namespace ar2 {

enum class DataFormat { CifarBinary, ImageDirectory };

const char* format_name(DataFormat fmt);
DataFormat format_from_name(const std::string& name);  // ConfigError on unknown

// Labeled image set in planar CHW float32, values in [0,1].
struct Dataset {
    int hw = 32;
    int classes = 10;
    std::vector<float> images;  // size() * 3 * hw * hw
    std::vector<int> labels;
    std::string split;
    uint64_t content_hash = 0;

    int64_t size() const { return int64_t(labels.size()); }
    int64_t image_floats() const { return int64_t(3) * hw * hw; }
    const float* image_ptr(int64_t i) const { return images.data() + i * image_floats(); }
    float* image_ptr(int64_t i) { return images.data() + i * image_floats(); }

    Image image(int64_t i) const { return image_from_chw(image_ptr(i), hw, hw); }

    // Batch tensors in dataset order of `idx`.
    Tensor gather(const std::vector<int64_t>& idx) const;
    std::vector<int> gather_labels(const std::vector<int64_t>& idx) const;

    void validate() const;           // label range, size arithmetic
    uint64_t compute_hash() const;   // over labels + image bit patterns
};

// `path` is a .bin file or a directory of *.bin files (standard 3073-byte
// records: label byte + 3x1024 channel planes). Classes fixed at 10.
Dataset load_cifar_binary(const std::string& path);

// Class-named subdirectories (sorted = class ids) of .ppm images, all square
// and equally sized.
Dataset load_image_directory(const std::string& path);

Dataset load_dataset(const std::string& path, DataFormat fmt);

void save_cifar_binary(const std::string& path, const Dataset& ds);

// Deterministic 10-class synthetic shape dataset (circle, square, triangle,
// ring, plus, horizontal stripes, vertical stripes, diamond, checkerboard,
// cross) with randomized colors, positions, sizes, and light texture noise.
// Stands in for CIFAR-sized data on machines without the real files.
Dataset synthesize_shapes(int64_t n, uint64_t seed, int hw = 32);

}  // namespace ar2
