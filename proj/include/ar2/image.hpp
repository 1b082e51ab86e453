#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ar2/errors.hpp"

namespace ar2 {

// RGB raster, interleaved HWC float32 with values nominally in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> px;  // h*w*3

    Image() = default;
    Image(int height, int width, float fill = 0.0f)
        : h(height), w(width), px(size_t(height) * width * 3, fill) {
        if (height < 1 || width < 1)
            throw ShapeError("Image: dimensions must be positive, got " +
                             std::to_string(height) + "x" + std::to_string(width));
    }

    float& at(int y, int x, int c) { return px[(size_t(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return px[(size_t(y) * w + x) * 3 + c]; }
    size_t numel() const { return px.size(); }

    void clamp01();
    float mean() const;      // scalar mean over all pixels and channels
    float max_value() const; // scalar max over all pixels and channels
};

// 8-bit quantization used for file formats: round(clamp(v,0,1)*255).
uint8_t quantize_u8(float v);
std::vector<uint8_t> image_to_u8(const Image& img);
Image image_from_u8(int h, int w, const uint8_t* data);

// Binary PPM (P6, maxval 255). Used for golden fixtures and heatmap panels.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Clamp-to-edge bilinear sample at real-valued coordinates (y, x).
float sample_bilinear(const Image& img, float y, float x, int c);

Image resize_bilinear(const Image& img, int oh, int ow);

// Separable Gaussian blur, radius ceil(3*sigma), clamp-to-edge; sigma <= 0 is
// the identity.
Image gaussian_blur(const Image& img, float sigma);

// Convolve with an arbitrary dense kernel (clamp-to-edge).
Image convolve(const Image& img, const std::vector<float>& kernel, int kh, int kw);

// Layout conversion against planar CHW buffers (dataset/tensor layout).
Image image_from_chw(const float* chw, int h, int w);
void image_to_chw(const Image& img, float* chw);

}  // namespace ar2
