#include "ar2/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ar2 {

void Image::clamp01() {
    for (float& v : px) v = std::min(1.0f, std::max(0.0f, v));
}

float Image::mean() const {
    double acc = 0.0;
    for (float v : px) acc += v;
    return px.empty() ? 0.0f : float(acc / double(px.size()));
}

float Image::max_value() const {
    float m = 0.0f;
    for (float v : px) m = std::max(m, v);
    return m;
}

uint8_t quantize_u8(float v) {
    float c = std::min(1.0f, std::max(0.0f, v));
    return uint8_t(std::lround(c * 255.0f));
}

std::vector<uint8_t> image_to_u8(const Image& img) {
    std::vector<uint8_t> out(img.px.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = quantize_u8(img.px[i]);
    return out;
}

Image image_from_u8(int h, int w, const uint8_t* data) {
    Image img(h, w);
    for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = float(data[i]) / 255.0f;
    return img;
}

namespace {

int read_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments, then parses one decimal integer.
    int ch = in.get();
    for (;;) {
        while (ch != EOF && std::isspace(ch)) ch = in.get();
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
            continue;
        }
        break;
    }
    if (ch == EOF || !std::isdigit(ch)) throw DataError("ppm: malformed header");
    int value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        if (value > 1 << 20) throw DataError("ppm: header value out of range");
        ch = in.get();
    }
    return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("ppm: cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '6')
        throw DataError("ppm: " + path + " is not a binary P6 file");
    int w = read_pnm_token(in);
    int h = read_pnm_token(in);
    int maxval = read_pnm_token(in);
    if (maxval != 255) throw DataError("ppm: only maxval 255 is supported");
    // The single whitespace byte after maxval was consumed by the tokenizer.
    std::vector<uint8_t> raw(size_t(h) * w * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (size_t(in.gcount()) != raw.size())
        throw DataError("ppm: truncated pixel data in " + path);
    return image_from_u8(h, w, raw.data());
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("ppm: cannot write " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    auto raw = image_to_u8(img);
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw DataError("ppm: write failed for " + path);
}

float sample_bilinear(const Image& img, float y, float x, int c) {
    const float fy = std::min(std::max(y, 0.0f), float(img.h - 1));
    const float fx = std::min(std::max(x, 0.0f), float(img.w - 1));
    const int y0 = int(fy), x0 = int(fx);
    const int y1 = std::min(y0 + 1, img.h - 1), x1 = std::min(x0 + 1, img.w - 1);
    const float dy = fy - float(y0), dx = fx - float(x0);
    const float top = img.at(y0, x0, c) * (1 - dx) + img.at(y0, x1, c) * dx;
    const float bot = img.at(y1, x0, c) * (1 - dx) + img.at(y1, x1, c) * dx;
    return top * (1 - dy) + bot * dy;
}

Image resize_bilinear(const Image& img, int oh, int ow) {
    Image out(oh, ow);
    // Align corners so that scaling preserves the image extents.
    const float sy = oh > 1 ? float(img.h - 1) / float(oh - 1) : 0.0f;
    const float sx = ow > 1 ? float(img.w - 1) / float(ow - 1) : 0.0f;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = sample_bilinear(img, float(y) * sy, float(x) * sx, c);
    return out;
}

Image gaussian_blur(const Image& img, float sigma) {
    if (sigma <= 0.0f) return img;
    const int radius = std::max(1, int(std::ceil(3.0f * sigma)));
    std::vector<float> k(size_t(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[size_t(i + radius)] = std::exp(-0.5f * float(i) * float(i) / (sigma * sigma));
        norm += k[size_t(i + radius)];
    }
    for (float& v : k) v = float(v / norm);

    Image tmp(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i) {
                    int xx = std::min(std::max(x + i, 0), img.w - 1);
                    acc += k[size_t(i + radius)] * img.at(y, xx, c);
                }
                tmp.at(y, x, c) = acc;
            }
    Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i) {
                    int yy = std::min(std::max(y + i, 0), img.h - 1);
                    acc += k[size_t(i + radius)] * tmp.at(yy, x, c);
                }
                out.at(y, x, c) = acc;
            }
    return out;
}

Image convolve(const Image& img, const std::vector<float>& kernel, int kh, int kw) {
    if (int(kernel.size()) != kh * kw)
        throw ShapeError("convolve: kernel size mismatch");
    const int cy = kh / 2, cx = kw / 2;
    Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.0f;
                for (int i = 0; i < kh; ++i) {
                    int yy = std::min(std::max(y + i - cy, 0), img.h - 1);
                    for (int j = 0; j < kw; ++j) {
                        int xx = std::min(std::max(x + j - cx, 0), img.w - 1);
                        acc += kernel[size_t(i * kw + j)] * img.at(yy, xx, c);
                    }
                }
                out.at(y, x, c) = acc;
            }
    return out;
}

Image image_from_chw(const float* chw, int h, int w) {
    Image img(h, w);
    const size_t plane = size_t(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = chw[size_t(c) * plane + size_t(y) * w + x];
    return img;
}

void image_to_chw(const Image& img, float* chw) {
    const size_t plane = size_t(img.h) * img.w;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                chw[size_t(c) * plane + size_t(y) * img.w + x] = img.at(y, x, c);
}

}  // namespace ar2
