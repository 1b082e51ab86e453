#include "ar2/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ar2/jpeg.hpp"
#include "ar2/rng.hpp"

namespace ar2 {

namespace {

const char* kKindNames[kNumKinds] = {"GN", "SN", "IN", "DB", "GB", "MB", "ZM", "SW",
                                     "FT", "FG", "BS", "CT", "ET", "PIX", "JPEG"};

Image gaussian_noise(const Image& img, float sigma, Rng& rng) {
    Image out = img;
    for (float& v : out.px) v += sigma * float(rng.normal());
    return out;
}

Image shot_noise(const Image& img, float lambda, Rng& rng) {
    Image out = img;
    for (float& v : out.px) {
        const double rate = std::max(0.0, double(v)) * double(lambda);
        v = float(double(rng.poisson(rate)) / double(lambda));
    }
    return out;
}

Image impulse_noise(const Image& img, float fraction, Rng& rng) {
    Image out = img;
    for (float& v : out.px) {
        if (rng.uniform() < double(fraction)) v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    }
    return out;
}

Image defocus_blur(const Image& img, float radius) {
    // Antialiased disk: per-cell coverage estimated on a 4x4 subgrid.
    const int r = std::max(1, int(std::ceil(radius)));
    const int ksize = 2 * r + 1;
    std::vector<float> kernel(size_t(ksize) * ksize, 0.0f);
    double total = 0.0;
    for (int y = 0; y < ksize; ++y)
        for (int x = 0; x < ksize; ++x) {
            int hits = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx) {
                    const float py = float(y - r) + (float(sy) + 0.5f) / 4.0f - 0.5f;
                    const float px = float(x - r) + (float(sx) + 0.5f) / 4.0f - 0.5f;
                    if (py * py + px * px <= radius * radius) ++hits;
                }
            kernel[size_t(y * ksize + x)] = float(hits) / 16.0f;
            total += kernel[size_t(y * ksize + x)];
        }
    for (float& v : kernel) v = float(v / total);
    return convolve(img, kernel, ksize, ksize);
}

Image glass_blur(const Image& img, int delta, float sigma, int iterations, Rng& rng) {
    Image out = img;
    for (int it = 0; it < iterations; ++it)
        for (int y = out.h - delta - 1; y >= delta; --y)
            for (int x = out.w - delta - 1; x >= delta; --x) {
                const int dy = int(rng.uniform_int(uint64_t(2 * delta + 1))) - delta;
                const int dx = int(rng.uniform_int(uint64_t(2 * delta + 1))) - delta;
                for (int c = 0; c < 3; ++c)
                    std::swap(out.at(y, x, c), out.at(y + dy, x + dx, c));
            }
    return gaussian_blur(out, sigma);
}

Image motion_blur(const Image& img, int length, Rng& rng) {
    const double angle = rng.uniform() * M_PI;
    const int r = length / 2;
    const int ksize = 2 * r + 1;
    std::vector<float> kernel(size_t(ksize) * ksize, 0.0f);
    // Bilinear splat of `length` unit taps along the line through the center.
    for (int i = 0; i < length; ++i) {
        const double t = double(i) - double(length - 1) / 2.0;
        const double y = double(r) + t * std::sin(angle);
        const double x = double(r) + t * std::cos(angle);
        const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
        const double fy = y - y0, fx = x - x0;
        for (int oy = 0; oy <= 1; ++oy)
            for (int ox = 0; ox <= 1; ++ox) {
                const int yy = y0 + oy, xx = x0 + ox;
                if (yy < 0 || yy >= ksize || xx < 0 || xx >= ksize) continue;
                const double w = (oy ? fy : 1.0 - fy) * (ox ? fx : 1.0 - fx);
                kernel[size_t(yy * ksize + xx)] += float(w);
            }
    }
    double total = 0.0;
    for (float v : kernel) total += v;
    for (float& v : kernel) v = float(v / total);
    return convolve(img, kernel, ksize, ksize);
}

Image zoom_blur(const Image& img, float zmax, float zstep) {
    Image acc(img.h, img.w, 0.0f);
    const float cy = float(img.h - 1) / 2.0f, cx = float(img.w - 1) / 2.0f;
    int layers = 0;
    for (float z = 1.0f; z <= zmax + 1e-6f; z += zstep) {
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                const float sy = cy + (float(y) - cy) / z;
                const float sx = cx + (float(x) - cx) / z;
                for (int c = 0; c < 3; ++c) acc.at(y, x, c) += sample_bilinear(img, sy, sx, c);
            }
        ++layers;
    }
    for (float& v : acc.px) v /= float(layers);
    return acc;
}

Image snow(const Image& img, int streaks, float alpha, float veil, Rng& rng) {
    Image out = img;
    // Whitening veil first, then bright streaks splatted along a slanted line.
    for (float& v : out.px) v = v * (1.0f - veil) + veil;
    for (int s = 0; s < streaks; ++s) {
        const float cy = float(rng.uniform() * img.h);
        const float cx = float(rng.uniform() * img.w);
        const double angle = M_PI / 4.0 + rng.uniform() * M_PI / 2.0;  // mostly vertical
        const int len = 5 + int(rng.uniform_int(8));
        const float bright = 0.7f + 0.3f * float(rng.uniform());
        for (int i = 0; i < 2 * len; ++i) {
            const float t = float(i) * 0.5f - float(len) / 2.0f;
            const int y = int(std::lround(cy + t * float(std::sin(angle))));
            const int x = int(std::lround(cx + t * float(std::cos(angle))));
            if (y < 0 || y >= img.h || x < 0 || x >= img.w) continue;
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = out.at(y, x, c) * (1.0f - alpha) + alpha * bright;
        }
    }
    return out;
}

// Multi-octave value noise in [0,1]: bilinear interpolation of random
// lattices at cell sizes 8, 4, 2, min-max normalized.
std::vector<float> value_noise(int h, int w, Rng& rng) {
    std::vector<float> field(size_t(h) * w, 0.0f);
    const int cells[3] = {8, 4, 2};
    const float weights[3] = {0.5f, 0.3f, 0.2f};
    for (int o = 0; o < 3; ++o) {
        const int cs = cells[o];
        const int gh = h / cs + 2, gw = w / cs + 2;
        std::vector<float> lattice(size_t(gh) * gw);
        for (float& v : lattice) v = float(rng.uniform());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float gy = float(y) / float(cs), gx = float(x) / float(cs);
                const int y0 = int(gy), x0 = int(gx);
                const float fy = gy - float(y0), fx = gx - float(x0);
                const float a = lattice[size_t(y0 * gw + x0)];
                const float b = lattice[size_t(y0 * gw + x0 + 1)];
                const float c = lattice[size_t((y0 + 1) * gw + x0)];
                const float d = lattice[size_t((y0 + 1) * gw + x0 + 1)];
                field[size_t(y * w + x)] +=
                    weights[o] * ((a * (1 - fx) + b * fx) * (1 - fy) +
                                  (c * (1 - fx) + d * fx) * fy);
            }
    }
    float lo = field[0], hi = field[0];
    for (float v : field) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float span = std::max(hi - lo, 1e-6f);
    for (float& v : field) v = (v - lo) / span;
    return field;
}

Image frost(const Image& img, float threshold, float alpha, Rng& rng) {
    const auto field = value_noise(img.h, img.w, rng);
    const float fr = 0.85f, fg = 0.92f, fb = 1.0f;  // icy white-blue
    Image out = img;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const float v = field[size_t(y * img.w + x)];
            if (v <= threshold) continue;
            const float m = alpha * (v - threshold) / (1.0f - threshold);
            out.at(y, x, 0) = out.at(y, x, 0) * (1 - m) + m * fr;
            out.at(y, x, 1) = out.at(y, x, 1) * (1 - m) + m * fg;
            out.at(y, x, 2) = out.at(y, x, 2) * (1 - m) + m * fb;
        }
    return out;
}

// Diamond-square plasma field on a (2^n+1)^2 grid, normalized to [0,1].
std::vector<float> plasma(int h, int w, float roughness, Rng& rng) {
    int n = 1;
    while (n < std::max(h, w)) n <<= 1;
    const int g = n + 1;
    std::vector<float> grid(size_t(g) * g, 0.0f);
    auto at = [&](int y, int x) -> float& { return grid[size_t(y) * g + x]; };
    at(0, 0) = float(rng.uniform());
    at(0, n) = float(rng.uniform());
    at(n, 0) = float(rng.uniform());
    at(n, n) = float(rng.uniform());
    float amp = 1.0f;
    for (int step = n; step > 1; step /= 2) {
        const int half = step / 2;
        for (int y = half; y < g; y += step)
            for (int x = half; x < g; x += step) {
                const float avg = (at(y - half, x - half) + at(y - half, x + half) +
                                   at(y + half, x - half) + at(y + half, x + half)) /
                                  4.0f;
                at(y, x) = avg + (float(rng.uniform()) * 2.0f - 1.0f) * amp;
            }
        for (int y = 0; y < g; y += half)
            for (int x = (y / half % 2 == 0) ? half : 0; x < g; x += step) {
                float sum = 0.0f;
                int cnt = 0;
                if (y - half >= 0) sum += at(y - half, x), ++cnt;
                if (y + half < g) sum += at(y + half, x), ++cnt;
                if (x - half >= 0) sum += at(y, x - half), ++cnt;
                if (x + half < g) sum += at(y, x + half), ++cnt;
                at(y, x) = sum / float(cnt) + (float(rng.uniform()) * 2.0f - 1.0f) * amp;
            }
        amp *= roughness;
    }
    std::vector<float> field(size_t(h) * w);
    float lo = at(0, 0), hi = at(0, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            lo = std::min(lo, at(y, x));
            hi = std::max(hi, at(y, x));
        }
    const float span = std::max(hi - lo, 1e-6f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) field[size_t(y * w + x)] = (at(y, x) - lo) / span;
    return field;
}

Image fog(const Image& img, float a, float roughness, Rng& rng) {
    const auto t = plasma(img.h, img.w, roughness, rng);
    const float mx = img.max_value();
    Image out = img;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const float tv = t[size_t(y * img.w + x)];
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = out.at(y, x, c) * (1.0f - a * tv) + a * tv * mx;
        }
    return out;
}

Image brightness(const Image& img, float b) {
    Image out = img;
    for (float& v : out.px) v += b;
    return out;
}

Image contrast(const Image& img, float c) {
    const float m = img.mean();
    Image out = img;
    for (float& v : out.px) v = (v - m) * c + m;
    return out;
}

Image elastic(const Image& img, float amplitude, float sigma, Rng& rng) {
    const size_t npx = size_t(img.h) * img.w;
    // Gaussian-smoothed +-1 noise, renormalized to peak `amplitude` pixels.
    std::vector<float> dy(npx), dx(npx);
    for (size_t i = 0; i < npx; ++i) dy[i] = float(rng.uniform()) * 2.0f - 1.0f;
    for (size_t i = 0; i < npx; ++i) dx[i] = float(rng.uniform()) * 2.0f - 1.0f;
    auto smooth = [&](std::vector<float>& f) {
        Image tmp(img.h, img.w);
        for (size_t i = 0; i < npx; ++i)
            tmp.px[i * 3] = tmp.px[i * 3 + 1] = tmp.px[i * 3 + 2] = f[i];
        tmp = gaussian_blur(tmp, sigma);
        float peak = 1e-6f;
        for (size_t i = 0; i < npx; ++i) peak = std::max(peak, std::abs(tmp.px[i * 3]));
        for (size_t i = 0; i < npx; ++i) f[i] = tmp.px[i * 3] / peak * amplitude;
    };
    smooth(dy);
    smooth(dx);
    Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = sample_bilinear(img, float(y) + dy[size_t(y * img.w + x)],
                                                  float(x) + dx[size_t(y * img.w + x)], c);
    return out;
}

Image pixelate(const Image& img, int factor) {
    const int d = std::min(factor, std::min(img.h, img.w));
    Image out(img.h, img.w);
    for (int by = 0; by < img.h; by += d)
        for (int bx = 0; bx < img.w; bx += d) {
            const int ye = std::min(by + d, img.h), xe = std::min(bx + d, img.w);
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int y = by; y < ye; ++y)
                    for (int x = bx; x < xe; ++x) acc += img.at(y, x, c);
                const float mean = float(acc / double((ye - by) * (xe - bx)));
                for (int y = by; y < ye; ++y)
                    for (int x = bx; x < xe; ++x) out.at(y, x, c) = mean;
            }
        }
    return out;
}

}  // namespace

const char* kind_name(Kind kind) { return kKindNames[int(kind)]; }

std::optional<Kind> kind_from_name(std::string_view name) {
    for (int i = 0; i < kNumKinds; ++i)
        if (name == kKindNames[i]) return Kind(i);
    return std::nullopt;
}

std::array<Kind, kNumKinds> all_kinds() {
    std::array<Kind, kNumKinds> kinds;
    for (int i = 0; i < kNumKinds; ++i) kinds[size_t(i)] = Kind(i);
    return kinds;
}

void CorruptionSpec::validate() const {
    if (int(kind) < 0 || int(kind) >= kNumKinds)
        throw ConfigError("corruption: unknown kind id " + std::to_string(int(kind)));
    if (severity < 1 || severity > 5)
        throw ConfigError("corruption: severity must be in [1,5], got " +
                          std::to_string(severity));
}

const ConstantsTable& corruption_constants() {
    static const ConstantsTable table = {
        /*version=*/1,
        /*gn_sigma=*/{0.04f, 0.06f, 0.08f, 0.09f, 0.10f},
        /*sn_lambda=*/{500.0f, 250.0f, 100.0f, 75.0f, 50.0f},
        /*in_fraction=*/{0.01f, 0.02f, 0.03f, 0.05f, 0.07f},
        /*db_radius=*/{0.5f, 1.0f, 1.5f, 2.0f, 3.0f},
        /*gb_delta=*/{1, 1, 1, 2, 2},
        /*gb_sigma=*/{0.4f, 0.6f, 0.7f, 0.8f, 1.0f},
        /*gb_iterations=*/2,
        /*mb_length=*/{3, 5, 7, 9, 11},
        /*zm_max=*/{1.06f, 1.11f, 1.16f, 1.21f, 1.26f},
        /*zm_step=*/0.01f,
        /*sw_streaks=*/{8, 12, 16, 22, 30},
        /*sw_alpha=*/{0.4f, 0.5f, 0.6f, 0.7f, 0.8f},
        /*sw_veil=*/{0.05f, 0.08f, 0.10f, 0.12f, 0.15f},
        /*ft_threshold=*/{0.65f, 0.60f, 0.55f, 0.50f, 0.45f},
        /*ft_alpha=*/{0.25f, 0.35f, 0.45f, 0.55f, 0.65f},
        /*fg_alpha=*/{0.2f, 0.3f, 0.45f, 0.6f, 0.75f},
        /*fg_roughness=*/0.55f,
        /*bs_delta=*/{0.05f, 0.10f, 0.15f, 0.20f, 0.30f},
        /*ct_scale=*/{0.75f, 0.60f, 0.45f, 0.30f, 0.15f},
        /*et_amplitude=*/{1.0f, 1.5f, 2.0f, 2.5f, 3.5f},
        /*et_sigma=*/4.0f,
        /*pix_factor=*/{2, 3, 4, 5, 6},
        /*jpeg_quality=*/{80, 65, 58, 50, 40},
    };
    return table;
}

Image corrupt(const Image& img, const CorruptionSpec& spec) {
    spec.validate();
    const ConstantsTable& k = corruption_constants();
    const int s = spec.severity - 1;
    // Separate stream per (kind, severity) so kinds stay decorrelated even
    // when the caller reuses one seed.
    Rng rng(Rng::derive(spec.seed, uint64_t(spec.kind), uint64_t(spec.severity)));

    Image out;
    switch (spec.kind) {
        case Kind::GN: out = gaussian_noise(img, k.gn_sigma[s], rng); break;
        case Kind::SN: out = shot_noise(img, k.sn_lambda[s], rng); break;
        case Kind::IN: out = impulse_noise(img, k.in_fraction[s], rng); break;
        case Kind::DB: out = defocus_blur(img, k.db_radius[s]); break;
        case Kind::GB:
            out = glass_blur(img, k.gb_delta[s], k.gb_sigma[s], k.gb_iterations, rng);
            break;
        case Kind::MB: out = motion_blur(img, k.mb_length[s], rng); break;
        case Kind::ZM: out = zoom_blur(img, k.zm_max[s], k.zm_step); break;
        case Kind::SW: out = snow(img, k.sw_streaks[s], k.sw_alpha[s], k.sw_veil[s], rng); break;
        case Kind::FT: out = frost(img, k.ft_threshold[s], k.ft_alpha[s], rng); break;
        case Kind::FG: out = fog(img, k.fg_alpha[s], k.fg_roughness, rng); break;
        case Kind::BS: out = brightness(img, k.bs_delta[s]); break;
        case Kind::CT: out = contrast(img, k.ct_scale[s]); break;
        case Kind::ET: out = elastic(img, k.et_amplitude[s], k.et_sigma, rng); break;
        case Kind::PIX: out = pixelate(img, k.pix_factor[s]); break;
        case Kind::JPEG: out = jpeg_decode(jpeg_encode(img, k.jpeg_quality[s])); break;
        default: throw ConfigError("corruption: unknown kind");
    }
    out.clamp01();
    return out;
}

void corrupt_chw(const float* in_chw, float* out_chw, int hw, const CorruptionSpec& spec) {
    Image img = image_from_chw(in_chw, hw, hw);
    Image out = corrupt(img, spec);
    image_to_chw(out, out_chw);
}

}  // namespace ar2
