#include "ar2/cam.hpp"

#include <algorithm>
#include <cmath>

namespace ar2 {

std::vector<float> upsample_normalize(const CamMap& cam, int H, int W) {
    if (H < cam.h || W < cam.w)
        throw ShapeError("upsample_normalize: target " + std::to_string(H) + "x" +
                         std::to_string(W) + " below feature resolution " +
                         std::to_string(cam.h) + "x" + std::to_string(cam.w));
    // Bilinear upsample (align-corners) at feature-map granularity.
    std::vector<float> up(size_t(H) * W);
    const float sy = H > 1 ? float(cam.h - 1) / float(H - 1) : 0.0f;
    const float sx = W > 1 ? float(cam.w - 1) / float(W - 1) : 0.0f;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const float fy = float(y) * sy, fx = float(x) * sx;
            const int y0 = int(fy), x0 = int(fx);
            const int y1 = std::min(y0 + 1, cam.h - 1), x1 = std::min(x0 + 1, cam.w - 1);
            const float dy = fy - float(y0), dx = fx - float(x0);
            const float a = cam.values[size_t(y0 * cam.w + x0)];
            const float b = cam.values[size_t(y0 * cam.w + x1)];
            const float c = cam.values[size_t(y1 * cam.w + x0)];
            const float d = cam.values[size_t(y1 * cam.w + x1)];
            up[size_t(y * W + x)] =
                (a * (1 - dx) + b * dx) * (1 - dy) + (c * (1 - dx) + d * dx) * dy;
        }
    float lo = up[0], hi = up[0];
    for (float v : up) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12f) {
        std::fill(up.begin(), up.end(), 0.0f);  // constant maps carry no signal
        return up;
    }
    for (float& v : up) v = (v - lo) / (hi - lo);
    return up;
}

}  // namespace ar2
