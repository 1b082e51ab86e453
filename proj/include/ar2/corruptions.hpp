#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ar2/image.hpp"

namespace ar2 {

// The 15 benchmark corruption kinds, in the canonical reporting order
// (noise, blur, weather, digital).
enum class Kind : int {
    GN = 0,  // gaussian noise
    SN,      // shot noise
    IN,      // impulse noise
    DB,      // defocus blur
    GB,      // glass blur
    MB,      // motion blur
    ZM,      // zoom blur
    SW,      // snow
    FT,      // frost
    FG,      // fog
    BS,      // brightness
    CT,      // contrast
    ET,      // elastic transform
    PIX,     // pixelate
    JPEG,    // jpeg compression
};

inline constexpr int kNumKinds = 15;

const char* kind_name(Kind kind);
std::optional<Kind> kind_from_name(std::string_view name);
std::array<Kind, kNumKinds> all_kinds();

struct CorruptionSpec {
    Kind kind = Kind::GN;
    int severity = 3;
    uint64_t seed = 0;

    void validate() const;  // severity in [1,5]
};

// Severity constants, tuned for 32x32 inputs. One versioned table so values
// can be swapped without touching transform code.
struct ConstantsTable {
    int version;

    float gn_sigma[5];
    float sn_lambda[5];
    float in_fraction[5];
    float db_radius[5];
    int gb_delta[5];
    float gb_sigma[5];
    int gb_iterations;
    int mb_length[5];
    float zm_max[5];
    float zm_step;
    int sw_streaks[5];
    float sw_alpha[5];
    float sw_veil[5];
    float ft_threshold[5];
    float ft_alpha[5];
    float fg_alpha[5];
    float fg_roughness;
    float bs_delta[5];
    float ct_scale[5];
    float et_amplitude[5];
    float et_sigma;
    int pix_factor[5];
    int jpeg_quality[5];
};

const ConstantsTable& corruption_constants();

// Pure function of (img, spec): identical spec and input give bitwise
// identical output. Output clamped to [0,1].
Image corrupt(const Image& img, const CorruptionSpec& spec);

// CHW convenience wrapper used by dataset-level pipelines.
void corrupt_chw(const float* in_chw, float* out_chw, int hw, const CorruptionSpec& spec);

}  // namespace ar2
