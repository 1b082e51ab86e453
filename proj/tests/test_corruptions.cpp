#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "ar2/corruptions.hpp"
#include "ar2/image.hpp"

using namespace ar2;

namespace {

// Deterministic fixture: smooth gradients, a bright disc, and a dark square,
// so every corruption has edges, flat regions, and mid-tones to act on.
Image fixture_image(int hw = 48) {
    Image img(hw, hw);
    const float cx = float(hw - 1) / 2.0f;
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            img.at(y, x, 0) = 0.25f + 0.5f * float(x) / float(hw - 1);
            img.at(y, x, 1) = 0.25f + 0.5f * float(y) / float(hw - 1);
            img.at(y, x, 2) = 0.5f + 0.25f * std::sin(float(x + 2 * y) * 0.35f);
            const float dy = float(y) - cx, dx = float(x) - cx;
            if (dy * dy + dx * dx < float(hw) * float(hw) / 16.0f) {
                img.at(y, x, 0) = 0.85f;
                img.at(y, x, 1) = 0.80f;
            }
            if (y >= hw / 8 + 1 && y < hw / 4 + 1 && x >= hw / 2 + 1 && x < 7 * hw / 8 + 1) {
                img.at(y, x, 0) = 0.12f;
                img.at(y, x, 1) = 0.15f;
                img.at(y, x, 2) = 0.20f;
            }
        }
    return img;
}

double mean_abs_diff(const Image& a, const Image& b) {
    REQUIRE(a.numel() == b.numel());
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) acc += std::abs(double(a.px[i]) - double(b.px[i]));
    return acc / double(a.numel());
}

std::string golden_dir() { return AR2_GOLDEN_DIR; }

}  // namespace

TEST_SUITE_BEGIN("corruptions");

TEST_CASE("kind names round trip and cover all fifteen kinds") {
    auto kinds = all_kinds();
    REQUIRE(kinds.size() == size_t(kNumKinds));
    REQUIRE(kNumKinds == 15);
    for (Kind k : kinds) {
        auto back = kind_from_name(kind_name(k));
        REQUIRE(back.has_value());
        CHECK(*back == k);
    }
    CHECK(!kind_from_name("not-a-kind").has_value());
    CHECK(std::string(kind_name(Kind::GN)) == "GN");
    CHECK(std::string(kind_name(Kind::JPEG)) == "JPEG");
}

TEST_CASE("spec validation rejects out-of-range severity") {
    CHECK_THROWS_AS((CorruptionSpec{Kind::GN, 0, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((CorruptionSpec{Kind::GN, 6, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((corrupt(fixture_image(), {Kind::GN, 7, 1})), ConfigError);
    CHECK_NOTHROW((CorruptionSpec{Kind::GN, 1, 1}.validate()));
}

TEST_CASE("constants table is versioned") {
    CHECK(corruption_constants().version == 1);
}

TEST_CASE("every kind preserves geometry and stays inside [0,1]") {
    const auto img = fixture_image();
    for (Kind k : all_kinds())
        for (int s : {1, 5}) {
            auto out = corrupt(img, {k, s, 3});
            REQUIRE(out.h == img.h);
            REQUIRE(out.w == img.w);
            for (float v : out.px) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
        }
}

TEST_CASE("corruption is a pure function of (image, kind, severity, seed)") {
    const auto img = fixture_image();
    for (Kind k : all_kinds()) {
        auto a = corrupt(img, {k, 3, 42});
        auto b = corrupt(img, {k, 3, 42});
        CHECK(a.px == b.px);
    }
}

TEST_CASE("stochastic kinds respond to the seed") {
    const auto img = fixture_image();
    for (Kind k : {Kind::GN, Kind::SN, Kind::IN, Kind::GB, Kind::MB, Kind::SW, Kind::FT,
                   Kind::FG, Kind::ET}) {
        auto a = corrupt(img, {k, 3, 1});
        auto b = corrupt(img, {k, 3, 2});
        CHECK(a.px != b.px);
    }
}

TEST_CASE("deterministic kinds ignore the seed") {
    const auto img = fixture_image();
    for (Kind k : {Kind::DB, Kind::ZM, Kind::BS, Kind::CT, Kind::PIX, Kind::JPEG}) {
        auto a = corrupt(img, {k, 3, 1});
        auto b = corrupt(img, {k, 3, 2});
        CHECK(a.px == b.px);
    }
}

TEST_CASE("gaussian noise sigma matches the table within 3 percent") {
    // 200x200x3 = 120k samples per severity; the image sits at mid-gray so
    // clamping never bites at these sigmas.
    const Image img(200, 200, 0.5f);
    const auto& sigma = corruption_constants().gn_sigma;
    for (int s = 1; s <= 5; ++s) {
        auto out = corrupt(img, {Kind::GN, s, uint64_t(100 + s)});
        double sum = 0.0, sum2 = 0.0;
        for (size_t i = 0; i < out.numel(); ++i) {
            const double d = double(out.px[i]) - 0.5;
            sum += d;
            sum2 += d * d;
        }
        const double n = double(out.numel());
        const double est = std::sqrt(sum2 / n - (sum / n) * (sum / n));
        CHECK(std::abs(est / double(sigma[s - 1]) - 1.0) < 0.03);
    }
}

TEST_CASE("shot noise keeps the mean and scales variance with 1/lambda") {
    const Image img(200, 200, 0.5f);
    const auto& lam = corruption_constants().sn_lambda;
    double prev_var = 0.0;
    for (int s = 1; s <= 5; ++s) {
        auto out = corrupt(img, {Kind::SN, s, 7});
        double sum = 0.0, sum2 = 0.0;
        for (size_t i = 0; i < out.numel(); ++i) {
            sum += out.px[i];
            sum2 += double(out.px[i]) * out.px[i];
        }
        const double n = double(out.numel());
        const double mean = sum / n;
        const double var = sum2 / n - mean * mean;
        CHECK(std::abs(mean - 0.5) < 0.005);
        CHECK(var == doctest::Approx(0.5 / double(lam[s - 1])).epsilon(0.05));
        CHECK(var > prev_var);
        prev_var = var;
    }
}

TEST_CASE("impulse noise flips the expected pixel fraction to 0 or 1") {
    const Image img(200, 200, 0.5f);
    const auto& frac = corruption_constants().in_fraction;
    for (int s = 1; s <= 5; ++s) {
        auto out = corrupt(img, {Kind::IN, s, 9});
        size_t changed = 0;
        for (size_t i = 0; i < out.numel(); ++i)
            if (out.px[i] != 0.5f) {
                CHECK((out.px[i] == 0.0f || out.px[i] == 1.0f));
                ++changed;
            }
        const double got = double(changed) / double(out.numel());
        CHECK(got == doctest::Approx(double(frac[s - 1])).epsilon(0.15));
    }
}

TEST_CASE("brightness adds the tabulated offset exactly") {
    const Image img(8, 8, 0.3f);
    auto out = corrupt(img, {Kind::BS, 3, 0});
    for (float v : out.px) CHECK(v == doctest::Approx(0.45f).epsilon(1e-6));
    // Clamped at the top end.
    const Image bright(8, 8, 0.9f);
    auto clipped = corrupt(bright, {Kind::BS, 5, 0});
    for (float v : clipped.px) CHECK(v == 1.0f);
}

TEST_CASE("contrast compresses around the scalar mean") {
    // Constant images are fixed points at every severity.
    const Image flat(8, 8, 0.37f);
    for (int s = 1; s <= 5; ++s) {
        auto out = corrupt(flat, {Kind::CT, s, 0});
        for (float v : out.px) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
    }
    // Closed form on a two-level image: mean anchors, deltas scale by c.
    Image two(2, 2, 0.4f);
    two.at(0, 0, 0) = 0.8f;  // mean = (0.8 + 11*0.4)/12 = 13/30
    const float m = two.mean();
    const auto& c = corruption_constants().ct_scale;
    for (int s = 1; s <= 5; ++s) {
        auto out = corrupt(two, {Kind::CT, s, 0});
        CHECK(out.at(0, 0, 0) == doctest::Approx((0.8f - m) * c[s - 1] + m).epsilon(1e-5));
        CHECK(out.at(1, 1, 2) == doctest::Approx((0.4f - m) * c[s - 1] + m).epsilon(1e-5));
    }
}

TEST_CASE("pixelate produces constant blocks equal to the block mean") {
    const auto img = fixture_image(32);
    auto out = corrupt(img, {Kind::PIX, 3, 0});  // factor 4
    const int d = corruption_constants().pix_factor[2];
    REQUIRE(d == 4);
    for (int by = 0; by < 32; by += d)
        for (int bx = 0; bx < 32; bx += d)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int y = by; y < by + d; ++y)
                    for (int x = bx; x < bx + d; ++x) acc += img.at(y, x, c);
                const float mean = float(acc / (d * d));
                for (int y = by; y < by + d; ++y)
                    for (int x = bx; x < bx + d; ++x)
                        CHECK(out.at(y, x, c) == doctest::Approx(mean).epsilon(1e-6));
            }
}

TEST_CASE("distance from the clean image is non-decreasing in severity") {
    const auto img = fixture_image();
    for (Kind k : {Kind::GN, Kind::SN, Kind::IN, Kind::BS, Kind::CT, Kind::PIX, Kind::JPEG}) {
        double prev = 0.0;
        for (int s = 1; s <= 5; ++s) {
            const double d = mean_abs_diff(img, corrupt(img, {k, s, 11}));
            INFO("kind ", kind_name(k), " severity ", s);
            CHECK(d > 0.0);
            CHECK(d >= prev);
            prev = d;
        }
    }
}

TEST_CASE("chw wrapper agrees with the image-level transform") {
    const auto img = fixture_image(32);
    std::vector<float> chw(img.numel()), out_chw(img.numel());
    image_to_chw(img, chw.data());
    CorruptionSpec spec{Kind::GN, 3, 21};
    corrupt_chw(chw.data(), out_chw.data(), 32, spec);
    const auto direct = corrupt(img, spec);
    std::vector<float> direct_chw(img.numel());
    image_to_chw(direct, direct_chw.data());
    CHECK(out_chw == direct_chw);
}

TEST_CASE("severity-3 outputs match the golden files byte for byte") {
    const auto dir = golden_dir();
    const bool regen = std::getenv("AR2_REGEN_GOLDENS") != nullptr;
    if (regen) write_ppm(dir + "/fixture.ppm", fixture_image());
    const auto fixture = read_ppm(dir + "/fixture.ppm");
    for (Kind k : all_kinds()) {
        const auto out = corrupt(fixture, {k, 3, 0x5eed});
        const auto path = dir + "/" + kind_name(k) + "-sev3.ppm";
        if (regen) {
            write_ppm(path, out);
            continue;
        }
        INFO("golden: ", path);
        const auto expect = image_to_u8(read_ppm(path));
        CHECK(image_to_u8(out) == expect);
    }
}

TEST_SUITE_END();
