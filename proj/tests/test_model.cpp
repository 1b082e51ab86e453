#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ar2/checkpoint.hpp"
#include "ar2/model.hpp"
#include "ar2/rng.hpp"

using namespace ar2;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/ar2-model-test-") + name;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("default architecture arithmetic") {
    ArchConfig arch;
    CHECK(arch.feature_channels() == 64);
    CHECK(arch.feature_hw() == 8);
    CHECK(arch.layer_widths() == std::vector<int64_t>{32, 32, 64, 64, 64, 64});
    CHECK(ArchConfig::layer_strides() == std::vector<int>{1, 1, 2, 1, 2, 1});
}

TEST_CASE("architecture validation rejects degenerate settings") {
    ArchConfig arch;
    arch.input_hw = 8;
    CHECK_THROWS_AS(arch.validate(), ConfigError);
    arch = ArchConfig{};
    arch.classes = 1;
    CHECK_THROWS_AS(arch.validate(), ConfigError);
    arch = ArchConfig{};
    arch.base_width = 0;
    CHECK_THROWS_AS(arch.validate(), ConfigError);
}

TEST_CASE("parameter count and backbone/head partition") {
    auto net = CamNet::build(ArchConfig{}, 1);
    // conv: 32*3*9 + 32*32*9 + 64*32*9 + 3 * 64*64*9 = 139104; head: 64*10 + 10.
    CHECK(net.param_count() == 139754);

    auto part = net.partition_params();
    REQUIRE(part.backbone.size() == 6);
    REQUIRE(part.head.size() == 2);
    int64_t backbone_n = 0, head_n = 0;
    for (const auto& t : part.backbone) backbone_n += t.numel();
    for (const auto& t : part.head) head_n += t.numel();
    CHECK(backbone_n == 139104);
    CHECK(head_n == 650);
    CHECK(backbone_n + head_n == net.param_count());

    // The two sets are disjoint views of the model's own storage.
    for (const auto& b : part.backbone)
        for (const auto& h : part.head) CHECK(b.impl() != h.impl());
    CHECK(part.head[0].impl() == net.head_weight().impl());
    CHECK(part.head[1].impl() == net.head_bias().impl());
}

TEST_CASE("forward produces the documented shapes") {
    auto net = CamNet::build(ArchConfig{}, 3);
    auto batch = Tensor::filled({2, 3, 32, 32}, 0.25f);
    auto out = net.forward(batch);
    CHECK(out.logits.shape() == Shape{2, 10});
    CHECK(out.features.shape() == Shape{2, 64, 8, 8});
}

TEST_CASE("forward rejects mismatched input geometry") {
    auto net = CamNet::build(ArchConfig{}, 3);
    CHECK_THROWS_AS(net.forward(Tensor::zeros({2, 1, 32, 32})), ShapeError);
    CHECK_THROWS_AS(net.forward(Tensor::zeros({2, 3, 16, 32})), ShapeError);
    CHECK_THROWS_AS(net.forward(Tensor::zeros({2, 3, 32})), ShapeError);
}

TEST_CASE("initialization is a pure function of the seed") {
    auto a = CamNet::build(ArchConfig{}, 42);
    auto b = CamNet::build(ArchConfig{}, 42);
    auto c = CamNet::build(ArchConfig{}, 43);
    bool same = true, differs = false;
    auto pa = a.named_params(), pb = b.named_params(), pc = c.named_params();
    for (size_t i = 0; i < pa.size(); ++i) {
        same = same && std::memcmp(pa[i].second.ptr(), pb[i].second.ptr(),
                                   size_t(pa[i].second.numel()) * sizeof(float)) == 0;
        differs = differs || std::memcmp(pa[i].second.ptr(), pc[i].second.ptr(),
                                         size_t(pa[i].second.numel()) * sizeof(float)) != 0;
    }
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("clone yields independent storage") {
    auto net = CamNet::build(ArchConfig{}, 5);
    auto copy = net.clone();
    const float before = net.conv_weight(0).ptr()[0];
    copy.conv_weight(0).ptr()[0] = before + 1.0f;
    CHECK(net.conv_weight(0).ptr()[0] == before);
}

TEST_CASE("float/double cast preserves values and forward agrees") {
    auto net = CamNet::build(ArchConfig{}, 9);
    auto netd = net.cast<double>();
    CHECK(double(net.head_weight().ptr()[3]) == netd.head_weight().ptr()[3]);

    Rng rng(21);
    auto x = Tensor::zeros({1, 3, 32, 32});
    for (int64_t i = 0; i < x.numel(); ++i) x.ptr()[i] = float(rng.uniform());
    auto xd = x.cast<double>();
    auto lf = net.forward(x).logits;
    auto ld = netd.forward(xd).logits;
    for (int64_t i = 0; i < lf.numel(); ++i)
        CHECK(double(lf.ptr()[i]) == doctest::Approx(ld.ptr()[i]).epsilon(1e-4));
}

TEST_CASE("checkpoint round trip is bit exact") {
    auto net = CamNet::build(ArchConfig{}, 77);
    // Perturb so the file differs from any fresh initialization.
    net.head_bias().ptr()[2] = 0.5f;
    Provenance prov;
    prov.seed = 77;
    prov.config_hash = 0xdeadbeefcafef00dull;
    prov.outer_iterations = 30;
    prov.refine_steps = 1;
    prov.finetune_steps = 1;

    const auto path = temp_path("roundtrip.ckpt");
    save_checkpoint(net, prov, path);
    auto loaded = load_checkpoint(path);

    CHECK(loaded.provenance == prov);
    CHECK(loaded.model.arch() == net.arch());
    auto pa = net.named_params(), pb = loaded.model.named_params();
    for (size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].first == pb[i].first);
        CHECK(std::memcmp(pa[i].second.ptr(), pb[i].second.ptr(),
                          size_t(pa[i].second.numel()) * sizeof(float)) == 0);
    }

    // Saving the loaded model reproduces the file byte for byte.
    const auto path2 = temp_path("roundtrip2.ckpt");
    save_checkpoint(loaded.model, loaded.provenance, path2);
    CHECK(file_hash(path) == file_hash(path2));
    CHECK(slurp(path) == slurp(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint loader distinguishes failure kinds") {
    ArchConfig small;
    small.base_width = 4;
    small.input_hw = 16;
    auto net = CamNet::build(small, 1);
    const auto path = temp_path("broken.ckpt");
    save_checkpoint(net, Provenance{}, path);
    const auto good = slurp(path);

    auto expect_kind = [&](const std::vector<char>& bytes, CheckpointError::Kind kind) {
        spit(path, bytes);
        try {
            load_checkpoint(path);
            FAIL("expected a CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == kind);
        }
    };

    auto bad = good;
    bad[0] = 'X';
    expect_kind(bad, CheckpointError::Kind::BadMagic);

    bad = good;
    bad[4] = 9;  // version field follows the 4 magic bytes
    expect_kind(bad, CheckpointError::Kind::VersionMismatch);

    bad = good;
    bad.resize(good.size() / 2);
    expect_kind(bad, CheckpointError::Kind::Truncated);

    bad = good;
    // Parameter-blob count sits after magic(4) + version(4) + arch(16) + provenance(28).
    bad[52] = char(bad[52] + 1);
    expect_kind(bad, CheckpointError::Kind::Malformed);

    CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), DataError);
    std::remove(path.c_str());
}

TEST_SUITE_END();
