#include <doctest.h>

#include <cmath>
#include <vector>

#include "ar2/rng.hpp"
#include "ar2/sgd.hpp"
#include "ar2/tensor.hpp"
#include "oracle_utils.hpp"

using namespace ar2;

namespace {

template <typename T>
TensorT<T> random_tensor(const Shape& shape, Rng& rng, bool requires_grad = false,
                         double scale = 1.0) {
    auto t = TensorT<T>::zeros(shape, requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = T(rng.normal() * scale);
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv2d all-ones 3x3 gives the window sum") {
    auto x = Tensor::filled({1, 1, 3, 3}, 1.0f);
    auto k = Tensor::filled({1, 1, 3, 3}, 1.0f);
    auto y = conv2d(x, k, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.0f));
}

TEST_CASE("conv2d 1x1 unit kernel sums channels") {
    Rng rng(11);
    auto x = random_tensor<float>({2, 3, 4, 4}, rng);
    auto k = Tensor::filled({1, 3, 1, 1}, 1.0f);
    auto y = conv2d(x, k, 1, 0);
    REQUIRE(y.shape() == Shape{2, 1, 4, 4});
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t i = 0; i < 16; ++i) {
            float expect = x.ptr()[(b * 3 + 0) * 16 + i] + x.ptr()[(b * 3 + 1) * 16 + i] +
                           x.ptr()[(b * 3 + 2) * 16 + i];
            CHECK(y.ptr()[b * 16 + i] == doctest::Approx(expect).epsilon(1e-6));
        }
}

TEST_CASE("conv2d matches the naive sextuple-loop oracle") {
    Rng rng(7);
    auto x = random_tensor<float>({2, 3, 8, 8}, rng);
    auto k = random_tensor<float>({4, 3, 3, 3}, rng);
    for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}}) {
        auto y = conv2d(x, k, stride, pad);
        std::vector<double> xd(x.ptr(), x.ptr() + x.numel());
        std::vector<double> kd(k.ptr(), k.ptr() + k.numel());
        int64_t oh = 0, ow = 0;
        auto ref = oracle::naive_conv2d(xd, 2, 3, 8, 8, kd, 4, 3, 3, stride, pad, oh, ow);
        REQUIRE(y.shape() == Shape{2, 4, oh, ow});
        for (int64_t i = 0; i < y.numel(); ++i)
            CHECK(std::abs(double(y.ptr()[i]) - ref[size_t(i)]) < 1e-5);
    }
}

TEST_CASE("conv2d rejects mismatched shapes with a dimension message") {
    auto x = Tensor::zeros({1, 3, 8, 8});
    auto k = Tensor::zeros({4, 2, 3, 3});
    CHECK_THROWS_WITH_AS(conv2d(x, k, 1, 1),
                         doctest::Contains("input channels 3 != kernel channels 2"),
                         ShapeError);
    auto big = Tensor::zeros({4, 3, 11, 11});
    CHECK_THROWS_AS(conv2d(x, big, 1, 0), ShapeError);
    CHECK_THROWS_AS(conv2d(x, k, 0, 0), ShapeError);
}

TEST_CASE("relu forward clamps negatives") {
    auto x = Tensor::from_data({3}, {-1.0f, 0.0f, 2.0f});
    auto y = relu(x);
    CHECK(y.ptr()[0] == 0.0f);
    CHECK(y.ptr()[1] == 0.0f);
    CHECK(y.ptr()[2] == 2.0f);

    auto neg = Tensor::filled({2, 2}, -3.0f);
    auto z = relu(neg);
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.ptr()[i] == 0.0f);
}

TEST_CASE("relu backward matches finite differences away from the kink") {
    Rng rng(3);
    auto x = TensorT<double>::zeros({12}, true);
    for (int64_t i = 0; i < 12; ++i) {
        double v = rng.normal();
        x.ptr()[i] = std::abs(v) < 0.05 ? 0.5 : v;  // keep clear of the kink
    }
    auto c = random_tensor<double>({12}, rng);

    TapeT<double> tape;
    TensorT<double> loss;
    {
        TapeT<double>::Scope scope(tape);
        loss = sum(mul(relu(x), c));
    }
    tape.backward(loss);

    auto fd = oracle::fd_gradient<double>(x, [&] {
        double acc = 0.0;
        for (int64_t i = 0; i < 12; ++i)
            acc += std::max(0.0, x.ptr()[i]) * c.ptr()[i];
        return acc;
    });
    CHECK(oracle::max_rel_error(x.grad(), fd) < 1e-4);
}

TEST_CASE("global_avg_pool means and backward") {
    auto c = Tensor::filled({1, 2, 3, 3}, 4.25f);
    auto y = global_avg_pool(c);
    CHECK(y.ptr()[0] == doctest::Approx(4.25f));
    CHECK(y.ptr()[1] == doctest::Approx(4.25f));

    auto m = Tensor::from_data({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    CHECK(global_avg_pool(m).item() == doctest::Approx(2.5f));

    // Gradient of the mean is 1/(H*W) per cell.
    Rng rng(5);
    auto x = random_tensor<double>({1, 2, 3, 3}, rng, true);
    auto w = random_tensor<double>({1, 2}, rng);
    TapeT<double> tape;
    TensorT<double> loss;
    {
        TapeT<double>::Scope scope(tape);
        loss = sum(mul(global_avg_pool(x), w));
    }
    tape.backward(loss);
    auto fd = oracle::fd_gradient<double>(x, [&] {
        double acc = 0.0;
        for (int64_t ch = 0; ch < 2; ++ch) {
            double mean = 0.0;
            for (int64_t i = 0; i < 9; ++i) mean += x.ptr()[ch * 9 + i] / 9.0;
            acc += mean * w.ptr()[ch];
        }
        return acc;
    });
    CHECK(oracle::max_rel_error(x.grad(), fd) < 1e-4);
}

TEST_CASE("linear identity, broadcast bias, and oracle") {
    auto x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    auto eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.ptr()[i * 3 + i] = 1.0f;
    auto zero_bias = Tensor::zeros({3});
    auto y = linear(x, eye, zero_bias);
    for (int64_t i = 0; i < 6; ++i) CHECK(y.ptr()[i] == doctest::Approx(x.ptr()[i]));

    auto zero_w = Tensor::zeros({4, 3});
    auto beta = Tensor::from_data({4}, {0.5f, -1.0f, 2.0f, 0.0f});
    auto rows = linear(x, zero_w, beta);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t c = 0; c < 4; ++c)
            CHECK(rows.ptr()[b * 4 + c] == doctest::Approx(beta.ptr()[c]));

    Rng rng(13);
    auto xr = random_tensor<float>({3, 5}, rng);
    auto wr = random_tensor<float>({4, 5}, rng);
    auto br = random_tensor<float>({4}, rng);
    auto yr = linear(xr, wr, br);
    auto ref = oracle::naive_linear(std::vector<double>(xr.ptr(), xr.ptr() + 15), 3, 5,
                                    std::vector<double>(wr.ptr(), wr.ptr() + 20), 4,
                                    std::vector<double>(br.ptr(), br.ptr() + 4));
    for (int64_t i = 0; i < yr.numel(); ++i)
        CHECK(std::abs(double(yr.ptr()[i]) - ref[size_t(i)]) < 1e-5);

    CHECK_THROWS_AS(linear(x, Tensor::zeros({4, 7}), beta), ShapeError);
}

TEST_CASE("softmax cross entropy values and gradient") {
    auto uniform = Tensor::zeros({1, 10});
    auto l1 = softmax_cross_entropy(uniform, {3});
    CHECK(l1.item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));

    auto dominant = Tensor::zeros({1, 10});
    dominant.ptr()[4] = 100.0f;
    CHECK(softmax_cross_entropy(dominant, {4}).item() < 1e-6);

    CHECK_THROWS_AS(softmax_cross_entropy(uniform, {10}), ShapeError);
    CHECK_THROWS_AS(softmax_cross_entropy(uniform, {-1}), ShapeError);

    // Gradient equals (softmax - onehot)/B; checked against finite differences.
    Rng rng(17);
    auto logits = random_tensor<double>({3, 5}, rng, true);
    std::vector<int> labels{0, 3, 2};
    TapeT<double> tape;
    TensorT<double> loss;
    {
        TapeT<double>::Scope scope(tape);
        loss = softmax_cross_entropy(logits, labels);
    }
    tape.backward(loss);
    auto fd = oracle::fd_gradient<double>(logits, [&] {
        double acc = 0.0;
        for (int64_t b = 0; b < 3; ++b) {
            double mx = -1e300, denom = 0.0;
            for (int64_t c = 0; c < 5; ++c) mx = std::max(mx, logits.ptr()[b * 5 + c]);
            for (int64_t c = 0; c < 5; ++c) denom += std::exp(logits.ptr()[b * 5 + c] - mx);
            acc += -(logits.ptr()[b * 5 + labels[size_t(b)]] - mx - std::log(denom));
        }
        return acc / 3.0;
    });
    CHECK(oracle::max_rel_error(logits.grad(), fd) < 1e-4);
}

TEST_CASE("mse values and gradient") {
    auto a = Tensor::from_data({2}, {0.0f, 0.0f});
    auto b = Tensor::from_data({2}, {2.0f, 0.0f});
    CHECK(mse(a, a).item() == 0.0f);
    CHECK(mse(a, b).item() == doctest::Approx(2.0f));
    CHECK_THROWS_AS(mse(a, Tensor::zeros({3})), ShapeError);

    Rng rng(19);
    auto x = random_tensor<double>({6}, rng, true);
    auto y = random_tensor<double>({6}, rng);
    TapeT<double> tape;
    TensorT<double> loss;
    {
        TapeT<double>::Scope scope(tape);
        loss = mse(x, y);
    }
    tape.backward(loss);
    auto fd = oracle::fd_gradient<double>(x, [&] {
        double acc = 0.0;
        for (int64_t i = 0; i < 6; ++i) {
            double d = x.ptr()[i] - y.ptr()[i];
            acc += d * d;
        }
        return acc / 6.0;
    });
    CHECK(oracle::max_rel_error(x.grad(), fd) < 1e-4);
}

TEST_CASE("backward of sum is all-ones; disconnected tensors stay untouched") {
    auto x = Tensor::zeros({2, 3}, true);
    auto unrelated = Tensor::zeros({4}, true);
    Tape tape;
    Tensor loss;
    {
        Tape::Scope scope(tape);
        loss = sum(x);
    }
    tape.backward(loss);
    REQUIRE(x.has_grad());
    for (float g : x.grad()) CHECK(g == 1.0f);
    CHECK_FALSE(unrelated.has_grad());

    CHECK_THROWS_AS(tape.backward(Tensor::zeros({2})), ShapeError);

    // Repeated backward accumulates.
    tape.backward(loss);
    for (float g : x.grad()) CHECK(g == 2.0f);
}

TEST_CASE("composite conv-relu-gap-linear-ce gradients match finite differences") {
    Rng rng(23);
    auto x = random_tensor<double>({2, 2, 8, 8}, rng, false, 0.5);
    auto w1 = random_tensor<double>({3, 2, 3, 3}, rng, true, 0.4);
    auto w2 = random_tensor<double>({4, 3, 3, 3}, rng, true, 0.4);
    auto hw = random_tensor<double>({5, 4}, rng, true, 0.5);
    auto hb = random_tensor<double>({5}, rng, true, 0.1);
    std::vector<int> labels{1, 4};

    auto eval = [&]() -> double {
        auto h1 = relu(conv2d(x, w1, 1, 1));
        auto h2 = relu(conv2d(h1, w2, 2, 1));
        auto logits = linear(global_avg_pool(h2), hw, hb);
        return double(softmax_cross_entropy(logits, labels).item());
    };

    TapeT<double> tape;
    TensorT<double> loss;
    {
        TapeT<double>::Scope scope(tape);
        auto h1 = relu(conv2d(x, w1, 1, 1));
        auto h2 = relu(conv2d(h1, w2, 2, 1));
        auto logits = linear(global_avg_pool(h2), hw, hb);
        loss = softmax_cross_entropy(logits, labels);
    }
    tape.backward(loss);

    for (auto* p : {&w1, &w2, &hw, &hb}) {
        auto fd = oracle::fd_gradient<double>(*p, eval);
        CHECK(oracle::max_rel_error(p->grad(), fd) < 1e-3);
    }
}

TEST_CASE("sgd step arithmetic and momentum recurrence") {
    auto p = Tensor::scalar(1.0f, true);
    p.grad_buffer()[0] = 1.0f;
    SgdState plain(0.1f, 0.0f);
    plain.step({p});
    CHECK(p.item() == doctest::Approx(0.9f));
    CHECK_FALSE(p.has_grad());

    auto q = Tensor::scalar(1.0f, true);
    q.grad_buffer()[0] = 1.0f;
    SgdState frozen(0.0f, 0.0f);
    frozen.step({q});
    CHECK(q.item() == 1.0f);

    // Two steps with momentum 0.9 on constant gradient g: deltas lr*g, lr*1.9g.
    const float lr = 0.05f, g = 2.0f;
    auto r = Tensor::scalar(3.0f, true);
    SgdState momentum(lr, 0.9f);
    r.grad_buffer()[0] = g;
    momentum.step({r});
    CHECK(r.item() == doctest::Approx(3.0f - lr * g));
    r.grad_buffer()[0] = g;
    momentum.step({r});
    CHECK(r.item() == doctest::Approx(3.0f - lr * g - lr * 1.9f * g));

    auto s = Tensor::scalar(1.0f, true);
    CHECK_THROWS_AS(momentum.step({s}), NumericError);
}

TEST_CASE("linear ops are linear in their inputs") {
    Rng rng(29);
    auto x = random_tensor<float>({1, 2, 6, 6}, rng);
    auto y = random_tensor<float>({1, 2, 6, 6}, rng);
    auto k = random_tensor<float>({3, 2, 3, 3}, rng);
    const float a = 1.7f, b = -0.6f;

    auto combo = Tensor::zeros({1, 2, 6, 6});
    for (int64_t i = 0; i < combo.numel(); ++i)
        combo.ptr()[i] = a * x.ptr()[i] + b * y.ptr()[i];

    auto lhs = conv2d(combo, k, 1, 1);
    auto fx = conv2d(x, k, 1, 1);
    auto fy = conv2d(y, k, 1, 1);
    for (int64_t i = 0; i < lhs.numel(); ++i)
        CHECK(std::abs(lhs.ptr()[i] - (a * fx.ptr()[i] + b * fy.ptr()[i])) < 1e-5);

    auto glhs = global_avg_pool(combo);
    auto gx = global_avg_pool(x);
    auto gy = global_avg_pool(y);
    for (int64_t i = 0; i < glhs.numel(); ++i)
        CHECK(std::abs(glhs.ptr()[i] - (a * gx.ptr()[i] + b * gy.ptr()[i])) < 1e-5);
}

TEST_CASE("op outputs are bit-deterministic across repeated evaluation") {
    Rng rng(31);
    auto x = random_tensor<float>({2, 3, 10, 10}, rng);
    auto k = random_tensor<float>({4, 3, 3, 3}, rng);
    auto y1 = conv2d(x, k, 2, 1);
    auto y2 = conv2d(x, k, 2, 1);
    for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.ptr()[i] == y2.ptr()[i]);

    Rng r1(42), r2(42);
    for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());
}

TEST_SUITE_END();
