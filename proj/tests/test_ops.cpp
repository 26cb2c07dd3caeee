#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "snnwb/errors.hpp"
#include "snnwb/ops.hpp"
#include "snnwb/rng.hpp"
#include "test_util.hpp"

using namespace snnwb;

TEST_CASE("convolution on all-zero input is all-zero") {
    Rng rng(1);
    Tensor input = Tensor::zeros({2, 5, 5});
    Tensor w = testutil::random_tensor({3, 2, 3, 3}, rng);
    Tensor out = conv2d_forward(input, w, 1, 1);
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("degenerate 1x1 convolution multiplies") {
    Tensor input({1, 1, 1}, {3.0f});
    Tensor w({1, 1, 1, 1}, {-2.5f});
    Tensor out = conv2d_forward(input, w, 1, 0);
    CHECK(out.size() == 1);
    CHECK(out[0] == doctest::Approx(-7.5f));
}

TEST_CASE("3x3 ones kernel sums the window") {
    Tensor input = Tensor::full({1, 3, 3}, 1.0f);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor out = conv2d_forward(input, w, 1, 0);
    CHECK(out.size() == 1);
    CHECK(out[0] == doctest::Approx(9.0f));
}

TEST_CASE("convolution shape errors name the offending dimensions") {
    Tensor input({2, 4, 4});
    Tensor w({3, 5, 3, 3});
    CHECK_THROWS_WITH_AS(conv2d_forward(input, w, 1, 1), doctest::Contains("channel mismatch"), ConfigError);
    Tensor big_kernel({1, 2, 7, 7});
    CHECK_THROWS_AS(conv2d_forward(input, big_kernel, 1, 0), ConfigError);
}

TEST_CASE("convolution backward: zero cotangent gives zero gradients") {
    Rng rng(2);
    Tensor input = testutil::random_tensor({1, 4, 4}, rng);
    Tensor w = testutil::random_tensor({2, 1, 3, 3}, rng);
    Tensor gout = Tensor::zeros({2, 4, 4});
    auto [gi, gw] = conv2d_backward(gout, input, w, 1, 1);
    for (int64_t i = 0; i < gi.size(); ++i) CHECK(gi[i] == 0.0f);
    for (int64_t i = 0; i < gw.size(); ++i) CHECK(gw[i] == 0.0f);
}

TEST_CASE("convolution backward: scalar chain rule") {
    Tensor input({1, 1, 1}, {3.0f});
    Tensor w({1, 1, 1, 1}, {-2.5f});
    Tensor gout({1, 1, 1}, {2.0f});
    auto [gi, gw] = conv2d_backward(gout, input, w, 1, 0);
    CHECK(gi[0] == doctest::Approx(2.0f * -2.5f));
    CHECK(gw[0] == doctest::Approx(2.0f * 3.0f));
}

namespace {

// Scalar probe: sum of conv output weighted by a fixed random cotangent, as a
// function of either the input or the weights.
double conv_loss(const std::vector<float>& x, bool vary_input, const Tensor& input0, const Tensor& w0,
                 const Tensor& cot, int stride, int pad) {
    Tensor input = input0, w = w0;
    if (vary_input)
        for (int64_t i = 0; i < input.size(); ++i) input[i] = x[static_cast<size_t>(i)];
    else
        for (int64_t i = 0; i < w.size(); ++i) w[i] = x[static_cast<size_t>(i)];
    Tensor out = conv2d_forward(input, w, stride, pad);
    double acc = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * cot[i];
    return acc;
}

}  // namespace

TEST_CASE("convolution gradients match central finite differences") {
    Rng rng(3);
    Tensor input = testutil::random_tensor({1, 4, 4}, rng);
    Tensor w = testutil::random_tensor({2, 1, 3, 3}, rng);
    Tensor cot = testutil::random_tensor({2, 4, 4}, rng);
    auto [gi, gw] = conv2d_backward(cot, input, w, 1, 1);

    auto fi = [&](const std::vector<float>& x) { return conv_loss(x, true, input, w, cot, 1, 1); };
    auto res_i = testutil::check_gradient(fi, input.vec(), gi.vec(), 1e-3, 1e-3, 1e-5);
    CHECK(res_i.ok);

    auto fw = [&](const std::vector<float>& x) { return conv_loss(x, false, input, w, cot, 1, 1); };
    auto res_w = testutil::check_gradient(fw, w.vec(), gw.vec(), 1e-3, 1e-3, 1e-5);
    CHECK(res_w.ok);
}

TEST_CASE("convolution is linear in its input") {
    Rng rng(4);
    Tensor x = testutil::random_tensor({2, 6, 6}, rng);
    Tensor y = testutil::random_tensor({2, 6, 6}, rng);
    Tensor w = testutil::random_tensor({3, 2, 3, 3}, rng);
    const float a = 0.7f, b = -1.3f;
    Tensor mix({2, 6, 6});
    for (int64_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    Tensor lhs = conv2d_forward(mix, w, 1, 1);
    Tensor fx = conv2d_forward(x, w, 1, 1);
    Tensor fy = conv2d_forward(y, w, 1, 1);
    for (int64_t i = 0; i < lhs.size(); ++i) CHECK(std::fabs(lhs[i] - (a * fx[i] + b * fy[i])) < 1e-5);
}

TEST_CASE("average pooling of a constant is the constant") {
    Tensor input = Tensor::full({3, 4, 4}, 0.7f);
    Tensor out = avgpool_forward(input, 2, 2);
    CHECK(out.shape() == std::vector<int>{3, 2, 2});
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.7f));
}

TEST_CASE("average pooling takes the window mean") {
    Tensor input({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    Tensor out = avgpool_forward(input, 2, 2);
    CHECK(out.size() == 1);
    CHECK(out[0] == doctest::Approx(2.5f));
    CHECK_THROWS_AS(avgpool_forward(input, 3, 3), ConfigError);
}

TEST_CASE("average pooling backward distributes uniformly and matches finite differences") {
    Rng rng(5);
    Tensor input = testutil::random_tensor({2, 4, 4}, rng);
    Tensor cot = testutil::random_tensor({2, 2, 2}, rng);
    Tensor gi = avgpool_backward(cot, {2, 4, 4}, 2, 2);
    // Uniform share of grad/p^2 inside each window.
    CHECK(gi.at3(0, 0, 0) == doctest::Approx(cot.at3(0, 0, 0) / 4.0f));
    CHECK(gi.at3(0, 0, 1) == doctest::Approx(cot.at3(0, 0, 0) / 4.0f));

    auto f = [&](const std::vector<float>& x) {
        Tensor in2({2, 4, 4}, x);
        Tensor out = avgpool_forward(in2, 2, 2);
        double acc = 0.0;
        for (int64_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * cot[i];
        return acc;
    };
    auto res = testutil::check_gradient(f, input.vec(), gi.vec(), 1e-3, 1e-4);
    CHECK(res.ok);
}

TEST_CASE("fully-connected identity and zero weights") {
    Tensor x({4}, {1.0f, -2.0f, 3.0f, 0.5f});
    Tensor eye = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.at2(i, i) = 1.0f;
    Tensor out = fc_forward(x, eye);
    CHECK(testutil::allclose(out, x));
    Tensor zero = Tensor::zeros({4, 4});
    Tensor out0 = fc_forward(x, zero);
    for (int64_t i = 0; i < out0.size(); ++i) CHECK(out0[i] == 0.0f);
    Tensor bad({3, 5});
    CHECK_THROWS_WITH_AS(fc_forward(x, bad), doctest::Contains("length mismatch"), ConfigError);
}

TEST_CASE("a 2048-to-512 layer holds 1048576 weights") {
    Tensor w({512, 2048});
    CHECK(w.size() == 1048576);
}

TEST_CASE("fully-connected gradients match finite differences") {
    Rng rng(6);
    Tensor x = testutil::random_tensor({10}, rng);
    Tensor w = testutil::random_tensor({4, 10}, rng);
    Tensor cot = testutil::random_tensor({4}, rng);
    auto [gi, gw] = fc_backward(cot, x, w);
    auto f = [&](const std::vector<float>& v) {
        Tensor w2({4, 10}, v);
        Tensor out = fc_forward(x, w2);
        double acc = 0.0;
        for (int64_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * cot[i];
        return acc;
    };
    CHECK(testutil::check_gradient(f, w.vec(), gw.vec(), 1e-3, 1e-3, 1e-5).ok);
    auto g = [&](const std::vector<float>& v) {
        Tensor x2({10}, v);
        Tensor out = fc_forward(x2, w);
        double acc = 0.0;
        for (int64_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * cot[i];
        return acc;
    };
    CHECK(testutil::check_gradient(g, x.vec(), gi.vec(), 1e-3, 1e-3, 1e-5).ok);
}

TEST_CASE("relu clamps and its mask uses the zero subgradient at zero") {
    Tensor x({3}, {-1.0f, 0.0f, 2.0f});
    Tensor out = relu(x);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.0f);
    CHECK(out[2] == 2.0f);
    Tensor g({3}, {1.0f, 1.0f, 1.0f});
    Tensor gi = relu_backward(x, g);
    CHECK(gi[0] == 0.0f);
    CHECK(gi[1] == 0.0f);  // tie-break: no gradient at exactly zero
    CHECK(gi[2] == 1.0f);
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
    Rng rng(7);
    Tensor x({32});
    for (int64_t i = 0; i < x.size(); ++i) {
        float v = rng.uniform(0.1f, 1.0f);
        x[i] = rng.bernoulli(0.5f) ? v : -v;  // keep everything away from 0
    }
    Tensor cot = testutil::random_tensor({32}, rng);
    Tensor gi = relu_backward(x, cot);
    auto f = [&](const std::vector<float>& v) {
        Tensor x2({32}, v);
        Tensor out = relu(x2);
        double acc = 0.0;
        for (int64_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * cot[i];
        return acc;
    };
    CHECK(testutil::check_gradient(f, x.vec(), gi.vec(), 1e-3, 1e-5).ok);
}
