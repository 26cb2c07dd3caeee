#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snnwb/errors.hpp"
#include "snnwb/heads.hpp"
#include "test_util.hpp"

using namespace snnwb;

namespace {

StochmaxParams make_params(int K, int H, Rng& rng) {
    StochmaxParams p;
    p.W_psi = testutil::random_tensor({K, H}, rng, -0.3f, 0.3f);
    p.b_psi = testutil::random_tensor({K}, rng, -0.5f, 0.5f);
    return p;
}

}  // namespace

TEST_CASE("uniform logits cost ln K") {
    Tensor logits = Tensor::full({10}, 0.37f);
    SoftmaxResult r = softmax_loss(logits, 3);
    CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-9));
}

TEST_CASE("extreme logits stay finite through max subtraction") {
    Tensor logits({2}, {1000.0f, 0.0f});
    SoftmaxResult r = softmax_loss(logits, 0);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax gradient sums to zero and probabilities to one") {
    Rng rng(21);
    for (int trial = 0; trial < 25; ++trial) {
        Tensor logits = testutil::random_tensor({7}, rng, -5.0f, 5.0f);
        SoftmaxResult r = softmax_loss(logits, trial % 7);
        double gs = 0, ps = 0;
        for (int k = 0; k < 7; ++k) {
            gs += r.grad_logits[k];
            ps += r.probs[k];
        }
        CHECK(std::fabs(gs) < 1e-6);
        CHECK(ps == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("bad targets are rejected") {
    Tensor logits({4});
    CHECK_THROWS_AS(softmax_loss(logits, 4), InputError);
    CHECK_THROWS_AS(softmax_loss(logits, -1), InputError);
    Tensor one({1});
    CHECK_THROWS_AS(softmax_loss(one, 0), InputError);
}

TEST_CASE("retaining every class reduces the stochastic head to softmax") {
    Rng rng(22);
    Tensor logits = testutil::random_tensor({10}, rng, -3.0f, 3.0f);
    Tensor h = testutil::random_tensor({16}, rng);
    StochmaxParams params = make_params(10, 16, rng);
    std::vector<float> all_on(10, 1.0f);
    StochmaxResult sr = stochmax_loss_masked(logits, h, params, 4, all_on);
    SoftmaxResult r = softmax_loss(logits, 4);
    CHECK(std::fabs(sr.loss - r.loss) < 1e-9);
    for (int k = 0; k < 10; ++k) CHECK(std::fabs(sr.grad_logits[k] - r.grad_logits[k]) < 1e-6);
}

TEST_CASE("dropping every non-target class makes the target trivially win") {
    Rng rng(23);
    Tensor logits = testutil::random_tensor({10}, rng, -3.0f, 3.0f);
    Tensor h = testutil::random_tensor({8}, rng);
    StochmaxParams params = make_params(10, 8, rng);
    std::vector<float> only_target(10, 0.0f);
    only_target[6] = 1.0f;
    StochmaxResult sr = stochmax_loss_masked(logits, h, params, 6, only_target);
    CHECK(sr.loss < 0.01);
}

TEST_CASE("a dropped class loses its gradient exactly at epsilon zero") {
    Rng rng(24);
    Tensor logits = testutil::random_tensor({6}, rng, -2.0f, 2.0f);
    Tensor h = testutil::random_tensor({8}, rng);
    StochmaxParams params = make_params(6, 8, rng);
    params.epsilon = 0.0;
    std::vector<float> z(6, 1.0f);
    z[2] = 0.0f;
    StochmaxResult sr = stochmax_loss_masked(logits, h, params, 0, z);
    CHECK(sr.grad_logits[2] == 0.0f);
    CHECK(sr.probs[2] == 0.0f);
}

TEST_CASE("frozen-mask logits gradient matches finite differences") {
    Rng rng(25);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor logits = testutil::random_tensor({8}, rng, -2.0f, 2.0f);
        Tensor h = testutil::random_tensor({12}, rng);
        StochmaxParams params = make_params(8, 12, rng);
        std::vector<float> z(8, 0.0f);
        const int target = trial % 8;
        z[static_cast<size_t>(target)] = 1.0f;
        for (int k = 0; k < 8; ++k)
            if (rng.bernoulli(0.6f)) z[static_cast<size_t>(k)] = 1.0f;

        StochmaxResult sr = stochmax_loss_masked(logits, h, params, target, z);
        auto f = [&](const std::vector<float>& v) {
            Tensor l2({8}, v);
            return stochmax_loss_masked(l2, h, params, target, z).loss;
        };
        auto res = testutil::check_gradient(f, logits.vec(), sr.grad_logits.vec(), 1e-3, 1e-4);
        CHECK(res.ok);
    }
}

TEST_CASE("retain-probability parameters receive finite-difference-consistent gradients") {
    // With z treated as rho (inference mode), the straight-through path is the
    // actual derivative, so the psi gradients must match finite differences of
    // the inference-mode loss.
    Rng rng(26);
    Tensor logits = testutil::random_tensor({5}, rng, -2.0f, 2.0f);
    Tensor h = testutil::random_tensor({6}, rng);
    StochmaxParams params = make_params(5, 6, rng);
    const int target = 2;
    Rng sample(1);
    StochmaxResult sr = stochmax_loss(logits, h, params, target, sample, false);

    auto f = [&](const std::vector<float>& v) {
        StochmaxParams p2 = params;
        p2.W_psi = Tensor({5, 6}, v);
        Rng s2(1);
        return stochmax_loss(logits, h, p2, target, s2, false).loss;
    };
    auto res = testutil::check_gradient(f, params.W_psi.vec(), sr.grad_W_psi.vec(), 1e-3, 2e-3);
    CHECK(res.ok);
}

TEST_CASE("inference mode is deterministic") {
    Rng rng(27);
    Tensor logits = testutil::random_tensor({6}, rng);
    Tensor h = testutil::random_tensor({4}, rng);
    StochmaxParams params = make_params(6, 4, rng);
    Rng a(5), b(9);  // different streams must not matter
    StochmaxResult ra = stochmax_loss(logits, h, params, 1, a, false);
    StochmaxResult rb = stochmax_loss(logits, h, params, 1, b, false);
    CHECK(ra.loss == rb.loss);
    for (int k = 0; k < 6; ++k) CHECK(ra.probs[k] == rb.probs[k]);
}

TEST_CASE("uniform retain probabilities keep the softmax argmax") {
    Rng rng(28);
    Tensor logits = testutil::random_tensor({9}, rng, -4.0f, 4.0f);
    Tensor h = Tensor::zeros({5});
    StochmaxParams params;
    params.W_psi = Tensor::zeros({9, 5});
    params.b_psi = Tensor::full({9}, 0.4f);  // rho identical across classes
    Rng s(3);
    StochmaxResult sr = stochmax_loss(logits, h, params, 0, s, false);
    SoftmaxResult r = softmax_loss(logits, 0);
    int arg_s = 0, arg_r = 0;
    for (int k = 1; k < 9; ++k) {
        if (sr.probs[k] > sr.probs[arg_s]) arg_s = k;
        if (r.probs[k] > r.probs[arg_r]) arg_r = k;
    }
    CHECK(arg_s == arg_r);
}

TEST_CASE("training mode consumes one draw per class and forces the target on") {
    Rng rng(29);
    Tensor logits = testutil::random_tensor({4}, rng);
    Tensor h = testutil::random_tensor({3}, rng);
    StochmaxParams params = make_params(4, 3, rng);
    params.b_psi.fill(-20.0f);  // rho ~ 0: every sampled class drops
    Rng s(17);
    StochmaxResult sr = stochmax_loss(logits, h, params, 2, s, true);
    CHECK(sr.mask[2] > 0.5f);  // target retained
    for (int k = 0; k < 4; ++k)
        if (k != 2) CHECK(sr.mask[static_cast<size_t>(k)] < 0.5f);
}

TEST_CASE("spike counts accumulate over the time dimension") {
    SpikeTrain train;
    train.T = 25;
    train.data = Tensor({25, 3});
    for (int t = 0; t < 25; ++t) {
        train.data[t * 3 + 0] = 1.0f;             // always firing
        train.data[t * 3 + 1] = (t % 2) ? 1.0f : 0.0f;
        train.data[t * 3 + 2] = 0.0f;             // silent
    }
    Tensor counts = accumulate_head_input(train);
    CHECK(counts[0] == 25.0f);
    CHECK(counts[1] == 12.0f);
    CHECK(counts[2] == 0.0f);

    SpikeTrain empty;
    CHECK_THROWS_AS(accumulate_head_input(empty), InputError);
}

TEST_CASE("per-step sums equal the accumulated counts exactly") {
    Rng rng(30);
    SpikeTrain train;
    train.T = 40;
    train.data = Tensor({40, 17});
    for (int64_t i = 0; i < train.data.size(); ++i) train.data[i] = rng.bernoulli(0.3f) ? 1.0f : 0.0f;
    Tensor counts = accumulate_head_input(train);
    for (int j = 0; j < 17; ++j) {
        float manual = 0.0f;
        for (int t = 0; t < 40; ++t) manual += train.data[t * 17 + j];
        CHECK(counts[j] == manual);
    }
}
