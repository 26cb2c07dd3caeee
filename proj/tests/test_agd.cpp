#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snnwb/agd.hpp"
#include "snnwb/data.hpp"
#include "snnwb/errors.hpp"
#include "test_util.hpp"

using namespace snnwb;

namespace {

Network build_from(const std::string& doc, uint64_t seed, float threshold = 1.0f) {
    Rng rng(seed);
    return Network::build(parse_topology(doc), rng, threshold);
}

const char* kTinySpiking = R"({
  "input_shape": [1, 4, 4],
  "layers": [
    {"name": "FC1", "kind": "fc", "neuron": "lif", "params": {"in": 16, "out": 12}},
    {"name": "FC2", "kind": "fc", "neuron": "lif", "params": {"in": 12, "out": 12}},
    {"name": "FC3", "kind": "fc", "neuron": "none", "params": {"in": 12, "out": 3}}
  ]
})";

const char* kHybrid = R"({
  "input_shape": [1, 4, 4],
  "layers": [
    {"name": "Conv1", "kind": "conv", "neuron": "relu", "params": {"in": 1, "out": 3, "k": 3, "pad": 1}},
    {"name": "FC1", "kind": "fc", "neuron": "lif", "params": {"in": 48, "out": 8}},
    {"name": "FC2", "kind": "fc", "neuron": "none", "params": {"in": 8, "out": 3}}
  ]
})";

}  // namespace

TEST_CASE("unreachable thresholds silence the whole run") {
    Network net = build_from(kTinySpiking, 1, 1e30f);
    TemporalOptions opts;
    opts.T = 1;
    opts.encode_seed = 7;
    TemporalEngine engine(net, opts);
    Tensor image = Tensor::full({1, 4, 4}, 1.0f);
    TemporalResult r = engine.run(image);
    for (int64_t i = 0; i < r.counts.size(); ++i) CHECK(r.counts[i] == 0.0f);
}

TEST_CASE("a unit-weight integrator fed at full rate fires every step") {
    const char* doc = R"({
      "input_shape": [1, 1, 1],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "if", "params": {"in": 1, "out": 1}},
        {"name": "FC2", "kind": "fc", "neuron": "none", "params": {"in": 1, "out": 2}}
      ]
    })";
    Network net = build_from(doc, 2);
    net.weights[0][0] = 1.0f;
    TemporalOptions opts;
    opts.T = 5;
    opts.encode_seed = 3;
    TemporalEngine engine(net, opts);
    TemporalResult r = engine.run(Tensor::full({1, 1, 1}, 1.0f));
    CHECK(r.counts[0] == 5.0f);
}

TEST_CASE("zero suffix weights mean zero currents and zero spikes") {
    Network net = build_from(kHybrid, 3);
    net.weights[1].fill(0.0f);  // the spiking layer's weights
    TemporalOptions opts;
    opts.T = 10;
    opts.encode_seed = 5;
    TemporalEngine engine(net, opts);
    TemporalResult r = engine.run(Tensor::full({1, 4, 4}, 0.8f));
    for (int64_t i = 0; i < r.counts.size(); ++i) CHECK(r.counts[i] == 0.0f);
}

TEST_CASE("zero loss gradient produces zero weight gradients") {
    Network net = build_from(kTinySpiking, 4);
    TemporalOptions opts;
    opts.T = 6;
    opts.encode_seed = 9;
    TemporalEngine engine(net, opts);
    Tape tape;
    engine.run(Tensor::full({1, 4, 4}, 0.7f), &tape);
    GradBuffers grads;
    grads.init(net);
    engine.backward(tape, Tensor::zeros({3}), grads);
    for (const auto& inv : grads.by_invocation)
        for (double g : inv) CHECK(g == 0.0);
}

TEST_CASE("with zero damping the surrogate is the only path through the spike") {
    Network net = build_from(kTinySpiking, 5, 0.3f);  // low thresholds so spikes reach the head
    AgdConfig cfg;
    cfg.T = 8;
    cfg.gamma = 0.0f;
    GradBuffers grads;
    grads.init(net);
    Dataset ds = synth_rate_patterns(3, 1, 50);
    agd_sample_grad(net, ds.image(0), ds.labels[0], cfg, 123, grads);

    // Spiking layers and everything upstream get exactly zero; the head,
    // which reads accumulated counts directly, does not.
    auto by_layer = grads.reduce(net);
    for (size_t li = 0; li + 1 < net.spec.layers.size(); ++li)
        for (double g : by_layer[li]) CHECK(g == 0.0);
    double head_mag = 0.0;
    for (double g : by_layer.back()) head_mag += std::fabs(g);
    CHECK(head_mag > 0.0);
}

TEST_CASE("tied-block gradients equal the sum of the untied twin's copies bit for bit") {
    const char* tied_doc = R"({
      "input_shape": [1, 4, 4],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "lif", "params": {"in": 16, "out": 10}},
        {"name": "FC2", "kind": "fc", "neuron": "lif", "params": {"in": 10, "out": 10}},
        {"name": "FC3", "kind": "fc", "neuron": "none", "params": {"in": 10, "out": 3}}
      ],
      "backres": [{"members": ["FC2"], "n": 2}]
    })";
    const char* untied_doc = R"({
      "input_shape": [1, 4, 4],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "lif", "params": {"in": 16, "out": 10}},
        {"name": "FC2a", "kind": "fc", "neuron": "lif", "params": {"in": 10, "out": 10}},
        {"name": "FC2b", "kind": "fc", "neuron": "lif", "params": {"in": 10, "out": 10}},
        {"name": "FC3", "kind": "fc", "neuron": "none", "params": {"in": 10, "out": 3}}
      ]
    })";
    Network tied = build_from(tied_doc, 7);
    Network untied = Network::shell(parse_topology(untied_doc));
    untied.weights[0] = tied.weights[0];
    untied.weights[1] = tied.weights[1];
    untied.weights[2] = tied.weights[1];
    untied.weights[3] = tied.weights[2];

    Dataset ds = synth_rate_patterns(3, 4, 99);
    AgdConfig cfg;
    cfg.T = 7;

    for (int s = 0; s < ds.size(); ++s) {
        GradBuffers g_tied, g_untied;
        g_tied.init(tied);
        g_untied.init(untied);
        auto a = agd_sample_grad(tied, ds.image(s), ds.labels[s], cfg, 1000 + s, g_tied);
        auto b = agd_sample_grad(untied, ds.image(s), ds.labels[s], cfg, 1000 + s, g_untied);
        CHECK(a.loss == b.loss);  // forward paths are identical arithmetic

        auto tied_layers = g_tied.reduce(tied);
        auto untied_layers = g_untied.reduce(untied);
        // Shared layer: tied sum equals copy A plus copy B, added in the same
        // order the reduction uses.
        for (size_t j = 0; j < tied_layers[1].size(); ++j)
            CHECK(tied_layers[1][j] == untied_layers[1][j] + untied_layers[2][j]);
        for (size_t j = 0; j < tied_layers[0].size(); ++j) CHECK(tied_layers[0][j] == untied_layers[0][j]);
        for (size_t j = 0; j < tied_layers[2].size(); ++j) CHECK(tied_layers[2][j] == untied_layers[3][j]);
    }
}

TEST_CASE("analog-mode sample gradients match finite differences") {
    const char* doc = R"({
      "input_shape": [1, 4, 4],
      "layers": [
        {"name": "Conv1", "kind": "conv", "neuron": "relu", "params": {"in": 1, "out": 3, "k": 3, "pad": 1}},
        {"name": "FC1", "kind": "fc", "neuron": "relu", "params": {"in": 48, "out": 6}},
        {"name": "FC2", "kind": "fc", "neuron": "none", "params": {"in": 6, "out": 3}}
      ]
    })";
    Network net = build_from(doc, 8);
    Dataset ds = synth_blobs(3, 3, 44, 4, 4);
    AgdConfig cfg;

    for (int s = 0; s < ds.size(); ++s) {
        GradBuffers grads;
        grads.init(net);
        agd_sample_grad(net, ds.image(s), ds.labels[s], cfg, 5, grads);
        auto by_layer = grads.reduce(net);
        for (size_t li = 0; li < net.spec.layers.size(); ++li) {
            if (by_layer[li].empty()) continue;
            std::vector<float> analytic(by_layer[li].size());
            for (size_t j = 0; j < analytic.size(); ++j) analytic[j] = static_cast<float>(by_layer[li][j]);
            Network probe = net;
            auto run = [&](const std::vector<float>& w, uint64_t* sig) {
                for (size_t j = 0; j < w.size(); ++j) probe.weights[li][static_cast<int64_t>(j)] = w[j];
                AnnTrace t;
                Tensor logits = ann_forward(probe, ds.image(s), &t);
                if (sig) {
                    uint64_t h = 0xcbf29ce484222325ULL;
                    for (const auto& cur : t.currents)
                        for (int64_t j = 0; j < cur.size(); ++j) {
                            h ^= cur[j] > 0.0f ? 0x9eu : 0x31u;
                            h *= 0x100000001b3ULL;
                        }
                    *sig = h;
                }
                return softmax_loss(logits, ds.labels[s]).loss;
            };
            auto f = [&](const std::vector<float>& w) { return run(w, nullptr); };
            auto region = [&](const std::vector<float>& w) {
                uint64_t sig = 0;
                run(w, &sig);
                return sig;
            };
            CHECK(testutil::check_gradient_masked(f, region, net.weights[li].vec(), analytic, 1e-3, 1e-3).ok);
        }
    }
}

TEST_CASE("the analog prefix output never depends on the time window") {
    Network net = build_from(kHybrid, 9);
    Tensor image = Tensor::full({1, 4, 4}, 0.6f);
    Tape t1, t7;
    {
        TemporalOptions opts;
        opts.T = 1;
        opts.encode_seed = 1;
        TemporalEngine e(net, opts);
        e.run(image, &t1);
    }
    {
        TemporalOptions opts;
        opts.T = 7;
        opts.encode_seed = 1;
        TemporalEngine e(net, opts);
        e.run(image, &t7);
    }
    REQUIRE(t1.prefix_out.size() == t7.prefix_out.size());
    for (int64_t i = 0; i < t1.prefix_out.size(); ++i) CHECK(t1.prefix_out[i] == t7.prefix_out[i]);
}

TEST_CASE("an unreachable suffix sends effectively nothing into the prefix") {
    Network net = build_from(kHybrid, 10, 1e30f);
    AgdConfig cfg;
    cfg.T = 5;
    GradBuffers grads;
    grads.init(net);
    Dataset ds = synth_blobs(3, 1, 11, 4, 4);
    agd_sample_grad(net, ds.image(0), ds.labels[0], cfg, 77, grads);
    auto by_layer = grads.reduce(net);
    for (double g : by_layer[0]) CHECK(std::fabs(g) < 1e-12);  // prefix conv
}

TEST_CASE("zero learning rate leaves weights untouched") {
    Network net = build_from(kTinySpiking, 12);
    Network before = net;
    Dataset ds = synth_rate_patterns(3, 12, 13);
    AgdConfig cfg;
    cfg.T = 5;
    cfg.lr = 0.0f;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    train_agd(net, ds, Dataset{}, cfg);
    for (size_t i = 0; i < net.weights.size(); ++i)
        for (int64_t j = 0; j < net.weights[i].size(); ++j) CHECK(net.weights[i][j] == before.weights[i][j]);
}

TEST_CASE("training twice from the same seed is bit-identical") {
    Dataset ds = synth_rate_patterns(3, 24, 14);
    auto run = [&]() {
        Network net = build_from(kTinySpiking, 15);
        AgdConfig cfg;
        cfg.T = 5;
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.lr = 0.03f;
        cfg.seed = 15;
        train_agd(net, ds, Dataset{}, cfg);
        return net;
    };
    Network a = run();
    Network b = run();
    for (size_t i = 0; i < a.weights.size(); ++i)
        for (int64_t j = 0; j < a.weights[i].size(); ++j) CHECK(a.weights[i][j] == b.weights[i][j]);
}

TEST_CASE("a separable rate task trains to near-perfect accuracy") {
    Dataset all = synth_rate_patterns(2, 80, 16);
    auto [train_set, test_set] = split_train_test(all, 0.25, 17);
    const char* doc = R"({
      "input_shape": [1, 4, 4],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "lif", "params": {"in": 16, "out": 10}},
        {"name": "FC2", "kind": "fc", "neuron": "none", "params": {"in": 10, "out": 2}}
      ]
    })";
    Network net = build_from(doc, 18);
    AgdConfig cfg;
    cfg.T = 12;
    cfg.lr = 0.05f;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.seed = 18;
    double last_train_acc = 0.0;
    train_agd(net, train_set, test_set, cfg, [&](const EpochRecord& r) { last_train_acc = r.train_accuracy; });
    CHECK(last_train_acc >= 0.99);
}

TEST_CASE("a hybrid net with a stochastic head trains end to end") {
    const char* doc = R"({
      "input_shape": [1, 6, 6],
      "classifier": "stochmax",
      "layers": [
        {"name": "Conv1", "kind": "conv", "neuron": "relu", "params": {"in": 1, "out": 4, "k": 3, "pad": 1}},
        {"name": "FC1", "kind": "fc", "neuron": "lif", "params": {"in": 144, "out": 16}},
        {"name": "FC2", "kind": "fc", "neuron": "none", "params": {"in": 16, "out": 3}}
      ]
    })";
    Dataset all = synth_blobs(3, 120, 26, 6, 6, 8.0);
    auto [train_set, test_set] = split_train_test(all, 0.25, 27);
    Network net = build_from(doc, 28, 0.5f);
    AgdConfig cfg;
    cfg.T = 10;
    cfg.lr = 0.05f;
    cfg.epochs = 25;
    cfg.batch_size = 16;
    cfg.base_threshold = 0.5f;
    cfg.seed = 28;
    double test_acc = 0.0;
    train_agd(net, train_set, test_set, cfg, [&](const EpochRecord& r) { test_acc = r.test_accuracy; });
    CHECK(test_acc >= 0.9);
    // The retain-probability head moved during training.
    Rng ref_rng(28);
    Network fresh = Network::build(parse_topology(doc), ref_rng, 0.5f);
    bool psi_moved = false;
    for (int64_t j = 0; j < net.stoch.W_psi.size(); ++j)
        if (net.stoch.W_psi[j] != fresh.stoch.W_psi[j]) psi_moved = true;
    CHECK(psi_moved);
}

TEST_CASE("interleaved analog layers after spiking ones are rejected") {
    const char* doc = R"({
      "input_shape": [1, 4, 4],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "lif", "params": {"in": 16, "out": 8}},
        {"name": "FC2", "kind": "fc", "neuron": "relu", "params": {"in": 8, "out": 8}},
        {"name": "FC3", "kind": "fc", "neuron": "lif", "params": {"in": 8, "out": 8}},
        {"name": "FC4", "kind": "fc", "neuron": "none", "params": {"in": 8, "out": 2}}
      ]
    })";
    Network net = build_from(doc, 19);
    TemporalOptions opts;
    opts.T = 3;
    TemporalEngine engine(net, opts);
    CHECK_THROWS_AS(engine.run(Tensor::full({1, 4, 4}, 0.5f)), ConfigError);
}

TEST_CASE("divergence aborts the training run") {
    Dataset ds = synth_rate_patterns(3, 8, 20);
    Network net = build_from(kTinySpiking, 21, 0.3f);
    // Poison the head so the logits blow up while spikes still flow.
    net.weights.back().fill(std::numeric_limits<float>::quiet_NaN());
    AgdConfig cfg;
    cfg.T = 3;
    cfg.epochs = 1;
    CHECK_THROWS_AS(train_agd(net, ds, Dataset{}, cfg), TrainError);
}
