#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "snnwb/agd.hpp"
#include "snnwb/data.hpp"
#include "snnwb/errors.hpp"
#include "test_util.hpp"

using namespace snnwb;

TEST_CASE("IDX images and labels round-trip bit for bit") {
    testutil::TmpDir tmp("idx");
    Dataset ds = synth_blobs(3, 10, 42, 6, 6);
    const std::string img = tmp.str() + "/images-idx3-ubyte";
    const std::string lab = tmp.str() + "/labels-idx1-ubyte";
    write_idx_images(img, ds.images);
    write_idx_labels(lab, ds.labels);

    Dataset loaded = load_idx(img, lab);
    CHECK(loaded.size() == 10);
    CHECK(loaded.labels == ds.labels);

    const std::string img2 = tmp.str() + "/again-idx3-ubyte";
    const std::string lab2 = tmp.str() + "/again-idx1-ubyte";
    write_idx_images(img2, loaded.images);
    write_idx_labels(lab2, loaded.labels);
    CHECK(testutil::read_bytes(img) == testutil::read_bytes(img2));
    CHECK(testutil::read_bytes(lab) == testutil::read_bytes(lab2));
}

TEST_CASE("IDX loads reject bad magic and truncation") {
    testutil::TmpDir tmp("idxbad");
    const std::string img = tmp.str() + "/img";
    const std::string lab = tmp.str() + "/lab";
    {
        std::ofstream f(img, std::ios::binary);
        const unsigned char magic[] = {0, 0, 8, 9, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
        f.write(reinterpret_cast<const char*>(magic), sizeof magic);
    }
    CHECK_THROWS_WITH_AS(load_idx(img, lab), doctest::Contains("magic"), IoError);
    {
        std::ofstream f(img, std::ios::binary | std::ios::trunc);
        const unsigned char hdr[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
        f.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
        const unsigned char few[] = {1, 2, 3};  // needs 8 pixels
        f.write(reinterpret_cast<const char*>(few), sizeof few);
    }
    CHECK_THROWS_WITH_AS(load_idx(img, lab), doctest::Contains("truncated"), IoError);
    CHECK_THROWS_AS(load_idx(tmp.str() + "/missing", lab), IoError);
}

TEST_CASE("CIFAR-style batches are 3073-byte records with small labels") {
    testutil::TmpDir tmp("cifar");
    Dataset ds;
    ds.class_count = 10;
    Rng rng(3);
    ds.images = testutil::random_tensor({4, 3, 32, 32}, rng, 0.0f, 1.0f);
    ds.labels = {0, 3, 9, 5};
    const std::string path = tmp.str() + "/data_batch_1.bin";
    write_cifar10_batch(path, ds);
    CHECK(std::ifstream(path, std::ios::ate | std::ios::binary).tellg() == 4 * 3073);

    Dataset loaded = load_cifar10_file(path);
    CHECK(loaded.size() == 4);
    CHECK(loaded.labels == ds.labels);
    // Quantization to bytes round-trips exactly on a second pass.
    const std::string again = tmp.str() + "/again.bin";
    write_cifar10_batch(again, loaded);
    CHECK(testutil::read_bytes(path) == testutil::read_bytes(again));

    {
        std::ofstream f(path, std::ios::binary | std::ios::app);
        f.put('x');  // no longer a whole number of records
    }
    CHECK_THROWS_WITH_AS(load_cifar10_file(path), doctest::Contains("3073"), IoError);

    const std::string badlab = tmp.str() + "/bad.bin";
    {
        std::ofstream f(badlab, std::ios::binary);
        std::vector<char> rec(3073, 0);
        rec[0] = 11;  // label out of range
        f.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
    CHECK_THROWS_WITH_AS(load_cifar10_file(badlab), doctest::Contains("label"), IoError);
}

TEST_CASE("synthetic sets are deterministic and bounded") {
    Dataset a = synth_blobs(4, 20, 9);
    Dataset b = synth_blobs(4, 20, 9);
    for (int64_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);
    CHECK(a.labels == b.labels);
    for (int64_t i = 0; i < a.images.size(); ++i) {
        CHECK(a.images[i] >= 0.0f);
        CHECK(a.images[i] <= 1.0f);
    }
    Dataset empty = synth_blobs(2, 0, 1);
    CHECK(empty.size() == 0);
    CHECK_THROWS_AS(synth_blobs(1, 5, 1), ConfigError);
}

TEST_CASE("well-separated blobs train a linear probe to full accuracy") {
    Dataset ds = synth_blobs(3, 90, 17, 6, 6, 10.0);
    const char* doc = R"({
      "input_shape": [1, 6, 6],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "none", "params": {"in": 36, "out": 3}}
      ]
    })";
    Rng rng(18);
    Network probe = Network::build(parse_topology(doc), rng);
    AgdConfig cfg;
    cfg.epochs = 40;
    cfg.lr = 0.2f;
    cfg.batch_size = 16;
    cfg.seed = 18;
    train_agd(probe, ds, Dataset{}, cfg);
    EvalOptions eopts;
    CHECK(evaluate(probe, ds, eopts).accuracy == doctest::Approx(1.0));
}

TEST_CASE("splits are deterministic permutations") {
    Dataset ds = synth_rate_patterns(3, 40, 5);
    auto [tr1, te1] = split_train_test(ds, 0.25, 77);
    auto [tr2, te2] = split_train_test(ds, 0.25, 77);
    CHECK(tr1.labels == tr2.labels);
    CHECK(te1.labels == te2.labels);
    CHECK(tr1.size() == 30);
    CHECK(te1.size() == 10);
    auto [tr3, te3] = split_train_test(ds, 0.25, 78);
    CHECK(tr3.labels != tr1.labels);  // different seed, different permutation
    // Same multiset of labels overall.
    std::vector<int> all1 = tr1.labels;
    all1.insert(all1.end(), te1.labels.begin(), te1.labels.end());
    std::sort(all1.begin(), all1.end());
    std::vector<int> orig = ds.labels;
    std::sort(orig.begin(), orig.end());
    CHECK(all1 == orig);
}

TEST_CASE("checkpoints reproduce forward outputs bit for bit") {
    testutil::TmpDir tmp("ckpt");
    const char* doc = R"({
      "input_shape": [1, 4, 4],
      "layers": [
        {"name": "Conv1", "kind": "conv", "neuron": "relu", "params": {"in": 1, "out": 3, "k": 3, "pad": 1}},
        {"name": "FC1", "kind": "fc", "neuron": "none", "params": {"in": 48, "out": 3}}
      ]
    })";
    Rng rng(21);
    Network net = Network::build(parse_topology(doc), rng);
    save_checkpoint(net, tmp.str() + "/ck", R"({"mode":"ann"})");
    Network loaded = load_checkpoint(tmp.str() + "/ck");

    Dataset ds = synth_blobs(3, 3, 22, 4, 4);
    for (int i = 0; i < ds.size(); ++i) {
        Tensor a = ann_forward(net, ds.image(i));
        Tensor b = ann_forward(loaded, ds.image(i));
        for (int64_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
    }
    CHECK(checkpoint_trainer_info(tmp.str() + "/ck").find("ann") != std::string::npos);
}

TEST_CASE("tampered weight blobs fail the load") {
    testutil::TmpDir tmp("tamper");
    const char* doc = R"({
      "input_shape": [1, 2, 2],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "none", "params": {"in": 4, "out": 2}}
      ]
    })";
    Rng rng(23);
    Network net = Network::build(parse_topology(doc), rng);
    save_checkpoint(net, tmp.str() + "/ck");
    {
        std::ofstream f(tmp.str() + "/ck/layer_FC1.f32", std::ios::binary | std::ios::app);
        f.put('\0');
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.str() + "/ck"), doctest::Contains("bytes"), IoError);
}

TEST_CASE("per-step thresholds survive the checkpoint round trip") {
    testutil::TmpDir tmp("thr");
    const char* doc = R"({
      "input_shape": [1, 2, 2],
      "layers": [
        {"name": "Conv1", "kind": "conv", "neuron": "relu", "params": {"in": 1, "out": 1, "k": 1}},
        {"name": "FC1", "kind": "fc", "neuron": "none", "params": {"in": 4, "out": 2}}
      ],
      "backres": [{"members": ["Conv1"], "n": 3}]
    })";
    Rng rng(24);
    Network net = Network::build(parse_topology(doc), rng);
    net.thresholds[0] = {0.4f, 0.9f, 1.7f};
    save_checkpoint(net, tmp.str() + "/ck", R"({"mode":"converted"})");
    Network loaded = load_checkpoint(tmp.str() + "/ck");
    CHECK(loaded.thresholds[0] == std::vector<float>{0.4f, 0.9f, 1.7f});
}

TEST_CASE("checkpoints refuse documents whose hash was altered") {
    testutil::TmpDir tmp("hash");
    const char* doc = R"({
      "input_shape": [1, 2, 2],
      "layers": [
        {"name": "FC1", "kind": "fc", "neuron": "none", "params": {"in": 4, "out": 2}}
      ]
    })";
    Rng rng(25);
    Network net = Network::build(parse_topology(doc), rng);
    save_checkpoint(net, tmp.str() + "/ck");
    // Corrupt the embedded topology (a JSON-escaped string) without updating
    // the hash.
    std::ifstream in(tmp.str() + "/ck/manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "\\\"in\\\": 4";
    const auto pos = text.find(needle);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, needle.size(), "\\\"in\\\": 8");
    std::ofstream out(tmp.str() + "/ck/manifest.json", std::ios::trunc);
    out << text;
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.str() + "/ck"), doctest::Contains("hash"), IoError);
}

TEST_CASE("rate patterns occupy disjoint hot blocks per class") {
    Dataset ds = synth_rate_patterns(4, 40, 31);
    for (int i = 0; i < ds.size(); ++i) {
        const Tensor img = ds.image(i);
        const int k = ds.labels[static_cast<size_t>(i)];
        const int64_t block = img.size() / 4;
        double hot = 0.0, cold = 0.0;
        for (int64_t j = 0; j < img.size(); ++j) {
            const bool in_block = j >= k * block && j < (k + 1) * block;
            (in_block ? hot : cold) += img[j];
        }
        CHECK(hot / block > 3.0 * (cold / (img.size() - block)));
    }
}
