#include "snnwb/data.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "snnwb/errors.hpp"
#include "snnwb/rng.hpp"

namespace snnwb {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> Dataset::image_shape() const {
    return {images.dim(1), images.dim(2), images.dim(3)};
}

Tensor Dataset::image(int i) const {
    const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
    const int64_t plane = static_cast<int64_t>(C) * H * W;
    Tensor out({C, H, W});
    std::memcpy(out.data(), images.data() + static_cast<size_t>(i) * plane,
                sizeof(float) * static_cast<size_t>(plane));
    return out;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
    const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
    const int64_t plane = static_cast<int64_t>(C) * H * W;
    Dataset out;
    out.class_count = class_count;
    out.images = Tensor({static_cast<int>(indices.size()), C, H, W});
    out.labels.reserve(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        std::memcpy(out.images.data() + static_cast<size_t>(i) * plane,
                    images.data() + static_cast<size_t>(indices[i]) * plane, sizeof(float) * static_cast<size_t>(plane));
        out.labels.push_back(labels[static_cast<size_t>(indices[i])]);
    }
    return out;
}

Dataset Dataset::take(int n) const {
    if (n >= size()) return *this;
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    return subset(idx);
}

// ---- IDX ----------------------------------------------------------------------

namespace {

uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated IDX file '" + path + "'");
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open IDX image file '" + images_path + "'");
    const uint32_t magic = read_be32(img, images_path);
    if (magic != 0x00000803u)
        throw IoError("bad IDX image magic in '" + images_path + "': expected 0x803, got 0x" +
                      [&] { char buf[16]; std::snprintf(buf, sizeof buf, "%x", magic); return std::string(buf); }());
    const uint32_t n = read_be32(img, images_path);
    const uint32_t h = read_be32(img, images_path);
    const uint32_t w = read_be32(img, images_path);
    std::vector<unsigned char> pixels(static_cast<size_t>(n) * h * w);
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (static_cast<size_t>(img.gcount()) != pixels.size())
        throw IoError("truncated IDX image file '" + images_path + "'");

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open IDX label file '" + labels_path + "'");
    const uint32_t lmagic = read_be32(lab, labels_path);
    if (lmagic != 0x00000801u) throw IoError("bad IDX label magic in '" + labels_path + "'");
    const uint32_t ln = read_be32(lab, labels_path);
    if (ln != n)
        throw IoError("IDX image/label count mismatch: " + std::to_string(n) + " images vs " + std::to_string(ln) +
                      " labels");
    std::vector<unsigned char> raw(static_cast<size_t>(ln));
    lab.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(lab.gcount()) != raw.size()) throw IoError("truncated IDX label file '" + labels_path + "'");

    Dataset ds;
    ds.images = Tensor({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)});
    float* out = ds.images.data();
    for (size_t i = 0; i < pixels.size(); ++i) out[i] = static_cast<float>(pixels[i]) / 255.0f;
    ds.labels.reserve(raw.size());
    int max_label = 0;
    for (unsigned char l : raw) {
        ds.labels.push_back(l);
        max_label = std::max(max_label, static_cast<int>(l));
    }
    ds.class_count = max_label + 1;
    for (int l : ds.labels)
        if (l < 0 || l >= ds.class_count) throw IoError("IDX label out of range in '" + labels_path + "'");
    return ds;
}

void write_idx_images(const std::string& path, const Tensor& images) {
    const int rank = images.rank();
    if (rank != 3 && !(rank == 4 && images.dim(1) == 1))
        throw ConfigError("IDX images must be [N,H,W] or [N,1,H,W]");
    const int n = images.dim(0);
    const int h = rank == 3 ? images.dim(1) : images.dim(2);
    const int w = rank == 3 ? images.dim(2) : images.dim(3);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write IDX file '" + path + "'");
    write_be32(out, 0x00000803u);
    write_be32(out, static_cast<uint32_t>(n));
    write_be32(out, static_cast<uint32_t>(h));
    write_be32(out, static_cast<uint32_t>(w));
    const float* p = images.data();
    for (int64_t i = 0; i < images.size(); ++i) {
        const int v = static_cast<int>(std::lround(p[i] * 255.0f));
        const unsigned char b = static_cast<unsigned char>(std::min(255, std::max(0, v)));
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write IDX file '" + path + "'");
    write_be32(out, 0x00000801u);
    write_be32(out, static_cast<uint32_t>(labels.size()));
    for (int l : labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

// ---- CIFAR-10 -------------------------------------------------------------------

Dataset load_cifar10_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open CIFAR-10 batch '" + path + "'");
    in.seekg(0, std::ios::end);
    const std::streamoff bytes = in.tellg();
    in.seekg(0);
    constexpr std::streamoff kRecord = 3073;
    if (bytes <= 0 || bytes % kRecord != 0)
        throw IoError("CIFAR-10 batch '" + path + "' has " + std::to_string(bytes) +
                      " bytes, not a multiple of 3073-byte records");
    const int n = static_cast<int>(bytes / kRecord);
    Dataset ds;
    ds.class_count = 10;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(static_cast<size_t>(n));
    std::vector<unsigned char> rec(static_cast<size_t>(kRecord));
    float* out = ds.images.data();
    for (int i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(rec.data()), kRecord);
        if (!in) throw IoError("truncated CIFAR-10 batch '" + path + "'");
        if (rec[0] > 9) throw IoError("CIFAR-10 label " + std::to_string(rec[0]) + " out of range in '" + path + "'");
        ds.labels[static_cast<size_t>(i)] = rec[0];
        for (int j = 0; j < 3072; ++j)
            out[static_cast<size_t>(i) * 3072 + j] = static_cast<float>(rec[static_cast<size_t>(j) + 1]) / 255.0f;
    }
    return ds;
}

std::pair<Dataset, Dataset> load_cifar10_binary(const std::string& dir) {
    Dataset train;
    for (int b = 1; b <= 5; ++b) {
        const std::string path = dir + "/data_batch_" + std::to_string(b) + ".bin";
        Dataset batch = load_cifar10_file(path);
        if (train.size() == 0) {
            train = std::move(batch);
        } else {
            const int64_t plane = 3 * 32 * 32;
            Tensor merged({train.size() + batch.size(), 3, 32, 32});
            std::memcpy(merged.data(), train.images.data(),
                        sizeof(float) * static_cast<size_t>(train.size()) * plane);
            std::memcpy(merged.data() + static_cast<size_t>(train.size()) * plane, batch.images.data(),
                        sizeof(float) * static_cast<size_t>(batch.size()) * plane);
            train.images = std::move(merged);
            train.labels.insert(train.labels.end(), batch.labels.begin(), batch.labels.end());
        }
    }
    Dataset test = load_cifar10_file(dir + "/test_batch.bin");
    return {std::move(train), std::move(test)};
}

void write_cifar10_batch(const std::string& path, const Dataset& ds) {
    if (ds.images.dim(1) != 3 || ds.images.dim(2) != 32 || ds.images.dim(3) != 32)
        throw ConfigError("CIFAR-10 batches must hold [N,3,32,32] images");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write CIFAR-10 batch '" + path + "'");
    const float* p = ds.images.data();
    for (int i = 0; i < ds.size(); ++i) {
        const unsigned char label = static_cast<unsigned char>(ds.labels[static_cast<size_t>(i)]);
        out.write(reinterpret_cast<const char*>(&label), 1);
        for (int j = 0; j < 3072; ++j) {
            const int v = static_cast<int>(std::lround(p[static_cast<size_t>(i) * 3072 + j] * 255.0f));
            const unsigned char b = static_cast<unsigned char>(std::min(255, std::max(0, v)));
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
}

// ---- Synthetic fixtures ----------------------------------------------------------

Dataset synth_blobs(int K, int N, uint64_t seed, int H, int W, double separation) {
    if (K < 2) throw ConfigError("synthetic blobs need at least 2 classes");
    Dataset ds;
    ds.class_count = K;
    if (N <= 0) return ds;  // empty set is valid
    ds.images = Tensor({N, 1, H, W});

    // Class prototypes: bright Gaussian bumps at spread-out centers.
    const double sigma = 0.18 * std::min(H, W);
    std::vector<std::pair<double, double>> centers;
    for (int k = 0; k < K; ++k) {
        const double ang = 2.0 * 3.14159265358979323846 * k / K;
        centers.push_back({0.5 * H + 0.30 * H * std::sin(ang), 0.5 * W + 0.30 * W * std::cos(ang)});
    }
    const double noise = 1.0 / std::max(separation, 1e-6);

    Rng rng(seed);
    ds.labels.resize(static_cast<size_t>(N));
    float* out = ds.images.data();
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int i = 0; i < N; ++i) {
        const int k = static_cast<int>(rng.below(static_cast<uint64_t>(K)));
        ds.labels[static_cast<size_t>(i)] = k;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double dy = y - centers[static_cast<size_t>(k)].first;
                const double dx = x - centers[static_cast<size_t>(k)].second;
                double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                v += noise * static_cast<double>(rng.normal());
                v = std::min(1.0, std::max(0.0, v));
                out[static_cast<size_t>(i) * plane + y * W + x] = static_cast<float>(v);
            }
    }
    return ds;
}

Dataset synth_rate_patterns(int K, int N, uint64_t seed, int H, int W) {
    if (K < 2) throw ConfigError("synthetic rate patterns need at least 2 classes");
    Dataset ds;
    ds.class_count = K;
    if (N <= 0) return ds;  // empty set is valid
    ds.images = Tensor({N, 1, H, W});

    // Each class owns a contiguous block of pixels that fire at a high rate;
    // everything else stays near-silent.
    const int64_t plane = static_cast<int64_t>(H) * W;
    const int64_t block = std::max<int64_t>(1, plane / K);
    Rng rng(seed);
    ds.labels.resize(static_cast<size_t>(N));
    float* out = ds.images.data();
    for (int i = 0; i < N; ++i) {
        const int k = static_cast<int>(rng.below(static_cast<uint64_t>(K)));
        ds.labels[static_cast<size_t>(i)] = k;
        const int64_t lo = k * block;
        const int64_t hi = (k == K - 1) ? plane : lo + block;
        for (int64_t j = 0; j < plane; ++j) {
            const bool hot = j >= lo && j < hi;
            double v = (hot ? 0.8 : 0.05) + 0.05 * static_cast<double>(rng.normal());
            v = std::min(1.0, std::max(0.0, v));
            out[static_cast<size_t>(i) * plane + j] = static_cast<float>(v);
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction, uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in [0,1)");
    std::vector<int> order(static_cast<size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.below(i))]);
    const int test_n = static_cast<int>(std::lround(test_fraction * ds.size()));
    std::vector<int> test_idx(order.begin(), order.begin() + test_n);
    std::vector<int> train_idx(order.begin() + test_n, order.end());
    return {ds.subset(train_idx), ds.subset(test_idx)};
}

// ---- Checkpoints ------------------------------------------------------------------

namespace {

void write_f32_blob(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write blob '" + path + "'");
    const float* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) {
        uint32_t bits;
        std::memcpy(&bits, &p[i], 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
        out.write(reinterpret_cast<char*>(b), 4);
    }
}

void read_f32_blob(const std::string& path, Tensor& t) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing weight blob '" + path + "'");
    in.seekg(0, std::ios::end);
    const std::streamoff bytes = in.tellg();
    in.seekg(0);
    if (bytes != static_cast<std::streamoff>(t.size()) * 4)
        throw IoError("weight blob '" + path + "' holds " + std::to_string(bytes) + " bytes, expected " +
                      std::to_string(t.size() * 4));
    std::vector<unsigned char> raw(static_cast<size_t>(bytes));
    in.read(reinterpret_cast<char*>(raw.data()), bytes);
    if (static_cast<std::streamoff>(in.gcount()) != bytes) throw IoError("truncated weight blob '" + path + "'");
    float* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) {
        const size_t o = static_cast<size_t>(i) * 4;
        uint32_t bits = static_cast<uint32_t>(raw[o]) | (static_cast<uint32_t>(raw[o + 1]) << 8) |
                        (static_cast<uint32_t>(raw[o + 2]) << 16) | (static_cast<uint32_t>(raw[o + 3]) << 24);
        std::memcpy(&p[i], &bits, 4);
    }
}

std::string hash_hex(uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& dir, const std::string& trainer_json) {
    const std::string topo_text = net.spec.source_text.empty() ? topology_to_json(net.spec) : net.spec.source_text;

    json manifest;
    manifest["format"] = 1;
    manifest["topology"] = topo_text;
    manifest["topology_hash"] = hash_hex(fnv1a64(topo_text));
    try {
        manifest["trainer"] = json::parse(trainer_json);
    } catch (const json::exception&) {
        manifest["trainer"] = json::object();
    }
    manifest["layers"] = json::array();
    for (size_t i = 0; i < net.spec.layers.size(); ++i) {
        const auto& l = net.spec.layers[i];
        if (!l.weighted()) continue;
        json jl;
        jl["name"] = l.name;
        jl["shape"] = net.weights[i].shape();
        jl["blob"] = "layer_" + l.name + ".f32";
        jl["thresholds"] = net.thresholds[i];
        manifest["layers"].push_back(jl);
    }
    if (net.spec.classifier == ClassifierKind::Stochmax) {
        manifest["stochmax"] = {{"w_blob", "stochmax_w.f32"},
                                {"b_blob", "stochmax_b.f32"},
                                {"epsilon", net.stoch.epsilon},
                                {"classes", net.stoch.classes()},
                                {"features", net.stoch.feature_len()}};
    }

    // Write into a temp directory, then swap it into place.
    const fs::path target(dir);
    const fs::path tmp = target.string() + ".tmp-" + std::to_string(::getpid());
    std::error_code ec;
    fs::remove_all(tmp, ec);
    fs::create_directories(tmp);
    for (size_t i = 0; i < net.spec.layers.size(); ++i) {
        const auto& l = net.spec.layers[i];
        if (!l.weighted()) continue;
        write_f32_blob((tmp / ("layer_" + l.name + ".f32")).string(), net.weights[i]);
    }
    if (net.spec.classifier == ClassifierKind::Stochmax) {
        write_f32_blob((tmp / "stochmax_w.f32").string(), net.stoch.W_psi);
        write_f32_blob((tmp / "stochmax_b.f32").string(), net.stoch.b_psi);
    }
    {
        std::ofstream out(tmp / "manifest.json", std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint manifest under '" + dir + "'");
        out << manifest.dump(2) << "\n";
    }
    fs::remove_all(target, ec);
    fs::create_directories(target.parent_path().empty() ? fs::path(".") : target.parent_path());
    fs::rename(tmp, target);
}

Network load_checkpoint(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream in(root / "manifest.json");
    if (!in) throw IoError("checkpoint '" + dir + "' has no manifest.json");
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("checkpoint manifest in '" + dir + "' is not valid JSON: " + e.what());
    }
    if (!manifest.contains("topology")) throw IoError("checkpoint manifest lacks the topology document");
    const std::string topo_text = manifest["topology"].get<std::string>();
    const std::string stored_hash = manifest.value("topology_hash", "");
    if (!stored_hash.empty() && stored_hash != hash_hex(fnv1a64(topo_text)))
        throw IoError("checkpoint topology hash mismatch in '" + dir + "'");

    TopologySpec spec = parse_topology(topo_text);
    Network net = Network::shell(spec);
    for (const auto& jl : manifest.value("layers", json::array())) {
        const std::string name = jl.value("name", "");
        const int idx = spec.layer_index(name);
        if (idx < 0) throw IoError("checkpoint references unknown layer '" + name + "'");
        read_f32_blob((root / jl.value("blob", "")).string(), net.weights[static_cast<size_t>(idx)]);
        if (jl.contains("thresholds")) {
            const auto thr = jl["thresholds"].get<std::vector<float>>();
            if (thr.size() != net.thresholds[static_cast<size_t>(idx)].size())
                throw IoError("checkpoint thresholds for '" + name + "' have wrong arity");
            net.thresholds[static_cast<size_t>(idx)] = thr;
        }
    }
    if (manifest.contains("stochmax")) {
        net.stoch.epsilon = manifest["stochmax"].value("epsilon", 1e-8);
        read_f32_blob((root / manifest["stochmax"].value("w_blob", "stochmax_w.f32")).string(), net.stoch.W_psi);
        read_f32_blob((root / manifest["stochmax"].value("b_blob", "stochmax_b.f32")).string(), net.stoch.b_psi);
    }
    return net;
}

std::string checkpoint_trainer_info(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("checkpoint '" + dir + "' has no manifest.json");
    json manifest = json::parse(in);
    return manifest.value("trainer", json::object()).dump();
}

}  // namespace snnwb
