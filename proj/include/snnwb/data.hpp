#pragma once

#include <string>
#include <utility>
#include <vector>

#include "snnwb/network.hpp"
#include "snnwb/tensor.hpp"

namespace snnwb {

// Labeled image set; images are [N,C,H,W] with values in [0,1].
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int class_count = 0;

    int size() const { return static_cast<int>(labels.size()); }
    std::vector<int> image_shape() const;
    Tensor image(int i) const;
    Dataset subset(const std::vector<int>& indices) const;
    Dataset take(int n) const;
};

// IDX format (big-endian dims, magic-typed). load_idx expects the standard
// image/label file pair.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx_images(const std::string& path, const Tensor& images);  // [N,H,W] or [N,1,H,W]
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

// CIFAR-10 binary batches (3073-byte records: label byte + 3072 pixel bytes).
// Directory layout: data_batch_1..5.bin for training, test_batch.bin for test.
std::pair<Dataset, Dataset> load_cifar10_binary(const std::string& dir);
Dataset load_cifar10_file(const std::string& path);
void write_cifar10_batch(const std::string& path, const Dataset& ds);

// Gaussian-blob class images, linearly separable by construction; separation
// scales class distance against noise.
Dataset synth_blobs(int K, int N, uint64_t seed, int H = 8, int W = 8, double separation = 6.0);

// Class-distinct firing-rate patterns (high-rate support blocks per class).
Dataset synth_rate_patterns(int K, int N, uint64_t seed, int H = 4, int W = 4);

// Deterministic permutation split.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction, uint64_t seed);

// ---- Checkpoints -------------------------------------------------------------
// Directory with manifest.json plus one little-endian float32 blob per
// weighted layer. The manifest embeds the topology document verbatim so a
// checkpoint is self-describing; loads into a different topology are refused
// by hash.

void save_checkpoint(const Network& net, const std::string& dir, const std::string& trainer_json = "{}");
Network load_checkpoint(const std::string& dir);
std::string checkpoint_trainer_info(const std::string& dir);  // trainer provenance JSON text

}  // namespace snnwb
