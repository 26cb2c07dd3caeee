#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "snnwb/agd.hpp"
#include "snnwb/data.hpp"
#include "snnwb/network.hpp"

namespace snnwb {

// Layerwise unsupervised plasticity for the convolutional feature stack:
// nearest causal pre/post pairing, exponential-minus-offset magnitude,
// mini-batch averaging of the shared-kernel updates, homeostatic per-neuron
// threshold adaptation, and per-presentation dropout of whole output maps.
struct StdpConfig {
    double eta = 0.002;
    double tau = 0.0;  // time constant in steps; <= 0 selects T/5
    double offset = 0.4;
    int T = 100;
    int batch_size = 8;
    int epochs = 1;
    double adapt_delta = 0.05;   // threshold increment per post spike
    double adapt_decay = 0.01;   // per-step relaxation fraction toward base
    double dropout_p = 0.5;
    float w_min = 0.0f;
    float w_max = 1.0f;
    int refractory = 1;
    float alpha = 0.95f;
    float base_threshold = 1.0f;
    float rate_factor = 1.0f;
    uint64_t seed = 1;

    double effective_tau() const { return tau > 0.0 ? tau : static_cast<double>(T) / 5.0; }
    void validate() const;
};

// Pairing magnitude of one causal pre/post pair (t_post >= t_pre).
double stdp_delta(int t_post, int t_pre, const StdpConfig& cfg);
// Lag at which the update changes sign: tau * ln(1/offset).
double stdp_zero_crossing(const StdpConfig& cfg);

// One step of homeostatic relaxation: thresholds move a `decay` fraction of
// their distance back toward the base value, never crossing it.
void relax_thresholds(Tensor& thresholds, float base, double decay);

struct StdpLayerStats {
    int64_t apply_events = 0;     // weight-update applications
    int64_t pairing_events = 0;   // recorded (post spike, kernel position) pairs
    int64_t post_spikes = 0;
    int64_t dead_presentations = 0;  // batches with zero post spikes (warning, not failure)
    double mean_threshold = 0.0;     // mean adaptive threshold at the end of the last presentation
};

// Trains the convolutional layer at `layer_index` (and its repeat group, when
// it leads one) on a batch per call. Upstream layers are frozen; their spike
// trains are regenerated through the same deterministic streams.
class StdpLayerTrainer {
public:
    StdpLayerTrainer(Network& net, int layer_index, const StdpConfig& cfg);

    // One presentation: simulate the batch, average the pairing updates per
    // unroll step, apply them in step order, clip to the weight bounds.
    void present(const Dataset& batch, uint64_t presentation_seed);

    const StdpLayerStats& stats() const { return stats_; }
    int unroll_count() const { return group_n_; }

private:
    Network& net_;
    int layer_;
    int group_n_;
    std::vector<size_t> positions_;  // plan positions of this layer's invocations
    StdpConfig cfg_;
    StdpLayerStats stats_;
};

// Indices of plan positions whose layers are trained layerwise (spiking conv
// layers before the classifier boundary), one entry per unique layer in order.
std::vector<int> stdp_trainable_layers(const Network& net);

// Runs the layerwise loop over every trainable layer.
struct StdpLayerReport {
    std::string layer;
    StdpLayerStats stats;
};
std::vector<StdpLayerReport> train_stdp_features(Network& net, const Dataset& samples, const StdpConfig& cfg);

// Spike-count feature dataset at the classifier boundary (frozen features).
Dataset extract_feature_dataset(const Network& net, const Dataset& ds, const StdpConfig& cfg);

// Fits the in-network classifier tail (the FC stack after the boundary) on
// frozen features by plain backpropagation; tail weights are written back
// into `net`. Returns train/test accuracy on the feature datasets.
struct FitResult {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};
FitResult fit_classifier(Network& net, const Dataset& train, const Dataset& test, const StdpConfig& feature_cfg,
                         const AgdConfig& cls_cfg);

// Same, with a separately described classifier network (its input shape must
// match the feature map).
FitResult fit_classifier_external(const Network& feature_net, Network& classifier, const Dataset& train,
                                  const Dataset& test, const StdpConfig& feature_cfg, const AgdConfig& cls_cfg);

// Builds the tail classifier network for fit_classifier (exposed for reuse by
// evaluation paths). Weights are views copied from `net`.
Network classifier_tail(const Network& net);

// Accuracy of a layerwise-trained net: frozen features plus the in-net tail.
double evaluate_stdp(const Network& net, const Dataset& ds, const StdpConfig& feature_cfg);

}  // namespace snnwb
