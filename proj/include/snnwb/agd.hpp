#pragma once

#include <functional>
#include <map>
#include <string>

#include "snnwb/data.hpp"
#include "snnwb/network.hpp"

namespace snnwb {

// End-to-end surrogate-gradient training over the unrolled temporal graph.
// Firing thresholds are fixed before training and stay constant; the leak,
// damping factor and time window come from here. Networks without spiking
// layers train through the plain analog path (T is ignored there), which is
// also how appended classifiers are fitted.
struct AgdConfig {
    int T = 25;
    float lr = 0.05f;
    float gamma = 0.3f;  // surrogate damping
    float alpha = 0.95f;
    float base_threshold = 1.0f;
    int batch_size = 32;
    int epochs = 10;
    bool use_momentum = false;
    float momentum = 0.9f;
    float rate_factor = 1.0f;
    uint64_t seed = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    // Virtual-layer name -> mean input spiking fraction on the test split.
    std::map<std::string, double> spike_activity;
};
using MetricsSink = std::function<void(const EpochRecord&)>;

// Readable name for a plan position ("Conv2" or "Conv2@2" inside a group).
std::string invocation_name(const Network& net, size_t pos);

struct EvalOptions {
    int T = 25;
    float alpha = 0.95f;
    float rate_factor = 1.0f;
    uint64_t seed = 1;
    bool analog_as_if = false;  // converted checkpoints
    int threads_hint = 0;       // 0: use the process-wide worker setting
};

struct EvalResult {
    double accuracy = 0.0;
    std::vector<int> predictions;
    // Per plan position, averaged over samples and steps.
    std::vector<double> input_activity;
    std::vector<double> output_activity;
    // Per plan position, the largest single-step fraction seen on any sample.
    std::vector<double> peak_input_activity;
};

// Accuracy (and activity, for spiking nets) on a dataset. Spiking nets run
// the temporal engine with per-image encode seeds (seed XOR index); analog
// nets run the plain forward.
EvalResult evaluate(const Network& net, const Dataset& ds, const EvalOptions& opts);

void train_agd(Network& net, const Dataset& train_set, const Dataset& test_set, const AgdConfig& cfg,
               const MetricsSink& sink = {});

// Forward + backward for one sample, accumulating into grads. Exposed for the
// gradient-equivalence and finite-difference tests.
struct SampleOutcome {
    double loss = 0.0;
    bool correct = false;
};
SampleOutcome agd_sample_grad(const Network& net, const Tensor& image, int label, const AgdConfig& cfg,
                              uint64_t encode_seed, GradBuffers& grads);

}  // namespace snnwb
