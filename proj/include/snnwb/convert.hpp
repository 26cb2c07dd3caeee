#pragma once

#include <string>
#include <vector>

#include "snnwb/agd.hpp"
#include "snnwb/data.hpp"
#include "snnwb/network.hpp"

namespace snnwb {

// Layerwise threshold balancing: Poisson trains from a calibration subset are
// propagated through already-balanced layers as spikes, the maximum weighted
// input sum reaching the layer under balancing is recorded, and that maximum
// becomes its firing threshold. Repeat groups get one threshold per unroll
// step, balanced in plan order. Weights never change.
struct ConvertOptions {
    int T_cal = 2000;
    int calib_samples = 512;
    double percentile = 100.0;  // 100 = pure max; lower trims outliers
    float rate_factor = 1.0f;
    uint64_t seed = 1;
};

struct ThresholdEntry {
    std::string layer;
    int unroll_index = 1;
    float threshold = 0.0f;
};

struct ConversionReport {
    std::vector<ThresholdEntry> thresholds;
    double ann_accuracy = 0.0;
    std::vector<int> sweep_T;
    std::vector<double> snn_accuracy;
    std::vector<double> agreement;  // fraction of samples matching the source net's prediction
    // Observation only: whether each repeated layer's per-step thresholds
    // come out strictly increasing.
    std::vector<std::pair<std::string, bool>> ordering_increasing;

    std::string to_json() const;
};

// Balances `net` in place (fills net.thresholds) and returns the entries.
std::vector<ThresholdEntry> balance_thresholds(Network& net, const Dataset& calibration, const ConvertOptions& opts);

// Integrate-and-fire inference of a balanced network; predictions plus
// per-invocation activity. Throws when T < 1 (no evidence accumulated).
EvalResult run_converted(const Network& net, const Dataset& inputs, int T, uint64_t seed, float rate_factor = 1.0f);

// Full pipeline: source-net predictions, balancing, then a latency sweep.
ConversionReport convert_and_sweep(Network& net, const Dataset& calibration, const Dataset& eval_set,
                                   const std::vector<int>& sweep, const ConvertOptions& opts);

}  // namespace snnwb
