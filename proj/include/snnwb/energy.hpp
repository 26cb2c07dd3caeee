#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnwb/network.hpp"

namespace snnwb {

// Per-operation energies for 32-bit integer arithmetic in a 45nm process,
// in picojoules. A fused multiply-accumulate costs one multiply plus one add.
struct EnergyConstants {
    double e_mult = 3.1;
    double e_add = 0.1;
    double e_mac = 3.2;
    double e_ac = 0.1;

    void validate() const;  // e_mac == e_mult + e_add, all positive
};

// Dense multiply-accumulate count of one layer application.
int64_t flops_ann_conv(int out_size, int in_ch, int k, int out_ch);
int64_t flops_ann_fc(int in, int out);

// Event-driven count per time-step: the dense count scaled by the fraction of
// input neurons that fire. s_a must lie in [0,1].
double flops_snn(int64_t flops_ann, double s_a);

// One profiled layer application (one plan invocation). Spiking entries are
// accumulate-only and pay per time-step; analog entries pay one MAC pass.
struct LayerProfile {
    std::string name;
    bool is_conv = false;
    int64_t flops = 0;
    bool spiking = false;
    double s_a = 1.0;       // time-averaged input firing fraction (costing uses this)
    double s_a_peak = 0.0;  // recorded single-step peak, 0 when unmeasured
};

struct LayerEnergy {
    std::string name;
    bool is_conv = false;
    int64_t flops_ann = 0;
    double s_a = 1.0;
    double s_a_peak = 0.0;
    bool spiking = false;
    double flops_snn = 0.0;  // per time-step
    double e_ann = 0.0;
    double e_snn = 0.0;
};

struct EnergyReport {
    int T = 1;
    std::vector<LayerEnergy> layers;
    double e_ann_total = 0.0;   // pJ
    double e_snn_total = 0.0;   // pJ
    double ee = 0.0;            // e_ann_total / e_snn_total
    double ee_conv = 0.0;       // conv/pool layers only
    double ee_full = 0.0;       // same as ee

    std::string to_json() const;
    std::string to_table() const;
};

// Energy accounting across layers: dense MAC energy for the analog twin,
// event-driven AC energy over T steps for spiking entries, with analog
// entries inside a spiking net paying their MAC energy once (they run once,
// not per step).
EnergyReport total_energy(const std::vector<LayerProfile>& layers, int T, const EnergyConstants& constants);

// Profile built from a network plan plus measured per-invocation activity
// (fractions from EvalResult::input_activity). Layers with analog neurons and
// the classifier head are costed as analog; spiking layers use their measured
// activity. force_spiking treats every weighted non-head layer as spiking
// (converted networks). peaks, when given, ride along in the report.
std::vector<LayerProfile> profile_network(const Network& net, const std::vector<double>& input_activity,
                                          bool force_spiking = false,
                                          const std::vector<double>* peaks = nullptr);

// The all-analog twin of the same plan (S_A = 1, everything MAC).
std::vector<LayerProfile> profile_network_ann(const Network& net);

}  // namespace snnwb
