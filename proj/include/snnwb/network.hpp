#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "snnwb/encoding.hpp"
#include "snnwb/heads.hpp"
#include "snnwb/neuron.hpp"
#include "snnwb/rng.hpp"
#include "snnwb/tensor.hpp"
#include "snnwb/topology.hpp"

namespace snnwb {

// Instantiated network: one weight tensor per weighted layer (shared across
// repeat-group invocations by construction) plus per-(layer, unroll step)
// firing thresholds. Refuses topologies whose shape propagation left
// diagnostics.
struct Network {
    TopologySpec spec;
    std::vector<Invocation> plan;
    std::vector<Tensor> weights;                   // by layer index; empty for pools
    std::vector<std::vector<float>> thresholds;    // by layer index; one entry per unroll step
    StochmaxParams stoch;                          // sized when classifier is stochmax

    static Network build(const TopologySpec& spec, Rng& init_rng, float base_threshold = 1.0f);
    // Allocates weights without initializing them (checkpoint loading).
    static Network shell(const TopologySpec& spec, float base_threshold = 1.0f);

    const LayerSpec& layer(int idx) const { return spec.layers[static_cast<size_t>(idx)]; }
    size_t head_pos() const { return plan.size() - 1; }
    int head_layer() const { return plan.back().layer; }
    int class_count() const { return spec.layers[static_cast<size_t>(head_layer())].fc.out; }
    bool has_spiking() const;
    void set_uniform_thresholds(float v);
};

// Per-invocation gradient accumulators in double precision; reduced into
// per-layer sums in ascending unroll order so a tied block and its untied
// twin sum contributions identically.
struct GradBuffers {
    std::vector<std::vector<double>> by_invocation;  // by plan position
    std::vector<double> stoch_W, stoch_b;

    void init(const Network& net);
    void clear();
    void accumulate(size_t pos, const Tensor& grad);
    void merge(const GradBuffers& other);
    // Per layer index (empty vectors for pools).
    std::vector<std::vector<double>> reduce(const Network& net) const;
};

// ---- Analog (ReLU) execution ------------------------------------------------

struct AnnTrace {
    std::vector<Tensor> inputs;    // consumed input per plan position (FC: post-concat)
    std::vector<Tensor> currents;  // pre-activation per plan position
    std::vector<Tensor> outputs;   // post-activation per plan position
};

// Runs plan positions [begin, end); returns the output of position end-1.
// Spiking neuron kinds execute as ReLU here; the head gets no activation.
Tensor ann_forward_range(const Network& net, const Tensor& input, size_t begin, size_t end, AnnTrace* trace);
Tensor ann_forward(const Network& net, const Tensor& input, AnnTrace* trace = nullptr);

// Backward over [begin, end) from the gradient of position end-1's output.
// Returns the gradient wrt the range input when grad_input is non-null.
// head_input_extra, when given, is added to the head position's input
// gradient (the stochmax retain-probability path into the feature vector).
void ann_backward_range(const Network& net, const AnnTrace& trace, size_t begin, size_t end,
                        const Tensor& grad_seed, GradBuffers& grads, Tensor* grad_input = nullptr,
                        const Tensor* head_input_extra = nullptr);

// ---- Temporal (spiking) execution -------------------------------------------

struct TemporalOptions {
    int T = 1;
    float alpha = 0.95f;        // LIF decay; IF layers use 1
    float gamma = 0.3f;         // surrogate damping (backward only)
    int refractory = 0;
    bool reset_to_zero = false;
    bool analog_as_if = false;  // converted nets: run ReLU layers as IF
    float rate_factor = 1.0f;
    uint64_t encode_seed = 0;
    const SpikeTrain* input_train = nullptr;  // overrides Poisson encoding
    bool collect_activity = false;
    int frontier = -1;          // threshold balancing probe (plan position)
};

struct Tape {
    int T = 0;
    size_t suffix_begin = 0;  // first temporally executed plan position
    // Indexed [t][plan position]; only weighted suffix positions are filled.
    std::vector<std::vector<Tensor>> inputs;
    std::vector<std::vector<Tensor>> pre_reset;
    AnnTrace prefix_trace;  // hybrid analog prefix (run once)
    Tensor prefix_out;
    Tensor counts;
};

struct TemporalResult {
    Tensor counts;  // accumulated head input over T
    Tensor logits;
    // Per plan position: mean over steps of the fraction of nonzero inputs,
    // and the single-step peak of the same fraction.
    std::vector<double> input_activity;
    std::vector<double> peak_input_activity;
    // Per plan position: mean over steps of the fraction of neurons spiking.
    std::vector<double> output_activity;
    // Balancing probe results.
    float frontier_max = -std::numeric_limits<float>::infinity();
    std::vector<float> frontier_step_max;
};

class TemporalEngine {
public:
    TemporalEngine(const Network& net, const TemporalOptions& opts);

    TemporalResult run(const Tensor& image, Tape* tape = nullptr);

    // BPTT through the tape. The head layer's weight gradient is accumulated
    // from grad_logits; counts_extra, when given, is added to the gradient
    // wrt the accumulated head input (stochmax rho path).
    void backward(const Tape& tape, const Tensor& grad_logits, GradBuffers& grads,
                  const Tensor* counts_extra = nullptr) const;

    size_t suffix_begin() const { return suffix_begin_; }
    bool spiking_at(size_t pos) const { return spiking_[pos]; }

private:
    const Network& net_;
    TemporalOptions opts_;
    size_t suffix_begin_ = 0;
    std::vector<char> spiking_;       // per plan position, under these options
    std::vector<NeuronState> states_; // per plan position (spiking only)

    Tensor step_input(const Tensor& image, Rng& rng, int t, Tensor& scratch) const;
};

// ---- Plan introspection ------------------------------------------------------

// Resolved skip wiring per plan position. Additive skips inject the source's
// per-step output into this position's pre-neuron current (channel
// zero-padded); concat sources extend an FC input, pooled by every pool layer
// between source and destination.
struct AddSource {
    int source_pos = -1;  // -1 means the network input
    std::array<int, 3> shape{0, 0, 0};
};
struct ConcatSource {
    int source_pos = -1;
    std::array<int, 3> src_shape{0, 0, 0};
    std::vector<PoolDims> pools;
    std::vector<std::array<int, 3>> inter_shapes;  // shape before each pool
    std::array<int, 3> pooled_shape{0, 0, 0};
};
struct PosInfo {
    std::vector<AddSource> adds;
    std::vector<ConcatSource> concats;
    int64_t main_len = 0;  // flattened main-path input length (FC positions)
};
std::vector<PosInfo> analyze_plan(const Network& net);

// Output spike/value trains of selected plan positions over T steps
// (layerwise training taps), captured in one pass. Positions must lie in the
// temporally executed suffix.
std::vector<SpikeTrain> record_output_trains(const Network& net, const Tensor& image, const TemporalOptions& opts,
                                             const std::vector<size_t>& positions);
SpikeTrain record_output_train(const Network& net, const Tensor& image, const TemporalOptions& opts, size_t pos);

// Feature interface for layerwise-trained nets: runs plan positions before
// `boundary_pos` over T steps and returns accumulated spike counts shaped as
// a channel-concatenated map (main path first, then concat skips in declared
// order). activity_out, when given, receives each weighted position's mean
// input firing fraction (sized like the plan).
Tensor accumulate_features(const Network& net, const Tensor& image, const TemporalOptions& opts,
                           size_t boundary_pos, std::vector<double>* activity_out = nullptr);

// Shape of that feature map.
std::vector<int> feature_shape(const Network& net, size_t boundary_pos);

// First plan position holding an FC layer (classifier boundary for layerwise
// training); plan size when none exists.
size_t first_fc_pos(const Network& net);

}  // namespace snnwb
