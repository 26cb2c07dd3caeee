#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace snnwb {

enum class LayerKind { Conv, Pool, FC };
enum class NeuronKind { ReLU, LIF, IF, None };
enum class SkipMode { AddZeroPad, ConcatToFC };
enum class ClassifierKind { Softmax, Stochmax };

struct ConvDims {
    int in_ch = 0, out_ch = 0, k = 0, stride = 1, pad = 0;
};
struct PoolDims {
    int p = 0, stride = 0;
};
struct FcDims {
    int in = 0, out = 0;
};

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Conv;
    NeuronKind neuron = NeuronKind::ReLU;
    ConvDims conv;
    PoolDims pool;
    FcDims fc;

    bool weighted() const { return kind != LayerKind::Pool; }
    int64_t parameter_count() const;
};

struct BackResGroup {
    std::vector<std::string> members;
    int n = 1;
};

struct SkipLink {
    std::string source;  // layer name or "Input"
    std::string dest;
    SkipMode mode = SkipMode::AddZeroPad;
};

struct TopologySpec {
    std::array<int, 3> input_shape{0, 0, 0};  // channels, height, width
    std::vector<LayerSpec> layers;
    std::vector<BackResGroup> backres;
    std::vector<SkipLink> skips;
    ClassifierKind classifier = ClassifierKind::Softmax;

    // Shape propagation notes that do not prevent parsing (declared FC widths
    // that disagree with the computed flatten); instantiating a runnable
    // network from a spec with diagnostics is refused.
    std::vector<std::string> shape_diagnostics;

    // Verbatim source document (kept for checkpoints and hashing).
    std::string source_text;

    int layer_index(const std::string& name) const;  // -1 when absent
    int unroll_count(int layer_index) const;
    int logical_depth() const;
    int real_depth() const;
};

// One entry of the unrolled execution plan. Weight-shared repetitions appear
// n times referencing the same layer index, carrying their 1-based step.
struct Invocation {
    int layer = 0;
    int unroll_index = 1;
    int unroll_count = 1;
    // Filled by shape propagation: feature shape consumed/produced. FC output
    // is [Y,1,1]; the FC in-shape is its concatenated input as a flat count.
    std::array<int, 3> in_shape{0, 0, 0};
    std::array<int, 3> out_shape{0, 0, 0};
    bool spiking = false;  // LIF/IF neuron and not the head
    bool is_head = false;
};

std::vector<Invocation> unroll(const TopologySpec& spec);

// Parses and validates a topology document (JSON). Structural problems
// (unknown kinds, duplicate or dangling names, channel mismatches, non-closing
// repeat groups, invalid skips) throw ConfigError naming the layer. Declared
// FC widths that disagree with the computed flatten are recorded in
// shape_diagnostics instead, so parameter counting on the document stays
// possible.
TopologySpec parse_topology(const std::string& json_text);
TopologySpec load_topology(const std::string& path);

// Sum of weight elements over unique weighted layers (shared repetitions
// counted once; there are no biases anywhere).
int64_t count_parameters(const TopologySpec& spec);

// Serializes back to the canonical document form.
std::string topology_to_json(const TopologySpec& spec);

uint64_t fnv1a64(const std::string& text);

const char* to_string(LayerKind k);
const char* to_string(NeuronKind n);
const char* to_string(SkipMode m);
const char* to_string(ClassifierKind c);

}  // namespace snnwb
