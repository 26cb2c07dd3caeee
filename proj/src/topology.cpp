#include "snnwb/topology.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "snnwb/errors.hpp"
#include "snnwb/ops.hpp"

namespace snnwb {

using nlohmann::json;

int64_t LayerSpec::parameter_count() const {
    switch (kind) {
        case LayerKind::Conv:
            return static_cast<int64_t>(conv.out_ch) * conv.in_ch * conv.k * conv.k;
        case LayerKind::FC:
            return static_cast<int64_t>(fc.out) * fc.in;
        case LayerKind::Pool:
            return 0;
    }
    return 0;
}

int TopologySpec::layer_index(const std::string& name) const {
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == name) return static_cast<int>(i);
    return -1;
}

int TopologySpec::unroll_count(int idx) const {
    const std::string& name = layers[static_cast<size_t>(idx)].name;
    for (const auto& g : backres)
        for (const auto& m : g.members)
            if (m == name) return g.n;
    return 1;
}

int TopologySpec::logical_depth() const {
    int depth = 0;
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i].weighted()) depth += unroll_count(static_cast<int>(i));
    return depth;
}

int TopologySpec::real_depth() const {
    int depth = 0;
    for (const auto& l : layers)
        if (l.weighted()) ++depth;
    return depth;
}

const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Pool: return "pool";
        case LayerKind::FC: return "fc";
    }
    return "?";
}
const char* to_string(NeuronKind n) {
    switch (n) {
        case NeuronKind::ReLU: return "relu";
        case NeuronKind::LIF: return "lif";
        case NeuronKind::IF: return "if";
        case NeuronKind::None: return "none";
    }
    return "?";
}
const char* to_string(SkipMode m) {
    return m == SkipMode::AddZeroPad ? "add_zero_pad" : "concat_to_fc";
}
const char* to_string(ClassifierKind c) {
    return c == ClassifierKind::Softmax ? "softmax" : "stochmax";
}

uint64_t fnv1a64(const std::string& text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("topology: " + msg); }

// Expanded plan with shape propagation. Structural and spatial inconsistencies
// throw; FC declared-width disagreements are reported through diags so the
// document can still be counted.
std::vector<Invocation> propagate(const TopologySpec& spec, std::vector<std::string>* diags) {
    if (spec.layers.empty()) fail("no layers");
    if (spec.input_shape[0] <= 0 || spec.input_shape[1] <= 0 || spec.input_shape[2] <= 0)
        fail("input_shape must be three positive integers");

    // Group membership and contiguity.
    std::map<std::string, int> group_of;
    for (size_t gi = 0; gi < spec.backres.size(); ++gi) {
        const auto& g = spec.backres[gi];
        if (g.n < 1) fail("repeat group count must be >= 1");
        if (g.members.empty()) fail("repeat group has no members");
        int prev = -2;
        for (const auto& m : g.members) {
            const int idx = spec.layer_index(m);
            if (idx < 0) fail("repeat group references undefined layer '" + m + "'");
            if (group_of.count(m)) fail("layer '" + m + "' appears in more than one repeat group");
            group_of[m] = static_cast<int>(gi);
            if (prev != -2 && idx != prev + 1) fail("repeat group members must be consecutive layers; '" + m + "' is not");
            prev = idx;
        }
    }

    // Plan order: declared order, with each group's member block emitted n
    // times at the position of its first member.
    std::vector<Invocation> plan;
    for (size_t i = 0; i < spec.layers.size();) {
        const auto& l = spec.layers[i];
        auto it = group_of.find(l.name);
        if (it == group_of.end()) {
            Invocation inv;
            inv.layer = static_cast<int>(i);
            plan.push_back(inv);
            ++i;
            continue;
        }
        const auto& g = spec.backres[static_cast<size_t>(it->second)];
        if (g.members.front() != l.name)
            fail("layer '" + l.name + "' reached before its repeat group leader '" + g.members.front() + "'");
        for (int rep = 1; rep <= g.n; ++rep)
            for (const auto& m : g.members) {
                Invocation inv;
                inv.layer = spec.layer_index(m);
                inv.unroll_index = rep;
                inv.unroll_count = g.n;
                plan.push_back(inv);
            }
        i += g.members.size();
    }

    // The final invocation is the classifier head and must be weighted.
    if (!spec.layers[static_cast<size_t>(plan.back().layer)].weighted())
        fail("last layer must be a weighted layer (the classifier head), got pool '" +
             spec.layers[static_cast<size_t>(plan.back().layer)].name + "'");
    plan.back().is_head = true;

    // Validate skips structurally.
    for (const auto& s : spec.skips) {
        if (s.source != "Input" && spec.layer_index(s.source) < 0)
            fail("skip references undefined layer '" + s.source + "'");
        const int d = spec.layer_index(s.dest);
        if (d < 0) fail("skip references undefined layer '" + s.dest + "'");
        const auto& dl = spec.layers[static_cast<size_t>(d)];
        if (s.mode == SkipMode::ConcatToFC && dl.kind != LayerKind::FC)
            fail("concat skip destination '" + s.dest + "' must be a fully-connected layer");
        if (s.mode == SkipMode::AddZeroPad && dl.kind != LayerKind::Conv)
            fail("additive skip destination '" + s.dest + "' must be a convolutional layer");
    }

    // Shape propagation over the plan.
    std::array<int, 3> cur = spec.input_shape;
    std::map<int, std::array<int, 3>> latest_out;   // layer -> last produced shape
    std::map<int, size_t> latest_pos;               // layer -> last plan position
    auto source_shape_at = [&](const SkipLink& s, size_t pos) -> std::array<int, 3> {
        if (s.source == "Input") return spec.input_shape;
        const int li = spec.layer_index(s.source);
        auto it = latest_out.find(li);
        if (it == latest_out.end())
            fail("skip source '" + s.source + "' has not produced output before '" + s.dest + "' at plan position " +
                 std::to_string(pos));
        return it->second;
    };

    for (size_t pos = 0; pos < plan.size(); ++pos) {
        Invocation& inv = plan[pos];
        const auto& l = spec.layers[static_cast<size_t>(inv.layer)];
        inv.in_shape = cur;
        switch (l.kind) {
            case LayerKind::Conv: {
                if (cur[0] != l.conv.in_ch)
                    fail("layer '" + l.name + "' expects " + std::to_string(l.conv.in_ch) +
                         " input channels but receives " + std::to_string(cur[0]));
                const int oh = conv_output_size(cur[1], l.conv.k, l.conv.stride, l.conv.pad);
                const int ow = conv_output_size(cur[2], l.conv.k, l.conv.stride, l.conv.pad);
                if (oh < 1 || ow < 1)
                    fail("layer '" + l.name + "' output collapses on input " + std::to_string(cur[1]) + "x" +
                         std::to_string(cur[2]));
                cur = {l.conv.out_ch, oh, ow};
                break;
            }
            case LayerKind::Pool: {
                if (l.pool.p > cur[1] || l.pool.p > cur[2])
                    fail("pool '" + l.name + "' window " + std::to_string(l.pool.p) + " larger than input " +
                         std::to_string(cur[1]) + "x" + std::to_string(cur[2]));
                cur = {cur[0], conv_output_size(cur[1], l.pool.p, l.pool.stride, 0),
                       conv_output_size(cur[2], l.pool.p, l.pool.stride, 0)};
                break;
            }
            case LayerKind::FC: {
                int64_t flat = static_cast<int64_t>(cur[0]) * cur[1] * cur[2];
                // Concatenated skip sources arrive pooled by every pool layer
                // between the source and this destination.
                for (const auto& s : spec.skips) {
                    if (s.dest != l.name || s.mode != SkipMode::ConcatToFC) continue;
                    std::array<int, 3> ss = source_shape_at(s, pos);
                    size_t from = 0;
                    if (s.source != "Input") from = latest_pos[spec.layer_index(s.source)] + 1;
                    for (size_t q = from; q < pos; ++q) {
                        const auto& ql = spec.layers[static_cast<size_t>(plan[q].layer)];
                        if (ql.kind != LayerKind::Pool) continue;
                        if (ql.pool.p > ss[1] || ql.pool.p > ss[2])
                            fail("skip source '" + s.source + "' cannot pass pool '" + ql.name + "'");
                        ss = {ss[0], conv_output_size(ss[1], ql.pool.p, ql.pool.stride, 0),
                              conv_output_size(ss[2], ql.pool.p, ql.pool.stride, 0)};
                    }
                    flat += static_cast<int64_t>(ss[0]) * ss[1] * ss[2];
                }
                if (flat != l.fc.in) {
                    const std::string note = "layer '" + l.name + "' declares " + std::to_string(l.fc.in) +
                                             " inputs but receives " + std::to_string(flat);
                    if (diags)
                        diags->push_back(note);
                    else
                        fail(note);
                }
                inv.in_shape = {static_cast<int>(flat), 1, 1};
                cur = {l.fc.out, 1, 1};
                break;
            }
        }
        inv.out_shape = cur;
        inv.spiking = !inv.is_head && (l.neuron == NeuronKind::LIF || l.neuron == NeuronKind::IF);

        // Repeat-group members must be able to consume their own output.
        if (inv.unroll_count > 1 && inv.in_shape != inv.out_shape && l.kind != LayerKind::FC)
            fail("repeated layer '" + l.name + "' output " + std::to_string(inv.out_shape[0]) + "x" +
                 std::to_string(inv.out_shape[1]) + "x" + std::to_string(inv.out_shape[2]) +
                 " does not match its input; the block cannot consume itself");
        if (inv.unroll_count > 1 && l.kind == LayerKind::FC && l.fc.in != l.fc.out)
            fail("repeated layer '" + l.name + "' must have equal input and output width");

        // Additive skips into this layer's output.
        if (l.kind == LayerKind::Conv)
            for (const auto& s : spec.skips) {
                if (s.dest != l.name || s.mode != SkipMode::AddZeroPad) continue;
                const auto ss = source_shape_at(s, pos);
                if (ss[1] != inv.out_shape[1] || ss[2] != inv.out_shape[2])
                    fail("additive skip '" + s.source + "' -> '" + s.dest + "' spatial mismatch: " +
                         std::to_string(ss[1]) + "x" + std::to_string(ss[2]) + " vs " +
                         std::to_string(inv.out_shape[1]) + "x" + std::to_string(inv.out_shape[2]));
                if (ss[0] > inv.out_shape[0])
                    fail("additive skip '" + s.source + "' -> '" + s.dest + "' has more channels (" +
                         std::to_string(ss[0]) + ") than the destination (" + std::to_string(inv.out_shape[0]) + ")");
            }

        latest_out[inv.layer] = inv.out_shape;
        latest_pos[inv.layer] = pos;
    }
    return plan;
}

NeuronKind parse_neuron(const std::string& s) {
    if (s == "relu") return NeuronKind::ReLU;
    if (s == "lif") return NeuronKind::LIF;
    if (s == "if") return NeuronKind::IF;
    if (s == "none") return NeuronKind::None;
    fail("unknown neuron kind '" + s + "'");
}

int get_int(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_number_integer())
        fail(ctx + " needs integer field '" + std::string(key) + "'");
    return j[key].get<int>();
}

}  // namespace

std::vector<Invocation> unroll(const TopologySpec& spec) {
    std::vector<std::string> diags;
    auto plan = propagate(spec, &diags);
    return plan;
}

TopologySpec parse_topology(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(std::string("document is not valid JSON: ") + e.what());
    }

    TopologySpec spec;
    spec.source_text = json_text;

    if (!doc.contains("input_shape") || !doc["input_shape"].is_array() || doc["input_shape"].size() != 3)
        fail("'input_shape' must be an array of three integers");
    for (int i = 0; i < 3; ++i) spec.input_shape[static_cast<size_t>(i)] = doc["input_shape"][static_cast<size_t>(i)].get<int>();

    if (doc.contains("classifier")) {
        const std::string c = doc["classifier"].get<std::string>();
        if (c == "softmax")
            spec.classifier = ClassifierKind::Softmax;
        else if (c == "stochmax")
            spec.classifier = ClassifierKind::Stochmax;
        else
            fail("unknown classifier '" + c + "'");
    }

    if (!doc.contains("layers") || !doc["layers"].is_array() || doc["layers"].empty())
        fail("'layers' must be a non-empty array");

    std::set<std::string> names;
    for (const auto& jl : doc["layers"]) {
        LayerSpec l;
        if (!jl.contains("name") || !jl["name"].is_string()) fail("every layer needs a string 'name'");
        l.name = jl["name"].get<std::string>();
        if (l.name == "Input") fail("'Input' is reserved and cannot name a layer");
        if (!names.insert(l.name).second) fail("duplicate layer name '" + l.name + "'");

        const std::string kind = jl.value("kind", "");
        const json params = jl.value("params", json::object());
        const std::string ctx = "layer '" + l.name + "'";
        if (kind == "conv") {
            l.kind = LayerKind::Conv;
            l.conv.in_ch = get_int(params, "in", ctx);
            l.conv.out_ch = get_int(params, "out", ctx);
            l.conv.k = get_int(params, "k", ctx);
            l.conv.stride = params.value("stride", 1);
            l.conv.pad = params.value("pad", 0);
            if (l.conv.in_ch < 1 || l.conv.out_ch < 1 || l.conv.k < 1 || l.conv.stride < 1 || l.conv.pad < 0)
                fail(ctx + " has invalid dimensions");
            l.neuron = parse_neuron(jl.value("neuron", "relu"));
        } else if (kind == "pool") {
            l.kind = LayerKind::Pool;
            l.pool.p = get_int(params, "p", ctx);
            l.pool.stride = params.value("stride", l.pool.p);
            if (l.pool.p < 1 || l.pool.stride < 1) fail(ctx + " has invalid dimensions");
            l.neuron = parse_neuron(jl.value("neuron", "none"));
            if (l.neuron != NeuronKind::None) fail(ctx + " is a pool and must have neuron 'none'");
        } else if (kind == "fc") {
            l.kind = LayerKind::FC;
            l.fc.in = get_int(params, "in", ctx);
            l.fc.out = get_int(params, "out", ctx);
            if (l.fc.in < 1 || l.fc.out < 1) fail(ctx + " has invalid dimensions");
            l.neuron = parse_neuron(jl.value("neuron", "relu"));
        } else {
            fail("layer '" + l.name + "' has unknown kind '" + kind + "'");
        }
        spec.layers.push_back(std::move(l));
    }

    for (const auto& jg : doc.value("backres", json::array())) {
        BackResGroup g;
        if (!jg.contains("members") || !jg["members"].is_array() || jg["members"].empty())
            fail("repeat group needs a non-empty 'members' array");
        for (const auto& m : jg["members"]) g.members.push_back(m.get<std::string>());
        g.n = jg.value("n", 1);
        spec.backres.push_back(std::move(g));
    }

    for (const auto& js : doc.value("skips", json::array())) {
        SkipLink s;
        s.source = js.value("source", "");
        s.dest = js.value("dest", "");
        const std::string mode = js.value("mode", "");
        if (mode == "add_zero_pad")
            s.mode = SkipMode::AddZeroPad;
        else if (mode == "concat_to_fc")
            s.mode = SkipMode::ConcatToFC;
        else
            fail("skip '" + s.source + "' -> '" + s.dest + "' has unknown mode '" + mode + "'");
        spec.skips.push_back(std::move(s));
    }

    std::vector<std::string> diags;
    propagate(spec, &diags);
    spec.shape_diagnostics = std::move(diags);
    return spec;
}

TopologySpec load_topology(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open topology file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_topology(ss.str());
}

int64_t count_parameters(const TopologySpec& spec) {
    int64_t total = 0;
    for (const auto& l : spec.layers) total += l.parameter_count();
    return total;
}

std::string topology_to_json(const TopologySpec& spec) {
    json doc;
    doc["input_shape"] = {spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
    doc["classifier"] = to_string(spec.classifier);
    doc["layers"] = json::array();
    for (const auto& l : spec.layers) {
        json jl;
        jl["name"] = l.name;
        jl["kind"] = to_string(l.kind);
        jl["neuron"] = to_string(l.neuron);
        json p;
        switch (l.kind) {
            case LayerKind::Conv:
                p = {{"in", l.conv.in_ch}, {"out", l.conv.out_ch}, {"k", l.conv.k},
                     {"stride", l.conv.stride}, {"pad", l.conv.pad}};
                break;
            case LayerKind::Pool:
                p = {{"p", l.pool.p}, {"stride", l.pool.stride}};
                break;
            case LayerKind::FC:
                p = {{"in", l.fc.in}, {"out", l.fc.out}};
                break;
        }
        jl["params"] = p;
        doc["layers"].push_back(jl);
    }
    doc["backres"] = json::array();
    for (const auto& g : spec.backres) doc["backres"].push_back({{"members", g.members}, {"n", g.n}});
    doc["skips"] = json::array();
    for (const auto& s : spec.skips)
        doc["skips"].push_back({{"source", s.source}, {"dest", s.dest}, {"mode", to_string(s.mode)}});
    return doc.dump(2);
}

}  // namespace snnwb
