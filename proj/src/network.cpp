#include "snnwb/network.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "snnwb/errors.hpp"
#include "snnwb/ops.hpp"
#include "snnwb/simd.hpp"

namespace snnwb {

namespace {

std::vector<int> arr3(const std::array<int, 3>& a) { return {a[0], a[1], a[2]}; }

int64_t flat3(const std::array<int, 3>& a) { return static_cast<int64_t>(a[0]) * a[1] * a[2]; }

Tensor as_map(const Tensor& t, const std::array<int, 3>& shape) {
    if (t.rank() == 3 && t.dim(0) == shape[0] && t.dim(1) == shape[1] && t.dim(2) == shape[2]) return t;
    return t.reshaped(arr3(shape));
}

// out[c,:,:] += src[c,:,:] for the channels src has; missing channels stay.
void add_zero_padded(const Tensor& src, Tensor& out) {
    const int plane = out.dim(1) * out.dim(2);
    const auto& kr = simd::active();
    for (int c = 0; c < src.dim(0); ++c)
        kr.add(src.data() + static_cast<size_t>(c) * plane, out.data() + static_cast<size_t>(c) * plane,
               static_cast<size_t>(plane));
}

}  // namespace

bool Network::has_spiking() const {
    for (const auto& inv : plan)
        if (inv.spiking) return true;
    return false;
}

void Network::set_uniform_thresholds(float v) {
    for (auto& t : thresholds)
        for (auto& x : t) x = v;
}

Network Network::shell(const TopologySpec& spec, float base_threshold) {
    if (!spec.shape_diagnostics.empty())
        throw ConfigError("cannot instantiate topology; shape check reported: " + spec.shape_diagnostics.front());
    Network net;
    net.spec = spec;
    net.plan = unroll(spec);
    if (net.spec.layers[static_cast<size_t>(net.plan.back().layer)].kind != LayerKind::FC)
        throw ConfigError("the final layer must be a fully-connected classifier head");
    net.weights.resize(spec.layers.size());
    net.thresholds.resize(spec.layers.size());
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (l.kind == LayerKind::Conv)
            net.weights[i] = Tensor({l.conv.out_ch, l.conv.in_ch, l.conv.k, l.conv.k});
        else if (l.kind == LayerKind::FC)
            net.weights[i] = Tensor({l.fc.out, l.fc.in});
        net.thresholds[i].assign(static_cast<size_t>(spec.unroll_count(static_cast<int>(i))), base_threshold);
    }
    if (spec.classifier == ClassifierKind::Stochmax) {
        const auto& head = spec.layers[static_cast<size_t>(net.plan.back().layer)];
        net.stoch.W_psi = Tensor({head.fc.out, head.fc.in});
        net.stoch.b_psi = Tensor({head.fc.out});
    }
    return net;
}

Network Network::build(const TopologySpec& spec, Rng& init_rng, float base_threshold) {
    Network net = shell(spec, base_threshold);
    for (size_t i = 0; i < net.spec.layers.size(); ++i) {
        const auto& l = net.spec.layers[i];
        if (!l.weighted()) continue;
        const int fan_in = l.kind == LayerKind::Conv ? l.conv.in_ch * l.conv.k * l.conv.k : l.fc.in;
        const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
        Tensor& w = net.weights[i];
        for (int64_t j = 0; j < w.size(); ++j) w[j] = init_rng.uniform(-bound, bound);
    }
    if (net.spec.classifier == ClassifierKind::Stochmax) {
        const float bound = std::sqrt(1.0f / static_cast<float>(net.stoch.W_psi.dim(1)));
        for (int64_t j = 0; j < net.stoch.W_psi.size(); ++j) net.stoch.W_psi[j] = init_rng.uniform(-bound, bound);
        // Start with high retain probabilities so early training sees most classes.
        net.stoch.b_psi.fill(2.0f);
    }
    return net;
}

// ---- GradBuffers --------------------------------------------------------------

void GradBuffers::init(const Network& net) {
    by_invocation.assign(net.plan.size(), {});
    for (size_t pos = 0; pos < net.plan.size(); ++pos) {
        const auto& l = net.layer(net.plan[pos].layer);
        if (l.weighted())
            by_invocation[pos].assign(static_cast<size_t>(net.weights[static_cast<size_t>(net.plan[pos].layer)].size()),
                                      0.0);
    }
    if (net.spec.classifier == ClassifierKind::Stochmax) {
        stoch_W.assign(static_cast<size_t>(net.stoch.W_psi.size()), 0.0);
        stoch_b.assign(static_cast<size_t>(net.stoch.b_psi.size()), 0.0);
    }
}

void GradBuffers::clear() {
    for (auto& v : by_invocation) std::fill(v.begin(), v.end(), 0.0);
    std::fill(stoch_W.begin(), stoch_W.end(), 0.0);
    std::fill(stoch_b.begin(), stoch_b.end(), 0.0);
}

void GradBuffers::accumulate(size_t pos, const Tensor& grad) {
    auto& acc = by_invocation[pos];
    const float* g = grad.data();
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(g[i]);
}

void GradBuffers::merge(const GradBuffers& other) {
    for (size_t pos = 0; pos < by_invocation.size(); ++pos)
        for (size_t i = 0; i < by_invocation[pos].size(); ++i) by_invocation[pos][i] += other.by_invocation[pos][i];
    for (size_t i = 0; i < stoch_W.size(); ++i) stoch_W[i] += other.stoch_W[i];
    for (size_t i = 0; i < stoch_b.size(); ++i) stoch_b[i] += other.stoch_b[i];
}

std::vector<std::vector<double>> GradBuffers::reduce(const Network& net) const {
    std::vector<std::vector<double>> by_layer(net.spec.layers.size());
    for (size_t i = 0; i < net.spec.layers.size(); ++i)
        if (net.layer(static_cast<int>(i)).weighted())
            by_layer[i].assign(static_cast<size_t>(net.weights[i].size()), 0.0);
    // Ascending plan order is ascending unroll order for shared layers.
    for (size_t pos = 0; pos < by_invocation.size(); ++pos) {
        if (by_invocation[pos].empty()) continue;
        auto& dst = by_layer[static_cast<size_t>(net.plan[pos].layer)];
        const auto& src = by_invocation[pos];
        for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
    return by_layer;
}

// ---- Plan analysis ------------------------------------------------------------

std::vector<PosInfo> analyze_plan(const Network& net) {
    const auto& spec = net.spec;
    const auto& plan = net.plan;
    std::vector<PosInfo> info(plan.size());

    for (size_t pos = 0; pos < plan.size(); ++pos) {
        const auto& l = net.layer(plan[pos].layer);
        // Latest producing position of a layer before pos.
        auto source_pos_of = [&](const std::string& name) -> int {
            if (name == "Input") return -1;
            const int li = spec.layer_index(name);
            int found = -2;
            for (size_t q = 0; q < pos; ++q)
                if (plan[q].layer == li) found = static_cast<int>(q);
            if (found == -2)
                throw ConfigError("skip source '" + name + "' does not precede '" + l.name + "'");
            return found;
        };

        for (const auto& s : spec.skips) {
            if (s.dest != l.name) continue;
            if (s.mode == SkipMode::AddZeroPad) {
                AddSource a;
                a.source_pos = source_pos_of(s.source);
                a.shape = a.source_pos < 0 ? spec.input_shape : plan[static_cast<size_t>(a.source_pos)].out_shape;
                info[pos].adds.push_back(a);
            } else {
                ConcatSource c;
                c.source_pos = source_pos_of(s.source);
                c.src_shape = c.source_pos < 0 ? spec.input_shape : plan[static_cast<size_t>(c.source_pos)].out_shape;
                std::array<int, 3> cur = c.src_shape;
                const size_t from = c.source_pos < 0 ? 0 : static_cast<size_t>(c.source_pos) + 1;
                for (size_t q = from; q < pos; ++q) {
                    const auto& ql = net.layer(plan[q].layer);
                    if (ql.kind != LayerKind::Pool) continue;
                    c.pools.push_back(ql.pool);
                    c.inter_shapes.push_back(cur);
                    cur = {cur[0], conv_output_size(cur[1], ql.pool.p, ql.pool.stride, 0),
                           conv_output_size(cur[2], ql.pool.p, ql.pool.stride, 0)};
                }
                c.pooled_shape = cur;
                info[pos].concats.push_back(std::move(c));
            }
        }
        if (l.kind == LayerKind::FC) {
            int64_t extra = 0;
            for (const auto& c : info[pos].concats) extra += flat3(c.pooled_shape);
            info[pos].main_len = static_cast<int64_t>(plan[pos].in_shape[0]) - extra;
        }
    }
    return info;
}

namespace {

Tensor pool_chain_forward(const Tensor& src, const ConcatSource& c) {
    Tensor cur = as_map(src, c.src_shape);
    for (const auto& p : c.pools) cur = avgpool_forward(cur, p.p, p.stride);
    return cur;
}

Tensor pool_chain_backward(const Tensor& grad_pooled, const ConcatSource& c) {
    Tensor g = as_map(grad_pooled, c.pooled_shape);
    for (size_t i = c.pools.size(); i-- > 0;)
        g = avgpool_backward(g, arr3(c.inter_shapes[i]), c.pools[i].p, c.pools[i].stride);
    return g;
}

// Builds the (possibly concatenated) FC input vector for one step/sample.
Tensor build_fc_input(const Tensor& main, const PosInfo& pi, const std::vector<Tensor>& outs, const Tensor& net_input) {
    if (pi.concats.empty() && main.rank() == 1) return main;
    int64_t total = main.size();
    for (const auto& c : pi.concats) total += flat3(c.pooled_shape);
    Tensor in({static_cast<int>(total)});
    std::memcpy(in.data(), main.data(), sizeof(float) * static_cast<size_t>(main.size()));
    int64_t off = main.size();
    for (const auto& c : pi.concats) {
        const Tensor& src = c.source_pos < 0 ? net_input : outs[static_cast<size_t>(c.source_pos)];
        Tensor pooled = pool_chain_forward(src, c);
        std::memcpy(in.data() + off, pooled.data(), sizeof(float) * static_cast<size_t>(pooled.size()));
        off += pooled.size();
    }
    return in;
}

void add_into(Tensor& dst, const Tensor& src, const std::vector<int>& shape) {
    if (dst.empty()) dst = Tensor(shape);
    simd::active().add(src.data(), dst.data(), static_cast<size_t>(src.size()));
}

}  // namespace

// ---- Analog execution ----------------------------------------------------------

Tensor ann_forward_range(const Network& net, const Tensor& input, size_t begin, size_t end, AnnTrace* trace) {
    const auto info = analyze_plan(net);
    const auto& plan = net.plan;
    if (trace) {
        trace->inputs.assign(plan.size(), {});
        trace->currents.assign(plan.size(), {});
        trace->outputs.assign(plan.size(), {});
    }
    std::vector<Tensor> outs(plan.size());
    Tensor cur = input;
    for (size_t pos = begin; pos < end; ++pos) {
        const auto& inv = plan[pos];
        const auto& l = net.layer(inv.layer);
        Tensor out;
        switch (l.kind) {
            case LayerKind::Conv: {
                Tensor in_map = as_map(cur, inv.in_shape);
                Tensor current = conv2d_forward(in_map, net.weights[static_cast<size_t>(inv.layer)], l.conv.stride,
                                                l.conv.pad);
                for (const auto& a : info[pos].adds) {
                    const Tensor& src = a.source_pos < 0 ? input : outs[static_cast<size_t>(a.source_pos)];
                    add_zero_padded(as_map(src, a.shape), current);
                }
                if (trace) {
                    trace->inputs[pos] = in_map;
                    trace->currents[pos] = current;
                }
                out = inv.is_head ? std::move(current) : relu(current);
                break;
            }
            case LayerKind::Pool: {
                out = avgpool_forward(as_map(cur, inv.in_shape), l.pool.p, l.pool.stride);
                if (trace) trace->inputs[pos] = cur;
                break;
            }
            case LayerKind::FC: {
                Tensor flat = cur.rank() == 1 ? cur : cur.reshaped({static_cast<int>(cur.size())});
                Tensor in_vec = build_fc_input(flat, info[pos], outs, input);
                Tensor current = fc_forward(in_vec, net.weights[static_cast<size_t>(inv.layer)]);
                if (trace) {
                    trace->inputs[pos] = in_vec;
                    trace->currents[pos] = current;
                }
                out = inv.is_head ? std::move(current) : relu(current);
                break;
            }
        }
        outs[pos] = out;
        if (trace) trace->outputs[pos] = out;
        cur = std::move(out);
    }
    return cur;
}

Tensor ann_forward(const Network& net, const Tensor& input, AnnTrace* trace) {
    return ann_forward_range(net, input, 0, net.plan.size(), trace);
}

void ann_backward_range(const Network& net, const AnnTrace& trace, size_t begin, size_t end,
                        const Tensor& grad_seed, GradBuffers& grads, Tensor* grad_input,
                        const Tensor* head_input_extra) {
    const auto info = analyze_plan(net);
    const auto& plan = net.plan;
    std::vector<Tensor> g_out(plan.size());
    Tensor g_input;  // gradient wrt the range input

    g_out[end - 1] = grad_seed;

    auto route_to_producer = [&](size_t pos, const Tensor& g, const std::vector<int>& shape) {
        if (pos == begin)
            add_into(g_input, g, shape);
        else
            add_into(g_out[pos - 1], g, shape);
    };

    for (size_t pos = end; pos-- > begin;) {
        const auto& inv = plan[pos];
        const auto& l = net.layer(inv.layer);
        if (g_out[pos].empty()) continue;
        Tensor g = std::move(g_out[pos]);
        switch (l.kind) {
            case LayerKind::Pool: {
                Tensor gi = avgpool_backward(as_map(g, inv.out_shape), arr3(inv.in_shape), l.pool.p, l.pool.stride);
                route_to_producer(pos, gi, arr3(inv.in_shape));
                break;
            }
            case LayerKind::Conv: {
                Tensor g_cur = inv.is_head ? as_map(g, inv.out_shape)
                                           : relu_backward(trace.currents[pos], as_map(g, inv.out_shape));
                for (const auto& a : info[pos].adds) {
                    if (a.source_pos < 0) continue;  // gradient into raw input is not tracked
                    // Channel slice of the additive injection.
                    Tensor gs(arr3(a.shape));
                    const int plane = a.shape[1] * a.shape[2];
                    std::memcpy(gs.data(), g_cur.data(), sizeof(float) * static_cast<size_t>(a.shape[0]) * plane);
                    add_into(g_out[static_cast<size_t>(a.source_pos)], gs, arr3(a.shape));
                }
                auto [gi, gw] = conv2d_backward(g_cur, trace.inputs[pos], net.weights[static_cast<size_t>(inv.layer)],
                                                l.conv.stride, l.conv.pad);
                grads.accumulate(pos, gw);
                route_to_producer(pos, gi, arr3(inv.in_shape));
                break;
            }
            case LayerKind::FC: {
                Tensor g_vec = g.rank() == 1 ? g : g.reshaped({static_cast<int>(g.size())});
                Tensor g_cur = inv.is_head ? std::move(g_vec) : relu_backward(trace.currents[pos], g_vec);
                auto [giv, gw] = fc_backward(g_cur, trace.inputs[pos], net.weights[static_cast<size_t>(inv.layer)]);
                grads.accumulate(pos, gw);
                if (inv.is_head && head_input_extra)
                    simd::active().add(head_input_extra->data(), giv.data(), static_cast<size_t>(giv.size()));
                const auto& pi = info[pos];
                Tensor g_main({static_cast<int>(pi.main_len)});
                std::memcpy(g_main.data(), giv.data(), sizeof(float) * static_cast<size_t>(pi.main_len));
                // Main path flows to the producing invocation in its own shape.
                if (pos == begin) {
                    add_into(g_input, g_main, {static_cast<int>(pi.main_len)});
                } else {
                    const auto& prev_shape = plan[pos - 1].out_shape;
                    add_into(g_out[pos - 1], g_main.reshaped(arr3(prev_shape)), arr3(prev_shape));
                }
                int64_t off = pi.main_len;
                for (const auto& c : pi.concats) {
                    const int64_t len = flat3(c.pooled_shape);
                    Tensor slice({static_cast<int>(len)});
                    std::memcpy(slice.data(), giv.data() + off, sizeof(float) * static_cast<size_t>(len));
                    off += len;
                    Tensor gsrc = pool_chain_backward(slice, c);
                    if (c.source_pos >= 0) add_into(g_out[static_cast<size_t>(c.source_pos)], gsrc, arr3(c.src_shape));
                }
                break;
            }
        }
    }
    if (grad_input) *grad_input = std::move(g_input);
}

// ---- Temporal execution ---------------------------------------------------------

TemporalEngine::TemporalEngine(const Network& net, const TemporalOptions& opts) : net_(net), opts_(opts) {
    if (opts.T < 1) throw InputError("temporal execution needs T >= 1, got " + std::to_string(opts.T));
    const auto& plan = net.plan;
    spiking_.assign(plan.size(), 0);
    for (size_t pos = 0; pos + 1 < plan.size(); ++pos) {
        const auto& l = net.layer(plan[pos].layer);
        if (!l.weighted()) continue;
        const bool spk = l.neuron == NeuronKind::LIF || l.neuron == NeuronKind::IF ||
                         (opts.analog_as_if && l.neuron == NeuronKind::ReLU);
        spiking_[pos] = spk ? 1 : 0;
    }
    size_t first = plan.size() - 1;
    for (size_t pos = 0; pos < plan.size(); ++pos)
        if (spiking_[pos]) {
            first = pos;
            break;
        }
    suffix_begin_ = first;
    if (!net.has_spiking() && !opts.analog_as_if)
        throw ConfigError("temporal execution requires at least one spiking layer");

    states_.resize(plan.size());
    for (size_t pos = suffix_begin_; pos + 1 < plan.size(); ++pos) {
        if (!spiking_[pos]) continue;
        const auto& inv = plan[pos];
        const auto& l = net.layer(inv.layer);
        const bool integrate_only = l.neuron == NeuronKind::IF || opts.analog_as_if;
        const float alpha = integrate_only ? 1.0f : opts.alpha;
        const float thr = net.thresholds[static_cast<size_t>(inv.layer)][static_cast<size_t>(inv.unroll_index - 1)];
        states_[pos] = NeuronState::make(arr3(inv.out_shape), alpha, {thr}, opts.refractory);
        states_[pos].reset_to_zero = opts.reset_to_zero;
    }
}

Tensor TemporalEngine::step_input(const Tensor& image, Rng& rng, int t, Tensor& scratch) const {
    if (opts_.input_train) {
        if (t >= opts_.input_train->T) throw InputError("input spike train shorter than T");
        return opts_.input_train->step(t);
    }
    if (scratch.empty()) scratch = Tensor(image.shape());
    poisson_encode_step(image, rng, opts_.rate_factor, scratch);
    return scratch;
}

TemporalResult TemporalEngine::run(const Tensor& image, Tape* tape) {
    const auto& plan = net_.plan;
    const auto info = analyze_plan(net_);
    const size_t head = net_.head_pos();

    // A full run executes everything after the first spiking layer per step,
    // so analog layers must form a prefix there; taps and feature extraction
    // stop earlier and validate their own ranges.
    for (size_t pos = suffix_begin_; pos < head; ++pos) {
        const auto& l = net_.layer(plan[pos].layer);
        if (l.weighted() && !spiking_[pos])
            throw ConfigError("analog layer '" + l.name + "' appears after the first spiking layer; " +
                              "analog layers must form a prefix");
    }
    if (suffix_begin_ > 0) {
        for (size_t pos = suffix_begin_; pos < plan.size(); ++pos) {
            for (const auto& a : info[pos].adds)
                if (a.source_pos < static_cast<int>(suffix_begin_))
                    throw ConfigError("skip into the spiking suffix from the analog prefix or the input is not supported");
            for (const auto& c : info[pos].concats)
                if (c.source_pos < static_cast<int>(suffix_begin_))
                    throw ConfigError("skip into the spiking suffix from the analog prefix or the input is not supported");
        }
    }

    TemporalResult res;
    res.input_activity.assign(plan.size(), 0.0);
    res.peak_input_activity.assign(plan.size(), 0.0);
    res.output_activity.assign(plan.size(), 0.0);

    for (size_t pos = suffix_begin_; pos < head; ++pos)
        if (spiking_[pos]) states_[pos].reset();

    Tensor prefix_out;
    if (suffix_begin_ > 0) {
        AnnTrace* trace = tape ? &tape->prefix_trace : nullptr;
        prefix_out = ann_forward_range(net_, image, 0, suffix_begin_, trace);
        if (!prefix_out.all_finite()) throw TrainError("non-finite activation in analog prefix");
    } else {
        // Poisson-coded input path: the image must already be a rate map.
        if (!opts_.input_train) {
            const float* p = image.data();
            for (int64_t i = 0; i < image.size(); ++i)
                if (!(p[i] >= 0.0f && p[i] <= 1.0f))
                    throw InputError("pixel value outside [0,1]; normalize before encoding");
        }
    }

    if (tape) {
        tape->T = opts_.T;
        tape->suffix_begin = suffix_begin_;
        tape->inputs.assign(static_cast<size_t>(opts_.T), std::vector<Tensor>(plan.size()));
        tape->pre_reset.assign(static_cast<size_t>(opts_.T), std::vector<Tensor>(plan.size()));
        tape->prefix_out = prefix_out;
    }

    const auto& kr = simd::active();
    Rng rng(opts_.encode_seed);
    Tensor encode_scratch;
    std::vector<Tensor> outs(plan.size());
    const int64_t head_len = plan[head].in_shape[0];
    res.counts = Tensor({static_cast<int>(head_len)});

    for (int t = 0; t < opts_.T; ++t) {
        Tensor cur = suffix_begin_ > 0 ? prefix_out : step_input(image, rng, t, encode_scratch);
        const Tensor input_frame = cur;  // this step's encoded frame (skip sources)
        bool stopped = false;
        for (size_t pos = suffix_begin_; pos < head; ++pos) {
            const auto& inv = plan[pos];
            const auto& l = net_.layer(inv.layer);
            if (l.kind == LayerKind::Pool) {
                outs[pos] = avgpool_forward(as_map(cur, inv.in_shape), l.pool.p, l.pool.stride);
                cur = outs[pos];
                continue;
            }
            // Weighted spiking invocation.
            Tensor in_consumed;
            Tensor current;
            if (l.kind == LayerKind::Conv) {
                in_consumed = as_map(cur, inv.in_shape);
                current = conv2d_forward(in_consumed, net_.weights[static_cast<size_t>(inv.layer)], l.conv.stride,
                                         l.conv.pad);
                for (const auto& a : info[pos].adds) {
                    const Tensor& src = a.source_pos < 0 ? input_frame : outs[static_cast<size_t>(a.source_pos)];
                    add_zero_padded(as_map(src, a.shape), current);
                }
            } else {  // FC
                Tensor flat = cur.rank() == 1 ? cur : cur.reshaped({static_cast<int>(cur.size())});
                in_consumed = build_fc_input(flat, info[pos], outs, input_frame);
                current = fc_forward(in_consumed, net_.weights[static_cast<size_t>(inv.layer)])
                              .reshaped(arr3(inv.out_shape));
            }

            if (opts_.collect_activity) {
                const double frac =
                    static_cast<double>(kr.count_nonzero(in_consumed.data(), static_cast<size_t>(in_consumed.size()))) /
                    static_cast<double>(in_consumed.size());
                res.input_activity[pos] += frac;
                res.peak_input_activity[pos] = std::max(res.peak_input_activity[pos], frac);
            }

            if (static_cast<int>(pos) == opts_.frontier) {
                const float mx = kr.reduce_max(current.data(), static_cast<size_t>(current.size()));
                res.frontier_step_max.push_back(mx);
                if (mx > res.frontier_max) res.frontier_max = mx;
                stopped = true;
                break;
            }

            Tensor pre;
            Tensor spikes = lif_step(states_[pos], current, 1, tape ? &pre : nullptr);
            if (tape) {
                tape->inputs[static_cast<size_t>(t)][pos] = std::move(in_consumed);
                tape->pre_reset[static_cast<size_t>(t)][pos] = std::move(pre);
            }
            if (opts_.collect_activity)
                res.output_activity[pos] +=
                    static_cast<double>(kr.count_nonzero(spikes.data(), static_cast<size_t>(spikes.size()))) /
                    static_cast<double>(spikes.size());
            outs[pos] = std::move(spikes);
            cur = outs[pos];
        }
        if (stopped) continue;

        // Head input for this step (concats handled like any FC).
        Tensor flat = cur.rank() == 1 ? cur : cur.reshaped({static_cast<int>(cur.size())});
        Tensor h_t = build_fc_input(flat, info[head], outs, input_frame);
        if (opts_.collect_activity) {
            const double frac = static_cast<double>(kr.count_nonzero(h_t.data(), static_cast<size_t>(h_t.size()))) /
                                static_cast<double>(h_t.size());
            res.input_activity[head] += frac;
            res.peak_input_activity[head] = std::max(res.peak_input_activity[head], frac);
        }
        kr.add(h_t.data(), res.counts.data(), static_cast<size_t>(head_len));
    }

    for (auto& v : res.input_activity) v /= opts_.T;
    for (auto& v : res.output_activity) v /= opts_.T;

    if (opts_.frontier < 0) {
        res.logits = fc_forward(res.counts, net_.weights[static_cast<size_t>(plan[head].layer)]);
        if (!res.logits.all_finite()) throw TrainError("non-finite logits after temporal run");
        if (tape) tape->counts = res.counts;
    }
    return res;
}

void TemporalEngine::backward(const Tape& tape, const Tensor& grad_logits, GradBuffers& grads,
                              const Tensor* counts_extra) const {
    const auto& plan = net_.plan;
    const auto info = analyze_plan(net_);
    const size_t head = net_.head_pos();

    // Head weight gradient and loss gradient wrt accumulated counts.
    auto [g_counts, g_w_head] =
        fc_backward(grad_logits, tape.counts, net_.weights[static_cast<size_t>(plan[head].layer)]);
    grads.accumulate(head, g_w_head);
    if (counts_extra) simd::active().add(counts_extra->data(), g_counts.data(), static_cast<size_t>(g_counts.size()));

    // The count is a plain sum over steps, so each step's head input receives
    // g_counts unchanged; precompute the per-step routing once.
    const auto& hi = info[head];
    Tensor g_main_head({static_cast<int>(hi.main_len)});
    std::memcpy(g_main_head.data(), g_counts.data(), sizeof(float) * static_cast<size_t>(hi.main_len));
    Tensor g_main_shaped = g_main_head.reshaped(arr3(plan[head - 1].out_shape));
    std::vector<Tensor> g_concat_srcs;
    {
        int64_t off = hi.main_len;
        for (const auto& c : hi.concats) {
            const int64_t len = flat3(c.pooled_shape);
            Tensor slice({static_cast<int>(len)});
            std::memcpy(slice.data(), g_counts.data() + off, sizeof(float) * static_cast<size_t>(len));
            off += len;
            g_concat_srcs.push_back(pool_chain_backward(slice, c));
        }
    }

    std::vector<Tensor> g_out(plan.size());
    std::vector<Tensor> g_v(plan.size());
    Tensor g_prefix;  // accumulated gradient into the analog prefix output

    for (int t = tape.T - 1; t >= 0; --t) {
        for (size_t pos = tape.suffix_begin; pos < head; ++pos)
            if (!g_out[pos].empty()) g_out[pos].fill(0.0f);

        add_into(g_out[head - 1], g_main_shaped, arr3(plan[head - 1].out_shape));
        for (size_t ci = 0; ci < hi.concats.size(); ++ci) {
            const auto& c = hi.concats[ci];
            if (c.source_pos >= 0)
                add_into(g_out[static_cast<size_t>(c.source_pos)], g_concat_srcs[ci], arr3(c.src_shape));
        }

        for (size_t pos = head; pos-- > tape.suffix_begin;) {
            const auto& inv = plan[pos];
            const auto& l = net_.layer(inv.layer);
            if (g_out[pos].empty()) continue;
            if (l.kind == LayerKind::Pool) {
                Tensor gi = avgpool_backward(as_map(g_out[pos], inv.out_shape), arr3(inv.in_shape), l.pool.p,
                                             l.pool.stride);
                if (pos == tape.suffix_begin)
                    add_into(g_prefix, gi, arr3(inv.in_shape));
                else
                    add_into(g_out[pos - 1], gi, arr3(inv.in_shape));
                continue;
            }

            // Spiking invocation: surrogate through the firing nonlinearity,
            // exact path through the subtraction reset and the leak.
            const float thr = states_[pos].thresholds[0];
            const float alpha = states_[pos].alpha;
            const Tensor& pre = tape.pre_reset[static_cast<size_t>(t)][pos];
            Tensor gu(pre.shape());
            {
                const float* gs = g_out[pos].data();
                float* gvp = nullptr;
                if (g_v[pos].empty()) g_v[pos] = Tensor(pre.shape());
                gvp = g_v[pos].data();
                const float* u = pre.data();
                float* gup = gu.data();
                const float gamma = opts_.gamma;
                const int64_t n = pre.size();
                for (int64_t i = 0; i < n; ++i) {
                    const float sg = surrogate_grad_scalar(u[i], thr, gamma);
                    const float g = gs[i] * sg + gvp[i] * (1.0f - thr * sg);
                    gup[i] = g;
                    gvp[i] = alpha * g;
                }
            }

            if (l.kind == LayerKind::Conv) {
                for (const auto& a : info[pos].adds) {
                    if (a.source_pos < 0) continue;
                    Tensor gs(arr3(a.shape));
                    const int plane = a.shape[1] * a.shape[2];
                    std::memcpy(gs.data(), gu.data(), sizeof(float) * static_cast<size_t>(a.shape[0]) * plane);
                    add_into(g_out[static_cast<size_t>(a.source_pos)], gs, arr3(a.shape));
                }
                auto [gi, gw] = conv2d_backward(gu, tape.inputs[static_cast<size_t>(t)][pos],
                                                net_.weights[static_cast<size_t>(inv.layer)], l.conv.stride, l.conv.pad);
                grads.accumulate(pos, gw);
                if (pos == tape.suffix_begin)
                    add_into(g_prefix, gi, arr3(inv.in_shape));
                else
                    add_into(g_out[pos - 1], gi, arr3(inv.in_shape));
            } else {
                auto [giv, gw] = fc_backward(gu, tape.inputs[static_cast<size_t>(t)][pos],
                                             net_.weights[static_cast<size_t>(inv.layer)]);
                grads.accumulate(pos, gw);
                const auto& pi = info[pos];
                Tensor g_main({static_cast<int>(pi.main_len)});
                std::memcpy(g_main.data(), giv.data(), sizeof(float) * static_cast<size_t>(pi.main_len));
                if (pos == tape.suffix_begin) {
                    add_into(g_prefix, g_main, {static_cast<int>(pi.main_len)});
                } else {
                    const auto& prev_shape = plan[pos - 1].out_shape;
                    add_into(g_out[pos - 1], g_main.reshaped(arr3(prev_shape)), arr3(prev_shape));
                }
                int64_t off = pi.main_len;
                for (const auto& c : pi.concats) {
                    const int64_t len = flat3(c.pooled_shape);
                    Tensor slice({static_cast<int>(len)});
                    std::memcpy(slice.data(), giv.data() + off, sizeof(float) * static_cast<size_t>(len));
                    off += len;
                    Tensor gsrc = pool_chain_backward(slice, c);
                    if (c.source_pos >= 0) add_into(g_out[static_cast<size_t>(c.source_pos)], gsrc, arr3(c.src_shape));
                }
            }
        }
    }

    // Analog prefix receives the time-summed gradient once.
    if (tape.suffix_begin > 0 && !g_prefix.empty()) {
        const auto& boundary_shape = plan[tape.suffix_begin - 1].out_shape;
        ann_backward_range(net_, tape.prefix_trace, 0, tape.suffix_begin,
                           g_prefix.size() == flat3(boundary_shape) ? as_map(g_prefix, boundary_shape) : g_prefix,
                           grads, nullptr);
    }
}

std::vector<SpikeTrain> record_output_trains(const Network& net, const Tensor& image, const TemporalOptions& opts,
                                             const std::vector<size_t>& positions) {
    TemporalEngine engine(net, opts);
    size_t last = 0;
    for (size_t pos : positions) {
        if (pos < engine.suffix_begin()) throw ConfigError("recorded position must lie in the temporal suffix");
        last = std::max(last, pos);
    }
    const auto& plan = net.plan;
    const auto info = analyze_plan(net);
    if (last + 1 >= plan.size()) throw ConfigError("cannot record the classifier head as a train");
    for (size_t pos = engine.suffix_begin(); pos <= last; ++pos) {
        const auto& l = net.layer(plan[pos].layer);
        if (l.weighted() && !engine.spiking_at(pos))
            throw ConfigError("analog layer '" + l.name + "' inside the recorded range is not supported");
    }

    // Dedicated replay loop that stops after the deepest tap and captures each
    // tapped output per step. Streams identical randomness to a full run with
    // these options.
    std::vector<NeuronState> states(plan.size());
    for (size_t p = engine.suffix_begin(); p + 1 < plan.size(); ++p) {
        if (!engine.spiking_at(p)) continue;
        const auto& inv = plan[p];
        const auto& l = net.layer(inv.layer);
        const bool integrate_only = l.neuron == NeuronKind::IF || opts.analog_as_if;
        states[p] = NeuronState::make({inv.out_shape[0], inv.out_shape[1], inv.out_shape[2]},
                                      integrate_only ? 1.0f : opts.alpha,
                                      {net.thresholds[static_cast<size_t>(inv.layer)]
                                                     [static_cast<size_t>(inv.unroll_index - 1)]},
                                      opts.refractory);
        states[p].reset_to_zero = opts.reset_to_zero;
    }

    Rng rng(opts.encode_seed);
    Tensor scratch;
    std::vector<Tensor> outs(plan.size());
    std::vector<SpikeTrain> trains(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        const auto& s = plan[positions[i]].out_shape;
        trains[i].T = opts.T;
        trains[i].data = Tensor({opts.T, s[0], s[1], s[2]});
    }

    for (int t = 0; t < opts.T; ++t) {
        Tensor cur;
        if (opts.input_train)
            cur = opts.input_train->step(t);
        else {
            if (scratch.empty()) scratch = Tensor(image.shape());
            poisson_encode_step(image, rng, opts.rate_factor, scratch);
            cur = scratch;
        }
        const Tensor input_frame = cur;
        for (size_t p = engine.suffix_begin(); p <= last; ++p) {
            const auto& inv = plan[p];
            const auto& l = net.layer(inv.layer);
            if (l.kind == LayerKind::Pool) {
                outs[p] = avgpool_forward(as_map(cur, inv.in_shape), l.pool.p, l.pool.stride);
            } else if (l.kind == LayerKind::Conv) {
                Tensor current =
                    conv2d_forward(as_map(cur, inv.in_shape), net.weights[static_cast<size_t>(inv.layer)],
                                   l.conv.stride, l.conv.pad);
                for (const auto& a : info[p].adds) {
                    const Tensor& src = a.source_pos < 0 ? input_frame : outs[static_cast<size_t>(a.source_pos)];
                    add_zero_padded(as_map(src, a.shape), current);
                }
                outs[p] = lif_step(states[p], current, 1);
            } else {
                Tensor flat = cur.rank() == 1 ? cur : cur.reshaped({static_cast<int>(cur.size())});
                Tensor in_vec = build_fc_input(flat, info[p], outs, input_frame);
                Tensor current = fc_forward(in_vec, net.weights[static_cast<size_t>(inv.layer)])
                                     .reshaped({inv.out_shape[0], inv.out_shape[1], inv.out_shape[2]});
                outs[p] = lif_step(states[p], current, 1);
            }
            cur = outs[p];
        }
        for (size_t i = 0; i < positions.size(); ++i) {
            const int64_t plane = flat3(plan[positions[i]].out_shape);
            std::memcpy(trains[i].data.data() + static_cast<size_t>(t) * plane, outs[positions[i]].data(),
                        sizeof(float) * static_cast<size_t>(plane));
        }
    }
    return trains;
}

SpikeTrain record_output_train(const Network& net, const Tensor& image, const TemporalOptions& opts, size_t pos) {
    return std::move(record_output_trains(net, image, opts, {pos})[0]);
}

size_t first_fc_pos(const Network& net) {
    for (size_t pos = 0; pos < net.plan.size(); ++pos)
        if (net.layer(net.plan[pos].layer).kind == LayerKind::FC) return pos;
    return net.plan.size();
}

std::vector<int> feature_shape(const Network& net, size_t boundary_pos) {
    const auto info = analyze_plan(net);
    const auto& prev = net.plan[boundary_pos - 1].out_shape;
    int channels = prev[0];
    for (const auto& c : info[boundary_pos].concats) {
        if (c.pooled_shape[1] != prev[1] || c.pooled_shape[2] != prev[2])
            throw ConfigError("feature concat spatial mismatch at the classifier boundary");
        channels += c.pooled_shape[0];
    }
    return {channels, prev[1], prev[2]};
}

Tensor accumulate_features(const Network& net, const Tensor& image, const TemporalOptions& opts,
                           size_t boundary_pos, std::vector<double>* activity_out) {
    const auto& plan = net.plan;
    const auto info = analyze_plan(net);
    TemporalEngine engine(net, opts);
    if (engine.suffix_begin() != 0)
        throw ConfigError("feature accumulation expects the whole feature stack to be spiking");
    for (size_t p = 0; p < boundary_pos; ++p) {
        const auto& l = net.layer(plan[p].layer);
        if (l.weighted() && !engine.spiking_at(p))
            throw ConfigError("analog layer '" + l.name + "' before the classifier boundary is not supported");
    }
    if (activity_out) activity_out->assign(plan.size(), 0.0);

    std::vector<NeuronState> states(plan.size());
    for (size_t p = 0; p < boundary_pos; ++p) {
        if (!engine.spiking_at(p)) continue;
        const auto& inv = plan[p];
        const auto& l = net.layer(inv.layer);
        const bool integrate_only = l.neuron == NeuronKind::IF || opts.analog_as_if;
        states[p] = NeuronState::make({inv.out_shape[0], inv.out_shape[1], inv.out_shape[2]},
                                      integrate_only ? 1.0f : opts.alpha,
                                      {net.thresholds[static_cast<size_t>(inv.layer)]
                                                     [static_cast<size_t>(inv.unroll_index - 1)]},
                                      opts.refractory);
        states[p].reset_to_zero = opts.reset_to_zero;
    }

    const std::vector<int> fshape = feature_shape(net, boundary_pos);
    Tensor features(fshape);
    Rng rng(opts.encode_seed);
    Tensor scratch;
    std::vector<Tensor> outs(plan.size());
    const auto& kr = simd::active();

    for (int t = 0; t < opts.T; ++t) {
        Tensor cur;
        if (opts.input_train)
            cur = opts.input_train->step(t);
        else {
            if (scratch.empty()) scratch = Tensor(image.shape());
            poisson_encode_step(image, rng, opts.rate_factor, scratch);
            cur = scratch;
        }
        Tensor input_frame = cur;
        for (size_t p = 0; p < boundary_pos; ++p) {
            const auto& inv = plan[p];
            const auto& l = net.layer(inv.layer);
            if (l.kind == LayerKind::Pool) {
                outs[p] = avgpool_forward(as_map(cur, inv.in_shape), l.pool.p, l.pool.stride);
            } else if (l.kind == LayerKind::Conv) {
                if (activity_out)
                    (*activity_out)[p] += static_cast<double>(kr.count_nonzero(cur.data(),
                                                                               static_cast<size_t>(cur.size()))) /
                                          static_cast<double>(cur.size());
                Tensor current = conv2d_forward(as_map(cur, inv.in_shape),
                                                net.weights[static_cast<size_t>(inv.layer)], l.conv.stride, l.conv.pad);
                for (const auto& a : info[p].adds) {
                    const Tensor& src = a.source_pos < 0 ? input_frame : outs[static_cast<size_t>(a.source_pos)];
                    add_zero_padded(as_map(src, a.shape), current);
                }
                outs[p] = lif_step(states[p], current, 1);
            } else {
                throw ConfigError("fully-connected layer before the classifier boundary is not supported");
            }
            cur = outs[p];
        }
        // Channel-concatenated feature frame: main path then concat sources.
        float* dst = features.data();
        kr.add(cur.data(), dst, static_cast<size_t>(cur.size()));
        int64_t off = cur.size();
        for (const auto& c : info[boundary_pos].concats) {
            const Tensor& src = c.source_pos < 0 ? input_frame : outs[static_cast<size_t>(c.source_pos)];
            Tensor pooled = pool_chain_forward(src, c);
            kr.add(pooled.data(), dst + off, static_cast<size_t>(pooled.size()));
            off += pooled.size();
        }
    }
    if (activity_out)
        for (auto& v : *activity_out) v /= opts.T;
    return features;
}

}  // namespace snnwb
