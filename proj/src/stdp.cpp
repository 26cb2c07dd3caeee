#include "snnwb/stdp.hpp"

#include <cmath>
#include <cstring>

#include "snnwb/errors.hpp"
#include "snnwb/ops.hpp"
#include "snnwb/parallel.hpp"
#include "snnwb/simd.hpp"

namespace snnwb {

void StdpConfig::validate() const {
    if (!(eta > 0.0)) throw ConfigError("plasticity rate must be positive");
    if (!(offset > 0.0 && offset < 1.0)) throw ConfigError("pairing offset must lie in (0,1)");
    if (!(effective_tau() > 0.0)) throw ConfigError("time constant must be positive");
    if (T < 1) throw ConfigError("presentation window must be at least one step");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(w_min < w_max)) throw ConfigError("weight bounds must satisfy w_min < w_max");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout probability must lie in [0,1)");
}

double stdp_delta(int t_post, int t_pre, const StdpConfig& cfg) {
    const double lag = static_cast<double>(t_post - t_pre);
    return cfg.eta * (std::exp(-lag / cfg.effective_tau()) - cfg.offset);
}

double stdp_zero_crossing(const StdpConfig& cfg) { return cfg.effective_tau() * std::log(1.0 / cfg.offset); }

void relax_thresholds(Tensor& thresholds, float base, double decay) {
    float* thr = thresholds.data();
    const float d = static_cast<float>(decay);
    for (int64_t i = 0; i < thresholds.size(); ++i) thr[i] -= d * (thr[i] - base);
}

namespace {

std::vector<int> arr3v(const std::array<int, 3>& a) { return {a[0], a[1], a[2]}; }

struct SampleAccum {
    // Per unroll step: summed per-sample deltas and this sample's event counts.
    std::vector<std::vector<double>> acc;
    std::vector<std::vector<int32_t>> cnt;
    int64_t pairings = 0;
    int64_t post_spikes = 0;
    double threshold_sum = 0.0;
    int64_t threshold_n = 0;
};

}  // namespace

StdpLayerTrainer::StdpLayerTrainer(Network& net, int layer_index, const StdpConfig& cfg)
    : net_(net), layer_(layer_index), cfg_(cfg) {
    cfg_.validate();
    const auto& l = net.layer(layer_index);
    if (l.kind != LayerKind::Conv)
        throw ConfigError("layerwise plasticity targets convolutional layers; '" + l.name + "' is not one");
    for (const auto& g : net.spec.backres)
        for (const auto& m : g.members)
            if (net.spec.layer_index(m) == layer_index && g.members.size() > 1)
                throw ConfigError("layerwise training of multi-layer repeat groups is not supported");
    group_n_ = net.spec.unroll_count(layer_index);
    for (size_t pos = 0; pos < net.plan.size(); ++pos)
        if (net.plan[pos].layer == layer_index) positions_.push_back(pos);
    if (positions_.empty()) throw ConfigError("layer '" + l.name + "' does not appear in the execution plan");
}

void StdpLayerTrainer::present(const Dataset& batch, uint64_t presentation_seed) {
    const auto info = analyze_plan(net_);
    const auto& l = net_.layer(layer_);
    const Tensor& W = net_.weights[static_cast<size_t>(layer_)];
    const int M = l.conv.out_ch, C = l.conv.in_ch, k = l.conv.k;
    const int stride = l.conv.stride, pad = l.conv.pad;
    const size_t p0 = positions_.front();
    const auto& in_shape = net_.plan[p0].in_shape;
    const auto& out_shape = net_.plan[p0].out_shape;
    const int IH = in_shape[1], IW = in_shape[2];
    const int OH = out_shape[1], OW = out_shape[2];
    const int64_t wcount = W.size();

    // Tap positions whose trains this layer consumes: the main input (unless
    // it is the network input) and any additive skip sources.
    std::vector<size_t> taps;
    const bool input_fed = p0 == 0;
    if (!input_fed) taps.push_back(p0 - 1);
    bool needs_encoded = input_fed;
    for (size_t m = 0; m < positions_.size(); ++m) {
        for (const auto& a : info[positions_[m]].adds) {
            if (a.source_pos < 0) {
                needs_encoded = true;
            } else {
                if (static_cast<size_t>(a.source_pos) >= p0)
                    throw ConfigError("additive skip from inside or after the trained block is not supported");
                taps.push_back(static_cast<size_t>(a.source_pos));
            }
        }
    }
    std::sort(taps.begin(), taps.end());
    taps.erase(std::unique(taps.begin(), taps.end()), taps.end());

    const size_t chunks = parallel_chunk_count(static_cast<size_t>(batch.size()));
    std::vector<SampleAccum> chunk_acc(chunks);
    for (auto& ca : chunk_acc) {
        ca.acc.assign(static_cast<size_t>(group_n_), std::vector<double>(static_cast<size_t>(wcount), 0.0));
        ca.cnt.assign(static_cast<size_t>(group_n_), {});
    }

    parallel_for_chunks(static_cast<size_t>(batch.size()), [&](size_t chunk, size_t begin, size_t end) {
        SampleAccum& ca = chunk_acc[chunk];
        for (size_t s = begin; s < end; ++s) {
            const uint64_t sample_seed = Rng::mix(presentation_seed, static_cast<uint64_t>(s));
            const Tensor image = batch.image(static_cast<int>(s));

            TemporalOptions topts;
            topts.T = cfg_.T;
            topts.alpha = cfg_.alpha;
            topts.refractory = cfg_.refractory;
            topts.rate_factor = cfg_.rate_factor;
            topts.encode_seed = sample_seed;

            // Frozen-prefix trains, regenerated through the same streams.
            std::vector<SpikeTrain> tap_trains;
            if (!taps.empty()) tap_trains = record_output_trains(net_, image, topts, taps);
            SpikeTrain encoded;
            if (needs_encoded) {
                Rng enc(sample_seed);
                encoded = poisson_encode(image, cfg_.T, enc, cfg_.rate_factor);
            }
            auto train_of = [&](int source_pos) -> const SpikeTrain& {
                if (source_pos < 0) return encoded;
                const auto it = std::lower_bound(taps.begin(), taps.end(), static_cast<size_t>(source_pos));
                return tap_trains[static_cast<size_t>(it - taps.begin())];
            };
            const SpikeTrain& pre_train = input_fed ? encoded : tap_trains[0];

            // Per-step simulation state.
            Rng sample_rng(Rng::mix(sample_seed, 0x73746470ULL));
            std::vector<NeuronState> states(static_cast<size_t>(group_n_));
            std::vector<std::vector<char>> dropped(static_cast<size_t>(group_n_),
                                                   std::vector<char>(static_cast<size_t>(M), 0));
            std::vector<std::vector<int>> last_pre(static_cast<size_t>(group_n_),
                                                   std::vector<int>(static_cast<size_t>(C) * IH * IW, -1));
            for (int m = 0; m < group_n_; ++m) {
                states[static_cast<size_t>(m)] =
                    NeuronState::make(arr3v(out_shape), cfg_.alpha, {cfg_.base_threshold}, cfg_.refractory);
                states[static_cast<size_t>(m)].adaptive_thresholds =
                    Tensor::full(arr3v(out_shape), cfg_.base_threshold);
                for (int map = 0; map < M; ++map)
                    dropped[static_cast<size_t>(m)][static_cast<size_t>(map)] =
                        sample_rng.bernoulli(static_cast<float>(cfg_.dropout_p)) ? 1 : 0;
            }

            std::vector<std::vector<double>> sample_acc(static_cast<size_t>(group_n_));
            std::vector<std::vector<int32_t>> sample_cnt(static_cast<size_t>(group_n_));
            for (int m = 0; m < group_n_; ++m) {
                sample_acc[static_cast<size_t>(m)].assign(static_cast<size_t>(wcount), 0.0);
                sample_cnt[static_cast<size_t>(m)].assign(static_cast<size_t>(wcount), 0);
            }

            const int out_plane = OH * OW;
            for (int t = 0; t < cfg_.T; ++t) {
                Tensor frame = pre_train.step(t);
                for (int m = 0; m < group_n_; ++m) {
                    NeuronState& st = states[static_cast<size_t>(m)];
                    auto& lp = last_pre[static_cast<size_t>(m)];

                    // Causal pairing sees this step's pre spikes.
                    const float* fp = frame.data();
                    for (size_t i = 0; i < lp.size(); ++i)
                        if (fp[i] > 0.0f) lp[i] = t;

                    // Threshold relaxation toward base, then integration.
                    relax_thresholds(st.adaptive_thresholds, cfg_.base_threshold, cfg_.adapt_decay);

                    Tensor current = conv2d_forward(frame.rank() == 3 ? frame : frame.reshaped(arr3v(in_shape)), W,
                                                    stride, pad);
                    for (const auto& a : info[positions_[static_cast<size_t>(m)]].adds) {
                        const SpikeTrain& src = train_of(a.source_pos);
                        Tensor src_frame = src.step(t);
                        const int plane = out_shape[1] * out_shape[2];
                        for (int c = 0; c < a.shape[0]; ++c)
                            simd::active().add(src_frame.data() + static_cast<size_t>(c) * a.shape[1] * a.shape[2],
                                               current.data() + static_cast<size_t>(c) * plane,
                                               static_cast<size_t>(plane));
                    }
                    // Dropped maps receive no drive for this presentation.
                    for (int map = 0; map < M; ++map)
                        if (dropped[static_cast<size_t>(m)][static_cast<size_t>(map)])
                            std::memset(current.data() + static_cast<size_t>(map) * out_plane, 0,
                                        sizeof(float) * static_cast<size_t>(out_plane));

                    Tensor spikes = lif_step(st, current, 1);

                    // Homeostasis and pairing per post spike.
                    float* thr = st.adaptive_thresholds.data();
                    const float* sp = spikes.data();
                    auto& s_acc = sample_acc[static_cast<size_t>(m)];
                    auto& s_cnt = sample_cnt[static_cast<size_t>(m)];
                    for (int map = 0; map < M; ++map) {
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                const int64_t oi = (static_cast<int64_t>(map) * OH + oy) * OW + ox;
                                if (sp[oi] == 0.0f) continue;
                                thr[oi] += static_cast<float>(cfg_.adapt_delta);
                                ++ca.post_spikes;
                                for (int c = 0; c < C; ++c)
                                    for (int ki = 0; ki < k; ++ki) {
                                        const int iy = oy * stride + ki - pad;
                                        if (iy < 0 || iy >= IH) continue;
                                        for (int kj = 0; kj < k; ++kj) {
                                            const int ix = ox * stride + kj - pad;
                                            if (ix < 0 || ix >= IW) continue;
                                            const int t_pre = lp[(static_cast<size_t>(c) * IH + iy) * IW + ix];
                                            if (t_pre < 0) continue;
                                            const size_t wi =
                                                ((static_cast<size_t>(map) * C + c) * k + ki) * k + kj;
                                            s_acc[wi] += stdp_delta(t, t_pre, cfg_);
                                            ++s_cnt[wi];
                                            ++ca.pairings;
                                        }
                                    }
                            }
                    }

                    // The block's own output drives the next unrolled step.
                    frame = std::move(spikes);
                }
            }

            for (int m = 0; m < group_n_; ++m) {
                auto& dst = ca.acc[static_cast<size_t>(m)];
                auto& s_acc = sample_acc[static_cast<size_t>(m)];
                auto& s_cnt = sample_cnt[static_cast<size_t>(m)];
                for (int64_t w = 0; w < wcount; ++w)
                    if (s_cnt[static_cast<size_t>(w)] > 0)
                        dst[static_cast<size_t>(w)] +=
                            s_acc[static_cast<size_t>(w)] / s_cnt[static_cast<size_t>(w)];
                const auto& thr = states[static_cast<size_t>(m)].adaptive_thresholds;
                for (int64_t i = 0; i < thr.size(); ++i) ca.threshold_sum += thr[i];
                ca.threshold_n += thr.size();
            }
        }
    });

    // Merge chunks in order; apply the averaged update per unroll step.
    Tensor& Wmut = net_.weights[static_cast<size_t>(layer_)];
    int64_t batch_posts = 0;
    double thr_sum = 0.0;
    int64_t thr_n = 0;
    for (const auto& ca : chunk_acc) {
        stats_.pairing_events += ca.pairings;
        stats_.post_spikes += ca.post_spikes;
        batch_posts += ca.post_spikes;
        thr_sum += ca.threshold_sum;
        thr_n += ca.threshold_n;
    }
    for (int m = 0; m < group_n_; ++m) {
        for (int64_t w = 0; w < wcount; ++w) {
            double delta = 0.0;
            for (const auto& ca : chunk_acc) delta += ca.acc[static_cast<size_t>(m)][static_cast<size_t>(w)];
            delta /= batch.size();
            float v = Wmut[w] + static_cast<float>(delta);
            if (v < cfg_.w_min) v = cfg_.w_min;
            if (v > cfg_.w_max) v = cfg_.w_max;
            Wmut[w] = v;
        }
        ++stats_.apply_events;
    }
    if (batch_posts == 0) ++stats_.dead_presentations;
    if (thr_n > 0) stats_.mean_threshold = thr_sum / static_cast<double>(thr_n);
}

std::vector<int> stdp_trainable_layers(const Network& net) {
    std::vector<int> out;
    const size_t boundary = first_fc_pos(net);
    for (size_t pos = 0; pos < boundary; ++pos) {
        const auto& inv = net.plan[pos];
        const auto& l = net.layer(inv.layer);
        if (l.kind != LayerKind::Conv || !inv.spiking) continue;
        if (std::find(out.begin(), out.end(), inv.layer) == out.end()) out.push_back(inv.layer);
    }
    return out;
}

std::vector<StdpLayerReport> train_stdp_features(Network& net, const Dataset& samples, const StdpConfig& cfg) {
    cfg.validate();
    if (samples.size() == 0) throw InputError("layerwise training needs samples");
    std::vector<StdpLayerReport> reports;
    const auto layers = stdp_trainable_layers(net);
    std::vector<int> order(static_cast<size_t>(samples.size()));
    for (int i = 0; i < samples.size(); ++i) order[static_cast<size_t>(i)] = i;

    for (size_t li = 0; li < layers.size(); ++li) {
        StdpLayerTrainer trainer(net, layers[li], cfg);
        uint64_t layer_seed = Rng::mix(cfg.seed, 0x6c617965ULL + li);
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            Rng shuffle_rng(Rng::mix(layer_seed, static_cast<uint64_t>(epoch)));
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.below(i))]);
            int presentation = 0;
            for (int start = 0; start < samples.size(); start += cfg.batch_size, ++presentation) {
                const int bsize = std::min(cfg.batch_size, samples.size() - start);
                std::vector<int> idx(order.begin() + start, order.begin() + start + bsize);
                Dataset batch = samples.subset(idx);
                trainer.present(batch, Rng::mix(layer_seed, (static_cast<uint64_t>(epoch) << 32) |
                                                                static_cast<uint64_t>(presentation)));
            }
        }
        reports.push_back({net.layer(layers[li]).name, trainer.stats()});
    }
    return reports;
}

Dataset extract_feature_dataset(const Network& net, const Dataset& ds, const StdpConfig& cfg) {
    const size_t boundary = first_fc_pos(net);
    if (boundary == net.plan.size()) throw ConfigError("network has no classifier boundary");
    const auto fshape = feature_shape(net, boundary);
    Dataset out;
    out.class_count = ds.class_count;
    out.labels = ds.labels;
    out.images = Tensor({ds.size(), fshape[0], fshape[1], fshape[2]});
    const int64_t plane = static_cast<int64_t>(fshape[0]) * fshape[1] * fshape[2];

    parallel_for(static_cast<size_t>(ds.size()), [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            TemporalOptions topts;
            topts.T = cfg.T;
            topts.alpha = cfg.alpha;
            topts.refractory = cfg.refractory;
            topts.rate_factor = cfg.rate_factor;
            topts.encode_seed = cfg.seed ^ static_cast<uint64_t>(i);
            Tensor f = accumulate_features(net, ds.image(static_cast<int>(i)), topts, boundary);
            std::memcpy(out.images.data() + static_cast<size_t>(i) * plane, f.data(),
                        sizeof(float) * static_cast<size_t>(plane));
        }
    });
    return out;
}

Network classifier_tail(const Network& net) {
    const size_t boundary = first_fc_pos(net);
    if (boundary == net.plan.size()) throw ConfigError("network has no classifier boundary");
    const auto fshape = feature_shape(net, boundary);

    TopologySpec tail;
    tail.input_shape = {fshape[0], fshape[1], fshape[2]};
    tail.classifier = net.spec.classifier;
    for (size_t pos = boundary; pos < net.plan.size(); ++pos) {
        const int li = net.plan[pos].layer;
        const auto& l = net.layer(li);
        if (net.plan[pos].unroll_count > 1)
            throw ConfigError("repeat groups in the classifier tail are not supported");
        LayerSpec copy = l;
        if (copy.neuron == NeuronKind::LIF || copy.neuron == NeuronKind::IF) copy.neuron = NeuronKind::ReLU;
        tail.layers.push_back(copy);
    }

    Network out = Network::shell(tail);
    for (size_t i = 0; i < tail.layers.size(); ++i) {
        const int src = net.spec.layer_index(tail.layers[i].name);
        if (tail.layers[i].weighted()) out.weights[i] = net.weights[static_cast<size_t>(src)];
    }
    if (net.spec.classifier == ClassifierKind::Stochmax) out.stoch = net.stoch;
    return out;
}

namespace {

void copy_tail_back(Network& net, const Network& tail) {
    for (size_t i = 0; i < tail.spec.layers.size(); ++i) {
        if (!tail.spec.layers[i].weighted()) continue;
        const int dst = net.spec.layer_index(tail.spec.layers[i].name);
        net.weights[static_cast<size_t>(dst)] = tail.weights[i];
    }
    if (net.spec.classifier == ClassifierKind::Stochmax) net.stoch = tail.stoch;
}

}  // namespace

FitResult fit_classifier(Network& net, const Dataset& train, const Dataset& test, const StdpConfig& feature_cfg,
                         const AgdConfig& cls_cfg) {
    Dataset ftrain = extract_feature_dataset(net, train, feature_cfg);
    Dataset ftest = test.size() > 0 ? extract_feature_dataset(net, test, feature_cfg) : Dataset{};

    Network tail = classifier_tail(net);
    Rng init(Rng::mix(cls_cfg.seed, 0x636c7331ULL));
    Network fresh = Network::build(tail.spec, init, cls_cfg.base_threshold);
    train_agd(fresh, ftrain, ftest, cls_cfg);
    copy_tail_back(net, fresh);

    FitResult fit;
    EvalOptions eopts;
    fit.train_accuracy = evaluate(fresh, ftrain, eopts).accuracy;
    fit.test_accuracy = ftest.size() > 0 ? evaluate(fresh, ftest, eopts).accuracy : 0.0;
    return fit;
}

FitResult fit_classifier_external(const Network& feature_net, Network& classifier, const Dataset& train,
                                  const Dataset& test, const StdpConfig& feature_cfg, const AgdConfig& cls_cfg) {
    const size_t boundary = first_fc_pos(feature_net);
    const auto fshape = feature_shape(feature_net, boundary);
    if (classifier.spec.input_shape[0] != fshape[0] || classifier.spec.input_shape[1] != fshape[1] ||
        classifier.spec.input_shape[2] != fshape[2])
        throw ConfigError("classifier input shape does not match the feature map " + shape_str(fshape));

    Dataset ftrain = extract_feature_dataset(feature_net, train, feature_cfg);
    Dataset ftest = test.size() > 0 ? extract_feature_dataset(feature_net, test, feature_cfg) : Dataset{};
    train_agd(classifier, ftrain, ftest, cls_cfg);

    FitResult fit;
    EvalOptions eopts;
    fit.train_accuracy = evaluate(classifier, ftrain, eopts).accuracy;
    fit.test_accuracy = ftest.size() > 0 ? evaluate(classifier, ftest, eopts).accuracy : 0.0;
    return fit;
}

double evaluate_stdp(const Network& net, const Dataset& ds, const StdpConfig& feature_cfg) {
    Dataset features = extract_feature_dataset(net, ds, feature_cfg);
    Network tail = classifier_tail(net);
    EvalOptions eopts;
    return evaluate(tail, features, eopts).accuracy;
}

}  // namespace snnwb
