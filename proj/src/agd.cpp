#include "snnwb/agd.hpp"

#include <cmath>
#include <string>

#include "snnwb/errors.hpp"
#include "snnwb/parallel.hpp"

namespace snnwb {

void AgdConfig::validate() const {
    if (T < 1) throw ConfigError("training needs T >= 1, got " + std::to_string(T));
    if (!(lr >= 0.0f)) throw ConfigError("learning rate must not be negative");
    if (!(gamma >= 0.0f)) throw ConfigError("surrogate damping must be >= 0");
    if (!(alpha > 0.0f && alpha <= 1.0f)) throw ConfigError("leak decay must be in (0,1]");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 0) throw ConfigError("epoch count must be >= 0");
}

std::string invocation_name(const Network& net, size_t pos) {
    const auto& inv = net.plan[pos];
    const std::string& name = net.layer(inv.layer).name;
    if (inv.unroll_count <= 1) return name;
    return name + "@" + std::to_string(inv.unroll_index);
}

namespace {

TemporalOptions temporal_options(const AgdConfig& cfg, uint64_t encode_seed) {
    TemporalOptions o;
    o.T = cfg.T;
    o.alpha = cfg.alpha;
    o.gamma = cfg.gamma;
    o.rate_factor = cfg.rate_factor;
    o.encode_seed = encode_seed;
    return o;
}

int argmax(const Tensor& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Prediction honoring the head kind: stochmax nets predict from the
// inference-mode masked probabilities (deterministic), softmax from logits.
int predict_from(const Network& net, const Tensor& logits, const Tensor& h) {
    if (net.spec.classifier == ClassifierKind::Stochmax) {
        Rng throwaway(0);  // inference mode samples nothing that matters
        StochmaxResult r = stochmax_loss(logits, h, net.stoch, 0, throwaway, false);
        return argmax(r.probs);
    }
    return argmax(logits);
}

}  // namespace

EvalResult evaluate(const Network& net, const Dataset& ds, const EvalOptions& opts) {
    EvalResult res;
    res.predictions.assign(static_cast<size_t>(ds.size()), -1);
    res.input_activity.assign(net.plan.size(), 0.0);
    res.output_activity.assign(net.plan.size(), 0.0);
    res.peak_input_activity.assign(net.plan.size(), 0.0);
    if (ds.size() == 0) return res;

    const bool temporal = net.has_spiking() || opts.analog_as_if;
    const size_t chunks = parallel_chunk_count(static_cast<size_t>(ds.size()));
    std::vector<std::vector<double>> in_act(chunks, std::vector<double>(net.plan.size(), 0.0));
    std::vector<std::vector<double>> out_act(chunks, std::vector<double>(net.plan.size(), 0.0));
    std::vector<std::vector<double>> peak_act(chunks, std::vector<double>(net.plan.size(), 0.0));
    std::vector<int> correct(chunks, 0);

    parallel_for_chunks(static_cast<size_t>(ds.size()), [&](size_t chunk, size_t begin, size_t end) {
        if (temporal) {
            TemporalOptions topts;
            topts.T = opts.T;
            topts.alpha = opts.alpha;
            topts.rate_factor = opts.rate_factor;
            topts.analog_as_if = opts.analog_as_if;
            topts.collect_activity = true;
            for (size_t i = begin; i < end; ++i) {
                TemporalOptions run_opts = topts;
                // Per-image stream: master seed XOR image index.
                run_opts.encode_seed = opts.seed ^ static_cast<uint64_t>(i);
                TemporalEngine e(net, run_opts);
                TemporalResult r = e.run(ds.image(static_cast<int>(i)));
                const int pred = predict_from(net, r.logits, r.counts);
                res.predictions[i] = pred;
                if (pred == ds.labels[i]) ++correct[chunk];
                for (size_t p = 0; p < net.plan.size(); ++p) {
                    in_act[chunk][p] += r.input_activity[p];
                    out_act[chunk][p] += r.output_activity[p];
                    peak_act[chunk][p] = std::max(peak_act[chunk][p], r.peak_input_activity[p]);
                }
            }
        } else {
            for (size_t i = begin; i < end; ++i) {
                AnnTrace trace;
                Tensor logits = ann_forward(net, ds.image(static_cast<int>(i)), &trace);
                const int pred = predict_from(net, logits, trace.inputs[net.head_pos()]);
                res.predictions[i] = pred;
                if (pred == ds.labels[i]) ++correct[chunk];
            }
        }
    });

    int total_correct = 0;
    for (size_t c = 0; c < chunks; ++c) {
        total_correct += correct[c];
        for (size_t p = 0; p < net.plan.size(); ++p) {
            res.input_activity[p] += in_act[c][p];
            res.output_activity[p] += out_act[c][p];
            res.peak_input_activity[p] = std::max(res.peak_input_activity[p], peak_act[c][p]);
        }
    }
    for (size_t p = 0; p < net.plan.size(); ++p) {
        res.input_activity[p] /= ds.size();
        res.output_activity[p] /= ds.size();
    }
    res.accuracy = static_cast<double>(total_correct) / ds.size();
    return res;
}

SampleOutcome agd_sample_grad(const Network& net, const Tensor& image, int label, const AgdConfig& cfg,
                              uint64_t encode_seed, GradBuffers& grads) {
    SampleOutcome out;
    const bool temporal = net.has_spiking();
    Rng head_rng(Rng::mix(encode_seed, 0x68656164ULL));

    if (temporal) {
        TemporalEngine engine(net, temporal_options(cfg, encode_seed));
        Tape tape;
        TemporalResult r = engine.run(image, &tape);
        if (net.spec.classifier == ClassifierKind::Stochmax) {
            StochmaxResult head = stochmax_loss(r.logits, r.counts, net.stoch, label, head_rng, true);
            out.loss = head.loss;
            out.correct = argmax(r.logits) == label;
            for (size_t i = 0; i < grads.stoch_W.size(); ++i) grads.stoch_W[i] += head.grad_W_psi[static_cast<int64_t>(i)];
            for (size_t i = 0; i < grads.stoch_b.size(); ++i) grads.stoch_b[i] += head.grad_b_psi[static_cast<int64_t>(i)];
            engine.backward(tape, head.grad_logits, grads, &head.grad_h);
        } else {
            SoftmaxResult head = softmax_loss(r.logits, label);
            out.loss = head.loss;
            out.correct = argmax(r.logits) == label;
            engine.backward(tape, head.grad_logits, grads);
        }
    } else {
        AnnTrace trace;
        Tensor logits = ann_forward(net, image, &trace);
        const Tensor& h = trace.inputs[net.head_pos()];
        if (net.spec.classifier == ClassifierKind::Stochmax) {
            StochmaxResult head = stochmax_loss(logits, h, net.stoch, label, head_rng, true);
            out.loss = head.loss;
            out.correct = argmax(logits) == label;
            for (size_t i = 0; i < grads.stoch_W.size(); ++i) grads.stoch_W[i] += head.grad_W_psi[static_cast<int64_t>(i)];
            for (size_t i = 0; i < grads.stoch_b.size(); ++i) grads.stoch_b[i] += head.grad_b_psi[static_cast<int64_t>(i)];
            ann_backward_range(net, trace, 0, net.plan.size(), head.grad_logits, grads, nullptr, &head.grad_h);
        } else {
            SoftmaxResult head = softmax_loss(logits, label);
            out.loss = head.loss;
            out.correct = argmax(logits) == label;
            ann_backward_range(net, trace, 0, net.plan.size(), head.grad_logits, grads);
        }
    }
    return out;
}

void train_agd(Network& net, const Dataset& train_set, const Dataset& test_set, const AgdConfig& cfg,
               const MetricsSink& sink) {
    cfg.validate();
    if (train_set.size() == 0) throw InputError("training set is empty");

    // Momentum state in double, one buffer per layer plus the stochmax head.
    std::vector<std::vector<double>> velocity(net.spec.layers.size());
    for (size_t i = 0; i < net.spec.layers.size(); ++i)
        if (net.layer(static_cast<int>(i)).weighted())
            velocity[i].assign(static_cast<size_t>(net.weights[i].size()), 0.0);
    const bool stochmax = net.spec.classifier == ClassifierKind::Stochmax;
    std::vector<double> vel_sw(stochmax ? static_cast<size_t>(net.stoch.W_psi.size()) : 0, 0.0);
    std::vector<double> vel_sb(stochmax ? static_cast<size_t>(net.stoch.b_psi.size()) : 0, 0.0);

    const int n = train_set.size();
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.below(i))]);

        double epoch_loss = 0.0;
        int epoch_correct = 0;
        int batch_index = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const int bsize = std::min(cfg.batch_size, n - start);
            const size_t chunks = parallel_chunk_count(static_cast<size_t>(bsize));
            std::vector<GradBuffers> chunk_grads(chunks);
            std::vector<double> chunk_loss(chunks, 0.0);
            std::vector<int> chunk_correct(chunks, 0);
            for (auto& g : chunk_grads) g.init(net);

            parallel_for_chunks(static_cast<size_t>(bsize), [&](size_t chunk, size_t begin, size_t end) {
                for (size_t b = begin; b < end; ++b) {
                    const int idx = order[static_cast<size_t>(start) + b];
                    const uint64_t enc_seed =
                        Rng::mix(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)), static_cast<uint64_t>(idx));
                    SampleOutcome s = agd_sample_grad(net, train_set.image(idx), train_set.labels[static_cast<size_t>(idx)],
                                                      cfg, enc_seed, chunk_grads[chunk]);
                    chunk_loss[chunk] += s.loss;
                    if (s.correct) ++chunk_correct[chunk];
                }
            });

            GradBuffers& total = chunk_grads[0];
            for (size_t c = 1; c < chunks; ++c) total.merge(chunk_grads[c]);
            double batch_loss = 0.0;
            for (size_t c = 0; c < chunks; ++c) {
                batch_loss += chunk_loss[c];
                epoch_correct += chunk_correct[c];
            }
            epoch_loss += batch_loss;
            if (!std::isfinite(batch_loss))
                throw TrainError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));

            // SGD step on the batch mean.
            const double scale = 1.0 / bsize;
            auto by_layer = total.reduce(net);
            for (size_t li = 0; li < net.spec.layers.size(); ++li) {
                if (by_layer[li].empty()) continue;
                Tensor& w = net.weights[li];
                auto& vel = velocity[li];
                for (size_t j = 0; j < by_layer[li].size(); ++j) {
                    const double g = by_layer[li][j] * scale;
                    double step = g;
                    if (cfg.use_momentum) {
                        vel[j] = cfg.momentum * vel[j] + g;
                        step = vel[j];
                    }
                    w[static_cast<int64_t>(j)] -= static_cast<float>(cfg.lr * step);
                }
            }
            if (net.spec.classifier == ClassifierKind::Stochmax) {
                for (size_t j = 0; j < total.stoch_W.size(); ++j) {
                    const double g = total.stoch_W[j] * scale;
                    double step = g;
                    if (cfg.use_momentum) {
                        vel_sw[j] = cfg.momentum * vel_sw[j] + g;
                        step = vel_sw[j];
                    }
                    net.stoch.W_psi[static_cast<int64_t>(j)] -= static_cast<float>(cfg.lr * step);
                }
                for (size_t j = 0; j < total.stoch_b.size(); ++j) {
                    const double g = total.stoch_b[j] * scale;
                    double step = g;
                    if (cfg.use_momentum) {
                        vel_sb[j] = cfg.momentum * vel_sb[j] + g;
                        step = vel_sb[j];
                    }
                    net.stoch.b_psi[static_cast<int64_t>(j)] -= static_cast<float>(cfg.lr * step);
                }
            }
        }

        if (sink) {
            EpochRecord rec;
            rec.epoch = epoch;
            rec.train_loss = epoch_loss / n;
            rec.train_accuracy = static_cast<double>(epoch_correct) / n;
            EvalOptions eopts;
            eopts.T = cfg.T;
            eopts.alpha = cfg.alpha;
            eopts.rate_factor = cfg.rate_factor;
            eopts.seed = cfg.seed;
            if (test_set.size() > 0) {
                EvalResult er = evaluate(net, test_set, eopts);
                rec.test_accuracy = er.accuracy;
                for (size_t p = 0; p < net.plan.size(); ++p) {
                    if (!net.layer(net.plan[p].layer).weighted()) continue;
                    rec.spike_activity[invocation_name(net, p)] = er.input_activity[p];
                }
            }
            sink(rec);
        }
    }
}

}  // namespace snnwb
