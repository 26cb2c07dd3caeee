#include "snnwb/convert.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "snnwb/errors.hpp"
#include "snnwb/parallel.hpp"

namespace snnwb {

using nlohmann::json;

namespace {

float percentile_of(std::vector<float> values, double pct) {
    if (values.empty()) return 0.0f;
    std::sort(values.begin(), values.end());
    if (pct >= 100.0) return values.back();
    const double rank = pct / 100.0 * static_cast<double>(values.size());
    size_t idx = static_cast<size_t>(std::ceil(rank));
    if (idx > 0) --idx;
    if (idx >= values.size()) idx = values.size() - 1;
    return values[idx];
}

// Per-sample encoding streams follow the image content, not its position, so
// reordering the calibration set cannot change the collected maxima.
uint64_t image_stream_seed(uint64_t master, const Tensor& image) {
    uint64_t h = 0xcbf29ce484222325ULL;
    const float* p = image.data();
    for (int64_t i = 0; i < image.size(); ++i) {
        uint32_t bits;
        std::memcpy(&bits, &p[i], 4);
        for (int b = 0; b < 4; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ULL;
        }
    }
    return master ^ h;
}

}  // namespace

std::vector<ThresholdEntry> balance_thresholds(Network& net, const Dataset& calibration, const ConvertOptions& opts) {
    if (calibration.size() == 0) throw InputError("threshold balancing needs calibration samples");
    if (opts.T_cal < 1) throw InputError("calibration window must be at least one step");
    if (!(opts.percentile > 0.0 && opts.percentile <= 100.0))
        throw ConfigError("balancing percentile must lie in (0,100]");

    const int n = std::min(opts.calib_samples, calibration.size());

    std::vector<ThresholdEntry> entries;
    for (size_t pos = 0; pos + 1 < net.plan.size(); ++pos) {
        const auto& inv = net.plan[pos];
        const auto& l = net.layer(inv.layer);
        if (!l.weighted()) continue;

        // Collect the per-(sample, step) maxima of the weighted input sums
        // reaching this invocation; earlier invocations already carry their
        // balanced thresholds. The max-reduction is order-free, so the sample
        // loop parallelizes without changing the result.
        const size_t chunks = parallel_chunk_count(static_cast<size_t>(n));
        std::vector<std::vector<float>> chunk_values(chunks);
        parallel_for_chunks(static_cast<size_t>(n), [&](size_t chunk, size_t begin, size_t end) {
            TemporalOptions topts;
            topts.T = opts.T_cal;
            topts.analog_as_if = true;
            topts.rate_factor = opts.rate_factor;
            topts.frontier = static_cast<int>(pos);
            for (size_t i = begin; i < end; ++i) {
                const Tensor image = calibration.image(static_cast<int>(i));
                topts.encode_seed = image_stream_seed(opts.seed, image);
                TemporalEngine engine(net, topts);
                TemporalResult r = engine.run(image);
                chunk_values[chunk].insert(chunk_values[chunk].end(), r.frontier_step_max.begin(),
                                           r.frontier_step_max.end());
            }
        });
        std::vector<float> values;
        for (auto& cv : chunk_values) values.insert(values.end(), cv.begin(), cv.end());

        const float thr = percentile_of(values, opts.percentile);
        if (!(thr > 0.0f))
            throw TrainError("conversion failed: layer '" + l.name + "' (step " + std::to_string(inv.unroll_index) +
                             ") received no positive drive during calibration");
        net.thresholds[static_cast<size_t>(inv.layer)][static_cast<size_t>(inv.unroll_index - 1)] = thr;
        entries.push_back({l.name, inv.unroll_index, thr});
    }
    return entries;
}

EvalResult run_converted(const Network& net, const Dataset& inputs, int T, uint64_t seed, float rate_factor) {
    if (T < 1) throw InputError("converted inference needs T >= 1; no evidence accumulates at T=0");
    EvalOptions opts;
    opts.T = T;
    opts.seed = seed;
    opts.rate_factor = rate_factor;
    opts.analog_as_if = true;
    return evaluate(net, inputs, opts);
}

ConversionReport convert_and_sweep(Network& net, const Dataset& calibration, const Dataset& eval_set,
                                   const std::vector<int>& sweep, const ConvertOptions& opts) {
    ConversionReport rep;

    EvalOptions ann_opts;
    EvalResult ann = evaluate(net, eval_set, ann_opts);
    rep.ann_accuracy = ann.accuracy;

    rep.thresholds = balance_thresholds(net, calibration, opts);

    for (int T : sweep) {
        EvalResult snn = run_converted(net, eval_set, T, opts.seed, opts.rate_factor);
        rep.sweep_T.push_back(T);
        rep.snn_accuracy.push_back(snn.accuracy);
        int agree = 0;
        for (size_t i = 0; i < snn.predictions.size(); ++i)
            if (snn.predictions[i] == ann.predictions[i]) ++agree;
        rep.agreement.push_back(eval_set.size() > 0 ? static_cast<double>(agree) / eval_set.size() : 0.0);
    }

    for (const auto& g : net.spec.backres) {
        if (g.n < 2) continue;
        for (const auto& m : g.members) {
            const int li = net.spec.layer_index(m);
            const auto& thr = net.thresholds[static_cast<size_t>(li)];
            bool increasing = true;
            for (size_t s = 1; s < thr.size(); ++s)
                if (!(thr[s] > thr[s - 1])) increasing = false;
            rep.ordering_increasing.push_back({m, increasing});
        }
    }
    return rep;
}

std::string ConversionReport::to_json() const {
    json doc;
    doc["ann_accuracy"] = ann_accuracy;
    doc["thresholds"] = json::array();
    for (const auto& t : thresholds)
        doc["thresholds"].push_back({{"layer", t.layer}, {"unroll_index", t.unroll_index}, {"threshold", t.threshold}});
    doc["sweep"] = json::array();
    for (size_t i = 0; i < sweep_T.size(); ++i)
        doc["sweep"].push_back(
            {{"T", sweep_T[i]}, {"snn_accuracy", snn_accuracy[i]}, {"agreement", agreement[i]}});
    doc["threshold_ordering_increasing"] = json::array();
    for (const auto& [layer, inc] : ordering_increasing)
        doc["threshold_ordering_increasing"].push_back({{"layer", layer}, {"increasing", inc}});
    return doc.dump(2);
}

}  // namespace snnwb
