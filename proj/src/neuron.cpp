#include "snnwb/neuron.hpp"

#include <cmath>
#include <string>

#include "snnwb/errors.hpp"
#include "snnwb/simd.hpp"

namespace snnwb {

NeuronState NeuronState::make(std::vector<int> shape, float alpha, std::vector<float> thresholds,
                              int refractory_period) {
    if (thresholds.empty()) throw ConfigError("neuron state needs at least one threshold");
    for (float t : thresholds)
        if (!(t > 0.0f)) throw ConfigError("neuron thresholds must be positive, got " + std::to_string(t));
    if (!(alpha > 0.0f && alpha <= 1.0f))
        throw ConfigError("leak decay must be in (0,1], got " + std::to_string(alpha));
    NeuronState s;
    s.v_mem = Tensor::zeros(std::move(shape));
    s.alpha = alpha;
    s.thresholds = std::move(thresholds);
    s.refractory_period = refractory_period;
    if (refractory_period > 0) s.refractory_remaining.assign(static_cast<size_t>(s.v_mem.size()), 0);
    return s;
}

void NeuronState::reset() {
    v_mem.fill(0.0f);
    for (auto& r : refractory_remaining) r = 0;
    if (!adaptive_thresholds.empty()) adaptive_thresholds.fill(thresholds[0]);
}

Tensor lif_step(NeuronState& state, const Tensor& input_current, int unroll_index, Tensor* pre_reset_out) {
    if (!input_current.same_shape(state.v_mem))
        throw ConfigError("lif_step current shape " + shape_str(input_current.shape()) +
                          " does not match membrane shape " + shape_str(state.v_mem.shape()));
    if (unroll_index < 1 || unroll_index > static_cast<int>(state.thresholds.size()))
        throw ConfigError("lif_step unroll index " + std::to_string(unroll_index) + " outside 1.." +
                          std::to_string(state.thresholds.size()));

    const size_t n = static_cast<size_t>(state.v_mem.size());
    const float thr = state.thresholds[static_cast<size_t>(unroll_index - 1)];
    Tensor spikes(state.v_mem.shape());

    const bool plain = state.refractory_period == 0 && state.adaptive_thresholds.empty() && !state.reset_to_zero;
    if (plain) {
        const auto& kr = simd::active();
        kr.decay_add(state.alpha, state.v_mem.data(), input_current.data(), n);
        if (pre_reset_out) *pre_reset_out = state.v_mem;
        kr.fire(thr, state.v_mem.data(), spikes.data(), n);
        return spikes;
    }

    // General path: refractory neurons hold their potential untouched.
    const bool adaptive = !state.adaptive_thresholds.empty();
    float* v = state.v_mem.data();
    const float* in = input_current.data();
    if (pre_reset_out && !pre_reset_out->same_shape(state.v_mem)) *pre_reset_out = Tensor(state.v_mem.shape());
    for (size_t i = 0; i < n; ++i) {
        if (state.refractory_period > 0 && state.refractory_remaining[i] > 0) {
            --state.refractory_remaining[i];
            if (pre_reset_out) (*pre_reset_out)[static_cast<int64_t>(i)] = v[i];
            spikes[static_cast<int64_t>(i)] = 0.0f;
            continue;
        }
        v[i] = state.alpha * v[i] + in[i];
        if (pre_reset_out) (*pre_reset_out)[static_cast<int64_t>(i)] = v[i];
        const float t = adaptive ? state.adaptive_thresholds[static_cast<int64_t>(i)] : thr;
        if (v[i] >= t) {
            spikes[static_cast<int64_t>(i)] = 1.0f;
            v[i] = state.reset_to_zero ? 0.0f : v[i] - t;
            if (state.refractory_period > 0) state.refractory_remaining[i] = state.refractory_period;
        } else {
            spikes[static_cast<int64_t>(i)] = 0.0f;
        }
    }
    return spikes;
}

float surrogate_grad_scalar(float v_mem, float threshold, float gamma) {
    const float arg = 1.0f - std::fabs((v_mem - threshold) / threshold);
    return gamma * (arg > 0.0f ? arg : 0.0f);
}

Tensor surrogate_grad(const Tensor& v_mem, float threshold, float gamma) {
    if (!(threshold > 0.0f))
        throw ConfigError("surrogate gradient needs a positive threshold, got " + std::to_string(threshold));
    Tensor out(v_mem.shape());
    const float* v = v_mem.data();
    float* o = out.data();
    const int64_t n = v_mem.size();
    for (int64_t i = 0; i < n; ++i) o[i] = surrogate_grad_scalar(v[i], threshold, gamma);
    return out;
}

Tensor heaviside_forward(const Tensor& v_mem, float threshold) {
    Tensor out(v_mem.shape());
    const float* v = v_mem.data();
    float* o = out.data();
    const int64_t n = v_mem.size();
    for (int64_t i = 0; i < n; ++i) o[i] = v[i] >= threshold ? 1.0f : 0.0f;
    return out;
}

}  // namespace snnwb
