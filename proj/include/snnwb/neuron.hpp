#pragma once

#include <vector>

#include "snnwb/tensor.hpp"

namespace snnwb {

// Discrete-time leaky integrate-and-fire state for one neuron population.
// alpha is the per-step decay (1.0 gives plain integrate-and-fire). A layer
// inside a weight-shared unrolled block holds one threshold per unroll step;
// plain layers hold exactly one. Reset subtracts the active threshold from
// spiking positions by default; reset-to-zero is available for comparison.
struct NeuronState {
    Tensor v_mem;
    float alpha = 1.0f;
    std::vector<float> thresholds{1.0f};
    std::vector<int> refractory_remaining;
    int refractory_period = 0;
    bool reset_to_zero = false;

    // Per-neuron thresholds (homeostatic adaptation); when non-empty they
    // override thresholds[] for firing decisions.
    Tensor adaptive_thresholds;

    static NeuronState make(std::vector<int> shape, float alpha, std::vector<float> thresholds,
                            int refractory_period = 0);
    void reset();
};

// One simulation step: integrate input current, fire, reset, run refractory
// bookkeeping. unroll_index is 1-based into thresholds. If pre_reset_out is
// given it receives the membrane potential after integration but before the
// reset, which is what the surrogate derivative is evaluated at.
Tensor lif_step(NeuronState& state, const Tensor& input_current, int unroll_index,
                Tensor* pre_reset_out = nullptr);

// gamma * max(0, 1 - |(v_mem - threshold)/threshold|), elementwise.
Tensor surrogate_grad(const Tensor& v_mem, float threshold, float gamma);
float surrogate_grad_scalar(float v_mem, float threshold, float gamma);

// 1 where v_mem >= threshold, else 0 (ties fire).
Tensor heaviside_forward(const Tensor& v_mem, float threshold);

}  // namespace snnwb
