#pragma once

#include "snnwb/rng.hpp"
#include "snnwb/tensor.hpp"

namespace snnwb {

// Binary spike train over T steps; data is [T, ...image shape] with every
// element 0 or 1.
struct SpikeTrain {
    int T = 0;
    Tensor data;

    Tensor step(int t) const;
};

// Rate coding: each step, each pixel spikes independently with probability
// pixel * rate_factor (at most one spike per step). Pixels must already be
// normalized into [0,1]. Draw order is step-major then pixel-major, and one
// draw is consumed per (step, pixel) regardless of the probability, so a
// stored train and a streamed one see identical randomness.
SpikeTrain poisson_encode(const Tensor& image, int T, Rng& rng, float rate_factor = 1.0f);

// One step of the same process, written into out (pre-sized to image shape).
void poisson_encode_step(const Tensor& image, Rng& rng, float rate_factor, Tensor& out);

}  // namespace snnwb
