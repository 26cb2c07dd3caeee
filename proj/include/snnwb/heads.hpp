#pragma once

#include <vector>

#include "snnwb/encoding.hpp"
#include "snnwb/rng.hpp"
#include "snnwb/tensor.hpp"

namespace snnwb {

struct SoftmaxResult {
    double loss = 0.0;
    Tensor probs;
    Tensor grad_logits;  // probs - onehot(target)
};

// Cross-entropy over softmax probabilities, stabilized by max subtraction.
SoftmaxResult softmax_loss(const Tensor& logits, int target);

// Learned per-class retain probabilities for the stochastic softmax head:
// rho = sigmoid(W_psi . h + b_psi).
struct StochmaxParams {
    Tensor W_psi;  // [K, H]
    Tensor b_psi;  // [K]
    double epsilon = 1e-8;

    int classes() const { return W_psi.empty() ? 0 : W_psi.dim(0); }
    int feature_len() const { return W_psi.empty() ? 0 : W_psi.dim(1); }
};

struct StochmaxResult {
    double loss = 0.0;
    Tensor probs;
    Tensor grad_logits;
    Tensor grad_W_psi;
    Tensor grad_b_psi;
    // rho-path gradient into the feature vector; the logits-path gradient
    // into h is produced by the head layer's own backward.
    Tensor grad_h;
    Tensor rho;
    std::vector<float> mask;  // z_k + epsilon actually used
};

// Core with an explicit retain mask z (each entry 0 or 1, or a probability in
// inference mode). Exposed so tests can freeze masks. grad_through_target
// selects whether the target class's retain probability receives gradient:
// during training z_t is forced on (no sample to differentiate through), in
// inference mode z_t = rho_t is a real function of psi.
StochmaxResult stochmax_loss_masked(const Tensor& logits, const Tensor& h, const StochmaxParams& params,
                                    int target, const std::vector<float>& z, bool grad_through_target = false);

// Training mode samples z_k ~ Bernoulli(rho_k) for k != target and always
// retains the target class; inference mode uses z_k = rho_k deterministically.
// One Bernoulli draw is consumed per class either way.
StochmaxResult stochmax_loss(const Tensor& logits, const Tensor& h, const StochmaxParams& params, int target,
                             Rng& rng, bool training);

// Spike counts: elementwise sum of the train over its time dimension.
Tensor accumulate_head_input(const SpikeTrain& train);

}  // namespace snnwb
