#include "snnwb/heads.hpp"

#include <cmath>
#include <string>

#include "snnwb/errors.hpp"
#include "snnwb/simd.hpp"

namespace snnwb {

namespace {

void check_target(const Tensor& logits, int target) {
    const int K = static_cast<int>(logits.size());
    if (K < 2) throw InputError("classifier needs at least 2 classes, got " + std::to_string(K));
    if (target < 0 || target >= K)
        throw InputError("target class " + std::to_string(target) + " outside [0," + std::to_string(K) + ")");
}

}  // namespace

SoftmaxResult softmax_loss(const Tensor& logits, int target) {
    check_target(logits, target);
    const int K = static_cast<int>(logits.size());
    double mx = logits[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(logits[k]));
    double denom = 0.0;
    std::vector<double> e(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        e[static_cast<size_t>(k)] = std::exp(static_cast<double>(logits[k]) - mx);
        denom += e[static_cast<size_t>(k)];
    }
    SoftmaxResult r;
    r.probs = Tensor({K});
    r.grad_logits = Tensor({K});
    for (int k = 0; k < K; ++k) {
        const double p = e[static_cast<size_t>(k)] / denom;
        r.probs[k] = static_cast<float>(p);
        r.grad_logits[k] = static_cast<float>(p - (k == target ? 1.0 : 0.0));
    }
    r.loss = -(static_cast<double>(logits[target]) - mx - std::log(denom));
    return r;
}

StochmaxResult stochmax_loss_masked(const Tensor& logits, const Tensor& h, const StochmaxParams& params,
                                    int target, const std::vector<float>& z, bool grad_through_target) {
    check_target(logits, target);
    const int K = static_cast<int>(logits.size());
    const int H = static_cast<int>(h.size());
    if (params.W_psi.rank() != 2 || params.W_psi.dim(0) != K || params.W_psi.dim(1) != H)
        throw ConfigError("stochmax W_psi must be [" + std::to_string(K) + "," + std::to_string(H) + "], got " +
                          shape_str(params.W_psi.shape()));
    if (params.b_psi.size() != K) throw ConfigError("stochmax b_psi length must equal class count");
    if (static_cast<int>(z.size()) != K) throw ConfigError("stochmax mask length must equal class count");

    const auto& kr = simd::active();
    StochmaxResult r;
    r.rho = Tensor({K});
    for (int k = 0; k < K; ++k) {
        const double a = static_cast<double>(kr.dot(params.W_psi.data() + static_cast<size_t>(k) * H, h.data(),
                                                    static_cast<size_t>(H))) +
                         params.b_psi[k];
        r.rho[k] = static_cast<float>(1.0 / (1.0 + std::exp(-a)));
    }

    r.mask.resize(static_cast<size_t>(K));
    double mx = logits[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(logits[k]));
    std::vector<double> m(static_cast<size_t>(K));
    std::vector<double> me(static_cast<size_t>(K));  // m_k * exp(o_k - mx)
    std::vector<double> e(static_cast<size_t>(K));
    double denom = 0.0;
    for (int k = 0; k < K; ++k) {
        m[static_cast<size_t>(k)] = static_cast<double>(z[static_cast<size_t>(k)]) + params.epsilon;
        r.mask[static_cast<size_t>(k)] = static_cast<float>(m[static_cast<size_t>(k)]);
        e[static_cast<size_t>(k)] = std::exp(static_cast<double>(logits[k]) - mx);
        me[static_cast<size_t>(k)] = m[static_cast<size_t>(k)] * e[static_cast<size_t>(k)];
        denom += me[static_cast<size_t>(k)];
    }

    r.probs = Tensor({K});
    r.grad_logits = Tensor({K});
    for (int k = 0; k < K; ++k) {
        const double p = me[static_cast<size_t>(k)] / denom;
        r.probs[k] = static_cast<float>(p);
        r.grad_logits[k] = static_cast<float>(p - (k == target ? 1.0 : 0.0));
    }
    const double mt = m[static_cast<size_t>(target)];
    r.loss = -(std::log(mt) + static_cast<double>(logits[target]) - mx - std::log(denom));

    // Straight-through: the sampled z_k stands in for rho_k in the backward
    // pass. A forced-retained target took no sample, so its rho only gets
    // gradient when the caller says the mask really was rho.
    r.grad_W_psi = Tensor({K, H});
    r.grad_b_psi = Tensor({K});
    r.grad_h = Tensor(h.shape());
    for (int k = 0; k < K; ++k) {
        if (k == target && !grad_through_target) continue;
        double ddm = e[static_cast<size_t>(k)] / denom;  // dL/dm_k
        if (k == target) ddm -= 1.0 / mt;
        const double rho = static_cast<double>(r.rho[k]);
        const double g_pre = ddm * rho * (1.0 - rho);
        r.grad_b_psi[k] = static_cast<float>(g_pre);
        kr.axpy(static_cast<float>(g_pre), h.data(), r.grad_W_psi.data() + static_cast<size_t>(k) * H,
                static_cast<size_t>(H));
        kr.axpy(static_cast<float>(g_pre), params.W_psi.data() + static_cast<size_t>(k) * H, r.grad_h.data(),
                static_cast<size_t>(H));
    }
    return r;
}

StochmaxResult stochmax_loss(const Tensor& logits, const Tensor& h, const StochmaxParams& params, int target,
                             Rng& rng, bool training) {
    check_target(logits, target);
    const int K = static_cast<int>(logits.size());
    const int H = static_cast<int>(h.size());
    if (params.W_psi.rank() != 2 || params.W_psi.dim(0) != K || params.W_psi.dim(1) != H)
        throw ConfigError("stochmax W_psi must be [" + std::to_string(K) + "," + std::to_string(H) + "]");

    // rho must be computed before sampling; replicate the masked core's rho.
    const auto& kr = simd::active();
    std::vector<float> z(static_cast<size_t>(K));
    std::vector<float> rho(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        const double a = static_cast<double>(kr.dot(params.W_psi.data() + static_cast<size_t>(k) * H, h.data(),
                                                    static_cast<size_t>(H))) +
                         params.b_psi[k];
        rho[static_cast<size_t>(k)] = static_cast<float>(1.0 / (1.0 + std::exp(-a)));
    }
    for (int k = 0; k < K; ++k) {
        const bool keep = rng.bernoulli(rho[static_cast<size_t>(k)]);
        if (training)
            z[static_cast<size_t>(k)] = (k == target) ? 1.0f : (keep ? 1.0f : 0.0f);
        else
            z[static_cast<size_t>(k)] = rho[static_cast<size_t>(k)];
    }
    return stochmax_loss_masked(logits, h, params, target, z, !training);
}

Tensor accumulate_head_input(const SpikeTrain& train) {
    if (train.T < 1) throw InputError("spike train is empty");
    std::vector<int> shape(train.data.shape().begin() + 1, train.data.shape().end());
    Tensor out(shape);
    const int64_t plane = out.size();
    const auto& kr = simd::active();
    for (int t = 0; t < train.T; ++t)
        kr.add(train.data.data() + static_cast<size_t>(t) * plane, out.data(), static_cast<size_t>(plane));
    return out;
}

}  // namespace snnwb
