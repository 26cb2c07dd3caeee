// NEON variants for aarch64; NEON is baseline there so no runtime check is
// needed beyond the architecture itself.

#include "snnwb/simd.hpp"

#if defined(__aarch64__) || defined(__ARM_NEON)

#include <arm_neon.h>

namespace snnwb::simd {

namespace {

float dot_neon(const float* a, const float* b, size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
    float tail = 0.0f;
    for (; i < n; ++i) tail += a[i] * b[i];
    return vaddvq_f32(acc) + tail;
}

void axpy_neon(float a, const float* x, float* y, size_t n) {
    const float32x4_t va = vdupq_n_f32(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void add_neon(const float* x, float* y, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vld1q_f32(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

void scale_neon(float a, float* x, size_t n) {
    const float32x4_t va = vdupq_n_f32(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(x + i, vmulq_f32(va, vld1q_f32(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void decay_add_neon(float alpha, float* v, const float* in, size_t n) {
    const float32x4_t va = vdupq_n_f32(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(v + i, vfmaq_f32(vld1q_f32(in + i), va, vld1q_f32(v + i)));
    for (; i < n; ++i) v[i] = alpha * v[i] + in[i];
}

void fire_neon(float thresh, float* v, float* spikes, size_t n) {
    const float32x4_t vt = vdupq_n_f32(thresh);
    const float32x4_t one = vdupq_n_f32(1.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t vv = vld1q_f32(v + i);
        uint32x4_t mask = vcgeq_f32(vv, vt);
        float32x4_t s = vbslq_f32(mask, one, vdupq_n_f32(0.0f));
        vst1q_f32(spikes + i, s);
        vst1q_f32(v + i, vmlsq_f32(vv, vt, s));
    }
    for (; i < n; ++i) {
        float s = v[i] >= thresh ? 1.0f : 0.0f;
        spikes[i] = s;
        v[i] -= thresh * s;
    }
}

void relu_neon(const float* x, float* y, size_t n) {
    const float32x4_t zero = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(y + i, vmaxq_f32(zero, vld1q_f32(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_neon(const float* x, const float* g, float* out, size_t n) {
    const float32x4_t zero = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        uint32x4_t mask = vcgtq_f32(vld1q_f32(x + i), zero);
        vst1q_f32(out + i, vbslq_f32(mask, vld1q_f32(g + i), zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

float reduce_max_neon(const float* x, size_t n) {
    if (n == 0) return 0.0f;
    if (n < 4) {
        float m = x[0];
        for (size_t i = 1; i < n; ++i)
            if (x[i] > m) m = x[i];
        return m;
    }
    float32x4_t acc = vld1q_f32(x);
    size_t i = 4;
    for (; i + 4 <= n; i += 4) acc = vmaxq_f32(acc, vld1q_f32(x + i));
    float m = vmaxvq_f32(acc);
    for (; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

float reduce_sum_neon(const float* x, size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
    float tail = 0.0f;
    for (; i < n; ++i) tail += x[i];
    return vaddvq_f32(acc) + tail;
}

size_t count_nonzero_neon(const float* x, size_t n) {
    size_t c = 0;
    for (size_t i = 0; i < n; ++i)
        if (x[i] != 0.0f) ++c;
    return c;
}

const Kernels kNeon = {
    "neon",
    dot_neon,
    axpy_neon,
    add_neon,
    scale_neon,
    decay_add_neon,
    fire_neon,
    relu_neon,
    relu_grad_neon,
    reduce_max_neon,
    reduce_sum_neon,
    count_nonzero_neon,
};

}  // namespace

const Kernels* neon_table() { return &kNeon; }

}  // namespace snnwb::simd

#endif  // aarch64 / NEON
