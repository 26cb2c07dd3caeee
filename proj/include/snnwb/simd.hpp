#pragma once

#include <cstddef>

namespace snnwb::simd {

// Table of the arithmetic inner loops the layer kernels are built from.
// A scalar reference implementation always exists; vector variants (AVX2 on
// x86-64, NEON on aarch64) are selected once at startup when the CPU supports
// them. Every variant must agree with the scalar reference to float rounding,
// which the equivalence tests check kernel by kernel.
struct Kernels {
    const char* name;

    // sum_i a[i]*b[i]
    float (*dot)(const float* a, const float* b, size_t n);
    // y += a*x
    void (*axpy)(float a, const float* x, float* y, size_t n);
    // y += x
    void (*add)(const float* x, float* y, size_t n);
    // x *= a
    void (*scale)(float a, float* x, size_t n);
    // v = alpha*v + in   (leaky membrane update)
    void (*decay_add)(float alpha, float* v, const float* in, size_t n);
    // spikes = v >= thresh ? 1 : 0;  v -= thresh*spikes  (subtraction reset)
    void (*fire)(float thresh, float* v, float* spikes, size_t n);
    // y = max(0, x)
    void (*relu)(const float* x, float* y, size_t n);
    // out = x > 0 ? g : 0
    void (*relu_grad)(const float* x, const float* g, float* out, size_t n);
    float (*reduce_max)(const float* x, size_t n);
    float (*reduce_sum)(const float* x, size_t n);
    size_t (*count_nonzero)(const float* x, size_t n);
};

const Kernels& scalar();

// Active table; defaults to the widest variant the CPU supports.
const Kernels& active();
void set_active(const Kernels& k);

// Vector variants, or nullptr when not compiled in / not supported at runtime.
const Kernels* avx2();
const Kernels* neon();

}  // namespace snnwb::simd
