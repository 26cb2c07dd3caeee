#include "snnwb/simd.hpp"

namespace snnwb::simd {

namespace {

float dot_scalar(const float* a, const float* b, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(float a, const float* x, float* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar(const float* x, float* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale_scalar(float a, float* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= a;
}

void decay_add_scalar(float alpha, float* v, const float* in, size_t n) {
    for (size_t i = 0; i < n; ++i) v[i] = alpha * v[i] + in[i];
}

void fire_scalar(float thresh, float* v, float* spikes, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        float s = v[i] >= thresh ? 1.0f : 0.0f;
        spikes[i] = s;
        v[i] -= thresh * s;
    }
}

void relu_scalar(const float* x, float* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_scalar(const float* x, const float* g, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

float reduce_max_scalar(const float* x, size_t n) {
    if (n == 0) return 0.0f;
    float m = x[0];
    for (size_t i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

float reduce_sum_scalar(const float* x, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

size_t count_nonzero_scalar(const float* x, size_t n) {
    size_t c = 0;
    for (size_t i = 0; i < n; ++i)
        if (x[i] != 0.0f) ++c;
    return c;
}

const Kernels kScalar = {
    "scalar",
    dot_scalar,
    axpy_scalar,
    add_scalar,
    scale_scalar,
    decay_add_scalar,
    fire_scalar,
    relu_scalar,
    relu_grad_scalar,
    reduce_max_scalar,
    reduce_sum_scalar,
    count_nonzero_scalar,
};

}  // namespace

const Kernels& scalar() { return kScalar; }

}  // namespace snnwb::simd
