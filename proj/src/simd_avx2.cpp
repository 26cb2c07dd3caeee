// AVX2 + FMA variants of the arithmetic inner loops. This translation unit is
// the only one compiled with -mavx2 -mfma; callers reach it through the
// dispatch table after a runtime CPU check.

#include "snnwb/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace snnwb::simd {

namespace {

inline float hsum256(__m256 v) {
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 lo = _mm256_castps256_ps128(v);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
}

float dot_avx2(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float tail = 0.0f;
    for (; i < n; ++i) tail += a[i] * b[i];
    return hsum256(acc) + tail;
}

void axpy_avx2(float a, const float* x, float* y, size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void add_avx2(const float* x, float* y, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

void scale_avx2(float a, float* x, size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void decay_add_avx2(float alpha, float* v, const float* in, size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vv = _mm256_fmadd_ps(va, _mm256_loadu_ps(v + i), _mm256_loadu_ps(in + i));
        _mm256_storeu_ps(v + i, vv);
    }
    for (; i < n; ++i) v[i] = alpha * v[i] + in[i];
}

void fire_avx2(float thresh, float* v, float* spikes, size_t n) {
    const __m256 vt = _mm256_set1_ps(thresh);
    const __m256 one = _mm256_set1_ps(1.0f);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vv = _mm256_loadu_ps(v + i);
        __m256 mask = _mm256_cmp_ps(vv, vt, _CMP_GE_OQ);
        __m256 s = _mm256_and_ps(mask, one);
        _mm256_storeu_ps(spikes + i, s);
        _mm256_storeu_ps(v + i, _mm256_fnmadd_ps(vt, s, vv));
    }
    for (; i < n; ++i) {
        float s = v[i] >= thresh ? 1.0f : 0.0f;
        spikes[i] = s;
        v[i] -= thresh * s;
    }
}

void relu_avx2(const float* x, float* y, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_avx2(const float* x, const float* g, float* out, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(out + i, _mm256_and_ps(mask, _mm256_loadu_ps(g + i)));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

float reduce_max_avx2(const float* x, size_t n) {
    if (n == 0) return 0.0f;
    if (n < 8) {
        float m = x[0];
        for (size_t i = 1; i < n; ++i)
            if (x[i] > m) m = x[i];
        return m;
    }
    __m256 acc = _mm256_loadu_ps(x);
    size_t i = 8;
    for (; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float m = lanes[0];
    for (int k = 1; k < 8; ++k)
        if (lanes[k] > m) m = lanes[k];
    for (; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

float reduce_sum_avx2(const float* x, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float tail = 0.0f;
    for (; i < n; ++i) tail += x[i];
    return hsum256(acc) + tail;
}

size_t count_nonzero_avx2(const float* x, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t c = 0, i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_NEQ_OQ);
        c += static_cast<size_t>(__builtin_popcount(static_cast<unsigned>(_mm256_movemask_ps(mask))));
    }
    for (; i < n; ++i)
        if (x[i] != 0.0f) ++c;
    return c;
}

const Kernels kAvx2 = {
    "avx2",
    dot_avx2,
    axpy_avx2,
    add_avx2,
    scale_avx2,
    decay_add_avx2,
    fire_avx2,
    relu_avx2,
    relu_grad_avx2,
    reduce_max_avx2,
    reduce_sum_avx2,
    count_nonzero_avx2,
};

}  // namespace

const Kernels* avx2_table() { return &kAvx2; }

}  // namespace snnwb::simd

#endif  // x86-64
