#include "snnwb/simd.hpp"

namespace snnwb::simd {

#if defined(SNNWB_HAVE_AVX2_TU)
const Kernels* avx2_table();
#endif
#if defined(SNNWB_HAVE_NEON_TU)
const Kernels* neon_table();
#endif

const Kernels* avx2() {
#if defined(SNNWB_HAVE_AVX2_TU)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return avx2_table();
#endif
    return nullptr;
}

const Kernels* neon() {
#if defined(SNNWB_HAVE_NEON_TU)
    return neon_table();
#else
    return nullptr;
#endif
}

namespace {

const Kernels* pick_default() {
    if (const Kernels* k = avx2()) return k;
    if (const Kernels* k = neon()) return k;
    return &scalar();
}

const Kernels*& active_slot() {
    static const Kernels* slot = pick_default();
    return slot;
}

}  // namespace

const Kernels& active() { return *active_slot(); }

void set_active(const Kernels& k) { active_slot() = &k; }

}  // namespace snnwb::simd
