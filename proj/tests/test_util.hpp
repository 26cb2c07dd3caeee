#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "snnwb/rng.hpp"
#include "snnwb/tensor.hpp"

namespace testutil {

inline bool close(double a, double b, double rtol, double atol) {
    return std::fabs(a - b) <= rtol * std::max(std::fabs(a), std::fabs(b)) + atol;
}

inline bool allclose(const snnwb::Tensor& a, const snnwb::Tensor& b, double rtol = 1e-5, double atol = 1e-7) {
    if (a.size() != b.size()) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (!close(a[i], b[i], rtol, atol)) return false;
    return true;
}

inline snnwb::Tensor random_tensor(std::vector<int> shape, snnwb::Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    snnwb::Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Central finite differences of a scalar-valued function against an analytic
// gradient, one parameter at a time. Loss evaluations run the float32 forward
// but difference in double; the pass criterion is the vector-norm relative
// error, which is robust to float32 rounding noise on near-zero components.
struct GradCheck {
    double norm_rel = 0.0;
    bool ok = true;
};

inline GradCheck check_gradient(const std::function<double(const std::vector<float>&)>& f, std::vector<float> x,
                                const std::vector<float>& analytic, double h = 1e-3, double rtol = 1e-3,
                                double atol = 1e-7) {
    double err2 = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const float keep = x[i];
        const float xp = keep + static_cast<float>(h);
        const float xm = keep - static_cast<float>(h);
        x[i] = xp;
        const double up = f(x);
        x[i] = xm;
        const double down = f(x);
        x[i] = keep;
        // Divide by the step the float parameters actually took.
        const double fd = (up - down) / (static_cast<double>(xp) - static_cast<double>(xm));
        const double a = analytic[i];
        err2 += (a - fd) * (a - fd);
        ref2 += fd * fd;
    }
    GradCheck res;
    res.norm_rel = std::sqrt(err2) / std::max(std::sqrt(ref2), atol);
    res.ok = res.norm_rel < rtol;
    return res;
}

// Variant for whole-network checks: a signature function fingerprints the
// active piecewise-linear region (which relu inputs are positive); any
// coordinate whose probe crosses a kink is excluded, which is the only regime
// where the subgradient convention and finite differences can disagree.
struct MaskedGradCheck {
    double norm_rel = 0.0;
    size_t skipped = 0;
    size_t checked = 0;
    bool ok = true;
};

inline MaskedGradCheck check_gradient_masked(const std::function<double(const std::vector<float>&)>& f,
                                             const std::function<uint64_t(const std::vector<float>&)>& region,
                                             std::vector<float> x, const std::vector<float>& analytic,
                                             double h = 1e-3, double rtol = 1e-3) {
    MaskedGradCheck res;
    double err2 = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const float keep = x[i];
        const float xp = keep + static_cast<float>(h);
        const float xm = keep - static_cast<float>(h);
        x[i] = xp;
        const uint64_t sig_up = region(x);
        const double up = f(x);
        x[i] = xm;
        const uint64_t sig_down = region(x);
        const double down = f(x);
        x[i] = keep;
        if (sig_up != sig_down) {
            ++res.skipped;
            continue;
        }
        ++res.checked;
        const double fd = (up - down) / (static_cast<double>(xp) - static_cast<double>(xm));
        const double a = analytic[i];
        err2 += (a - fd) * (a - fd);
        ref2 += fd * fd;
    }
    res.norm_rel = std::sqrt(err2) / std::max(std::sqrt(ref2), 1e-7);
    res.ok = res.norm_rel < rtol && res.checked > 0;
    return res;
}

struct TmpDir {
    std::filesystem::path path;
    explicit TmpDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("snnwb-test-" + tag + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TmpDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

inline std::vector<unsigned char> read_bytes(const std::string& path) {
    std::vector<unsigned char> out;
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) return out;
    unsigned char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.insert(out.end(), buf, buf + n);
    std::fclose(f);
    return out;
}

}  // namespace testutil
