#include "snnwb/encoding.hpp"

#include <cstring>
#include <string>

#include "snnwb/errors.hpp"

namespace snnwb {

Tensor SpikeTrain::step(int t) const {
    const int64_t plane = data.size() / T;
    std::vector<int> shape(data.shape().begin() + 1, data.shape().end());
    Tensor out(shape);
    std::memcpy(out.data(), data.data() + static_cast<size_t>(t) * plane, sizeof(float) * static_cast<size_t>(plane));
    return out;
}

namespace {

void check_image(const Tensor& image, int T, float rate_factor) {
    if (T < 1) throw InputError("spike train needs T >= 1, got " + std::to_string(T));
    if (!(rate_factor > 0.0f && rate_factor <= 1.0f))
        throw InputError("rate factor must be in (0,1], got " + std::to_string(rate_factor));
    const float* p = image.data();
    for (int64_t i = 0; i < image.size(); ++i)
        if (!(p[i] >= 0.0f && p[i] <= 1.0f))
            throw InputError("pixel value " + std::to_string(p[i]) + " outside [0,1] at index " +
                             std::to_string(i) + "; normalize before encoding");
}

}  // namespace

void poisson_encode_step(const Tensor& image, Rng& rng, float rate_factor, Tensor& out) {
    const float* p = image.data();
    float* o = out.data();
    const int64_t n = image.size();
    for (int64_t i = 0; i < n; ++i) {
        const float prob = p[i] * rate_factor;
        o[i] = rng.next_float() < prob ? 1.0f : 0.0f;
    }
}

SpikeTrain poisson_encode(const Tensor& image, int T, Rng& rng, float rate_factor) {
    check_image(image, T, rate_factor);
    std::vector<int> shape;
    shape.push_back(T);
    for (int d : image.shape()) shape.push_back(d);
    SpikeTrain train;
    train.T = T;
    train.data = Tensor(shape);
    const int64_t plane = image.size();
    Tensor step(image.shape());
    for (int t = 0; t < T; ++t) {
        poisson_encode_step(image, rng, rate_factor, step);
        std::memcpy(train.data.data() + static_cast<size_t>(t) * plane, step.data(),
                    sizeof(float) * static_cast<size_t>(plane));
    }
    return train;
}

}  // namespace snnwb
