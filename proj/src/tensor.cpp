#include "snnwb/tensor.hpp"

#include <cmath>
#include <string>

#include "snnwb/errors.hpp"

namespace snnwb {

int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ConfigError("tensor shape has non-positive dimension " + std::to_string(d));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_size(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != static_cast<int64_t>(data_.size()))
        throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_str(shape_));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

void Tensor::fill(float value) {
    for (auto& v : data_) v = value;
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_size(shape) != size())
        throw ConfigError("reshape from " + shape_str(shape_) + " to " + shape_str(shape) +
                          " changes the element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

}  // namespace snnwb
