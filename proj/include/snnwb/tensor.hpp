#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace snnwb {

// Dense row-major float32 array. This is the one value type activations,
// weights, gradients, potentials and spike maps all share; shape arithmetic
// lives in the layer kernels, not here.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float value);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Index helpers for the common ranks.
    float& at2(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    float at2(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    float& at3(int c, int y, int x) {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float at3(int c, int y, int x) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float& at4(int a, int b, int c, int d) {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    float at4(int a, int b, int c, int d) const {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    void fill(float value);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Same data, new shape; element counts must agree.
    Tensor reshaped(std::vector<int> shape) const;

    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

int64_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace snnwb
