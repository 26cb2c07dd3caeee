#pragma once

#include <utility>

#include "snnwb/tensor.hpp"

namespace snnwb {

// Layer primitives, one sample at a time. Convolution is cross-correlation
// (no kernel flip) over [C,H,W] inputs with [M,C,k,k] weights; none of the
// layers carry bias terms. All backward kernels are exact gradients of their
// forward maps and are checked against central finite differences in the
// tests.

int conv_output_size(int input, int k, int stride, int pad);

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, int stride, int pad);
// Returns {grad_input, grad_weights}.
std::pair<Tensor, Tensor> conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                                          int stride, int pad);

Tensor avgpool_forward(const Tensor& input, int p, int stride);
Tensor avgpool_backward(const Tensor& grad_out, const std::vector<int>& input_shape, int p, int stride);

// input may be any shape; it is consumed flattened. weights are [Y,X].
Tensor fc_forward(const Tensor& input, const Tensor& weights);
std::pair<Tensor, Tensor> fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights);

Tensor relu(const Tensor& input);
// Gradient passes where input > 0; the subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

namespace detail {
// im2col staging shared by the conv forward/backward paths; exposed for tests.
void im2col(const float* img, int C, int H, int W, int k, int stride, int pad, int OH, int OW, float* col);
void col2im(const float* col, int C, int H, int W, int k, int stride, int pad, int OH, int OW, float* img);
}  // namespace detail

}  // namespace snnwb
