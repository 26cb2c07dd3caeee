#include "snnwb/ops.hpp"

#include <cstring>
#include <string>
#include <vector>

#include "snnwb/errors.hpp"
#include "snnwb/simd.hpp"

namespace snnwb {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

int conv_output_size(int input, int k, int stride, int pad) {
    return (input + 2 * pad - k) / stride + 1;
}

namespace detail {

void im2col(const float* img, int C, int H, int W, int k, int stride, int pad, int OH, int OW, float* col) {
    // col is [C*k*k, OH*OW]; zero padding materializes as zero rows here.
    const int plane = H * W;
    const int out_plane = OH * OW;
    for (int c = 0; c < C; ++c) {
        const float* src = img + static_cast<size_t>(c) * plane;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* dst = col + (static_cast<size_t>(c) * k * k + ki * k + kj) * out_plane;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= H) {
                        std::memset(dst + static_cast<size_t>(oy) * OW, 0, sizeof(float) * OW);
                        continue;
                    }
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        dst[static_cast<size_t>(oy) * OW + ox] =
                            (ix >= 0 && ix < W) ? src[static_cast<size_t>(iy) * W + ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* col, int C, int H, int W, int k, int stride, int pad, int OH, int OW, float* img) {
    const int plane = H * W;
    const int out_plane = OH * OW;
    std::memset(img, 0, sizeof(float) * static_cast<size_t>(C) * plane);
    for (int c = 0; c < C; ++c) {
        float* dst = img + static_cast<size_t>(c) * plane;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* src = col + (static_cast<size_t>(c) * k * k + ki * k + kj) * out_plane;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        if (ix >= 0 && ix < W) dst[static_cast<size_t>(iy) * W + ix] += src[static_cast<size_t>(oy) * OW + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, int stride, int pad) {
    require(input.rank() == 3, "conv2d input must be [C,H,W], got " + shape_str(input.shape()));
    require(weights.rank() == 4, "conv2d weights must be [M,C,k,k], got " + shape_str(weights.shape()));
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int M = weights.dim(0), k = weights.dim(2);
    require(weights.dim(1) == C, "conv2d channel mismatch: input has " + std::to_string(C) +
                                     " channels, weights expect " + std::to_string(weights.dim(1)));
    require(weights.dim(3) == k, "conv2d kernel must be square, got " + shape_str(weights.shape()));
    require(stride >= 1, "conv2d stride must be >= 1, got " + std::to_string(stride));
    require(pad >= 0, "conv2d padding must be >= 0, got " + std::to_string(pad));
    const int OH = conv_output_size(H, k, stride, pad);
    const int OW = conv_output_size(W, k, stride, pad);
    require(OH >= 1 && OW >= 1, "conv2d output collapses: input " + std::to_string(H) + "x" + std::to_string(W) +
                                    ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                                    ", pad " + std::to_string(pad));

    const auto& kr = simd::active();
    const int ckk = C * k * k;
    const int out_plane = OH * OW;
    std::vector<float> col(static_cast<size_t>(ckk) * out_plane);
    detail::im2col(input.data(), C, H, W, k, stride, pad, OH, OW, col.data());

    Tensor out({M, OH, OW});
    // out[m,:] = sum_k W[m,k] * col[k,:]
    for (int m = 0; m < M; ++m) {
        float* out_row = out.data() + static_cast<size_t>(m) * out_plane;
        const float* w_row = weights.data() + static_cast<size_t>(m) * ckk;
        for (int kk = 0; kk < ckk; ++kk) {
            const float w = w_row[kk];
            if (w != 0.0f) kr.axpy(w, col.data() + static_cast<size_t>(kk) * out_plane, out_row, out_plane);
        }
    }
    return out;
}

std::pair<Tensor, Tensor> conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                                          int stride, int pad) {
    require(input.rank() == 3 && weights.rank() == 4 && grad_out.rank() == 3,
            "conv2d backward expects grad [M,OH,OW], input [C,H,W], weights [M,C,k,k]");
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int M = weights.dim(0), k = weights.dim(2);
    const int OH = conv_output_size(H, k, stride, pad);
    const int OW = conv_output_size(W, k, stride, pad);
    require(grad_out.dim(0) == M && grad_out.dim(1) == OH && grad_out.dim(2) == OW,
            "conv2d backward grad shape " + shape_str(grad_out.shape()) + " does not match forward output [" +
                std::to_string(M) + "," + std::to_string(OH) + "," + std::to_string(OW) + "]");

    const auto& kr = simd::active();
    const int ckk = C * k * k;
    const int out_plane = OH * OW;
    std::vector<float> col(static_cast<size_t>(ckk) * out_plane);
    detail::im2col(input.data(), C, H, W, k, stride, pad, OH, OW, col.data());

    Tensor grad_weights({M, C, k, k});
    for (int m = 0; m < M; ++m) {
        const float* g_row = grad_out.data() + static_cast<size_t>(m) * out_plane;
        float* gw_row = grad_weights.data() + static_cast<size_t>(m) * ckk;
        for (int kk = 0; kk < ckk; ++kk)
            gw_row[kk] = kr.dot(g_row, col.data() + static_cast<size_t>(kk) * out_plane, out_plane);
    }

    // grad wrt col, then scatter back to image coordinates.
    std::vector<float> gcol(static_cast<size_t>(ckk) * out_plane, 0.0f);
    for (int m = 0; m < M; ++m) {
        const float* g_row = grad_out.data() + static_cast<size_t>(m) * out_plane;
        const float* w_row = weights.data() + static_cast<size_t>(m) * ckk;
        for (int kk = 0; kk < ckk; ++kk) {
            const float w = w_row[kk];
            if (w != 0.0f) kr.axpy(w, g_row, gcol.data() + static_cast<size_t>(kk) * out_plane, out_plane);
        }
    }
    Tensor grad_input({C, H, W});
    detail::col2im(gcol.data(), C, H, W, k, stride, pad, OH, OW, grad_input.data());
    return {std::move(grad_input), std::move(grad_weights)};
}

Tensor avgpool_forward(const Tensor& input, int p, int stride) {
    require(input.rank() == 3, "avgpool input must be [C,H,W], got " + shape_str(input.shape()));
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    require(p >= 1 && stride >= 1, "avgpool window and stride must be >= 1");
    require(p <= H && p <= W, "avgpool window " + std::to_string(p) + "x" + std::to_string(p) +
                                  " larger than input " + std::to_string(H) + "x" + std::to_string(W));
    const int OH = conv_output_size(H, p, stride, 0);
    const int OW = conv_output_size(W, p, stride, 0);
    Tensor out({C, OH, OW});
    const float inv = 1.0f / static_cast<float>(p * p);
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                float acc = 0.0f;
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx) acc += input.at3(c, oy * stride + dy, ox * stride + dx);
                out.at3(c, oy, ox) = acc * inv;
            }
    return out;
}

Tensor avgpool_backward(const Tensor& grad_out, const std::vector<int>& input_shape, int p, int stride) {
    require(grad_out.rank() == 3 && input_shape.size() == 3, "avgpool backward expects rank-3 shapes");
    const int C = input_shape[0], H = input_shape[1], W = input_shape[2];
    const int OH = conv_output_size(H, p, stride, 0);
    const int OW = conv_output_size(W, p, stride, 0);
    require(grad_out.dim(0) == C && grad_out.dim(1) == OH && grad_out.dim(2) == OW,
            "avgpool backward grad shape " + shape_str(grad_out.shape()) + " does not match pooled output");
    Tensor grad_input(input_shape);
    const float inv = 1.0f / static_cast<float>(p * p);
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                const float g = grad_out.at3(c, oy, ox) * inv;
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx) grad_input.at3(c, oy * stride + dy, ox * stride + dx) += g;
            }
    return grad_input;
}

Tensor fc_forward(const Tensor& input, const Tensor& weights) {
    require(weights.rank() == 2, "fc weights must be [Y,X], got " + shape_str(weights.shape()));
    const int Y = weights.dim(0), X = weights.dim(1);
    require(input.size() == X, "fc length mismatch: input has " + std::to_string(input.size()) +
                                   " values, weights expect " + std::to_string(X));
    const auto& kr = simd::active();
    Tensor out({Y});
    for (int y = 0; y < Y; ++y)
        out[y] = kr.dot(weights.data() + static_cast<size_t>(y) * X, input.data(), static_cast<size_t>(X));
    return out;
}

std::pair<Tensor, Tensor> fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights) {
    require(weights.rank() == 2, "fc weights must be [Y,X]");
    const int Y = weights.dim(0), X = weights.dim(1);
    require(grad_out.size() == Y, "fc backward grad length " + std::to_string(grad_out.size()) +
                                      " does not match output length " + std::to_string(Y));
    require(input.size() == X, "fc backward input length mismatch");
    const auto& kr = simd::active();
    Tensor grad_input(input.shape());
    Tensor grad_weights({Y, X});
    for (int y = 0; y < Y; ++y) {
        const float g = grad_out[y];
        if (g == 0.0f) continue;
        kr.axpy(g, weights.data() + static_cast<size_t>(y) * X, grad_input.data(), static_cast<size_t>(X));
        kr.axpy(g, input.data(), grad_weights.data() + static_cast<size_t>(y) * X, static_cast<size_t>(X));
    }
    return {std::move(grad_input), std::move(grad_weights)};
}

Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    simd::active().relu(input.data(), out.data(), static_cast<size_t>(input.size()));
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    if (!input.same_shape(grad_out))
        throw ConfigError("relu backward shape mismatch: " + shape_str(input.shape()) + " vs " +
                          shape_str(grad_out.shape()));
    Tensor out(input.shape());
    simd::active().relu_grad(input.data(), grad_out.data(), out.data(), static_cast<size_t>(input.size()));
    return out;
}

}  // namespace snnwb
