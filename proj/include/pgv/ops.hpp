#pragma once

#include <functional>
#include <vector>

#include "pgv/tensor.hpp"

namespace pgv {

// Forward result plus a closure mapping the output gradient to gradients of
// the op inputs (in the same order as the forward arguments).
struct OpGrad {
    Tensor output;
    std::function<std::vector<Tensor>(const Tensor& grad_output)> backward;
};

// ---- conv2d ----------------------------------------------------------------
// input NCHW, weight OCkk (k odd), bias O. Output spatial size is
// floor((H + 2*pad - k) / stride) + 1.

Tensor conv2d_fwd(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                  int pad);
void conv2d_bwd(const Tensor& input, const Tensor& weight, const Tensor& grad_output, int stride,
                int pad, Tensor& grad_input, Tensor& grad_weight, Tensor& grad_bias);

// OpGrad wrapper; backward yields {grad_input, grad_weight, grad_bias}.
OpGrad conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad);

// ---- relu ------------------------------------------------------------------

Tensor relu_fwd(const Tensor& input);
// Gradient is masked to zero where input <= 0.
Tensor relu_bwd(const Tensor& input, const Tensor& grad_output);
OpGrad relu(const Tensor& input);

// ---- resize ----------------------------------------------------------------

enum class ResizeMode { Bilinear, Nearest };

// NCHW (rank 4) or CHW (rank 3). Pixel centers at (i+0.5)/N
// (align-corners=false); same-size calls return the input unchanged.
Tensor resize(const Tensor& input, int out_h, int out_w, ResizeMode mode);

// ---- sgd -------------------------------------------------------------------

// Classic momentum SGD: v <- momentum*v + g + weight_decay*p; p <- p - lr*v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, float lr, float momentum,
              float weight_decay);

}  // namespace pgv
