#pragma once

#include "flowsr/tensor.hpp"

namespace flowsr {

/// Same-size 3D cross-correlation with zero padding at the borders.
/// input [Cin,D,H,W], weight [Cout,Cin,k,k,k] with k odd, bias [Cout],
/// pad must equal (k-1)/2.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int pad);

struct Conv3dGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

/// Gradients of sum(grad_out * conv3d(input, weight, bias)) w.r.t. each argument.
Conv3dGrads conv3d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight);

Tensor leaky_relu(const Tensor& x, double slope = 0.01);
Tensor leaky_relu_backward(const Tensor& grad_out, const Tensor& x, double slope = 0.01);

}  // namespace flowsr
