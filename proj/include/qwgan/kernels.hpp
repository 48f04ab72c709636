#pragma once

#include <cstddef>

#include "qwgan/qtensor.hpp"

// Hamilton-product layer kernels. `serial` is the reference; `parallel`
// splits the same sums over OpenMP threads with every output written by one
// thread in a fixed order, so results do not depend on the thread count.
namespace qwgan::kernels {

struct ConvGeom {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// (in + 2 pad - kernel) / stride + 1; throws InputError when the window does not fit.
std::size_t conv_out(std::size_t in, const ConvGeom& g);
/// (in - 1) stride - 2 pad + kernel; throws InputError when not positive.
std::size_t deconv_out(std::size_t in, const ConvGeom& g);

namespace serial {

/// W [out, in], x [B, in] -> y [B, out] with y_bo = sum_i W_oi x_bi.
void qlinear_forward(const QTensor& W, const QTensor& x, QTensor& y);
/// dx_bi = sum_o conj(W_oi) dy_bo, dW_oi = sum_b dy_bo conj(x_bi). Null outputs are skipped.
void qlinear_backward(const QTensor& W, const QTensor& x, const QTensor& dy, QTensor* dx, QTensor* dW);

/// K [Co, Ci, k, k], x [B, Ci, H, W] -> y [B, Co, Ho, Wo]; y must be shaped by the caller.
void conv_apply(const QTensor& K, const QTensor& x, const ConvGeom& g, QTensor& y);
/// Adjoint of conv_apply under the real inner product; x must be shaped by the caller.
void conv_apply_adjoint(const QTensor& K, const QTensor& y, const ConvGeom& g, QTensor& x);
/// dK_ocae = sum dy_bouv conj(x_bc[u s + a - p, v s + e - p]); dK must be shaped by the caller.
void conv_weight_grad(const QTensor& x, const QTensor& dy, const ConvGeom& g, QTensor& dK);

}  // namespace serial

namespace parallel {

void qlinear_forward(const QTensor& W, const QTensor& x, QTensor& y);
void qlinear_backward(const QTensor& W, const QTensor& x, const QTensor& dy, QTensor* dx, QTensor* dW);
void conv_apply(const QTensor& K, const QTensor& x, const ConvGeom& g, QTensor& y);
void conv_apply_adjoint(const QTensor& K, const QTensor& y, const ConvGeom& g, QTensor& x);
void conv_weight_grad(const QTensor& x, const QTensor& dy, const ConvGeom& g, QTensor& dK);

}  // namespace parallel

}  // namespace qwgan::kernels
