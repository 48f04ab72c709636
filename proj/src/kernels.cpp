#include "qwgan/kernels.hpp"

#include "qwgan/errors.hpp"

namespace qwgan::kernels {

namespace {

using std::ptrdiff_t;

struct ConvDims {
  std::size_t B, Ci, Co, H, W, Ho, Wo, k, s, p;
};

ConvDims conv_dims(const QTensor& K, const QTensor& x, const QTensor& y, const ConvGeom& g) {
  if (K.shape.size() != 4 || x.shape.size() != 4 || y.shape.size() != 4)
    throw InputError("conv: expected 4-d tensors");
  ConvDims d{x.shape[0], x.shape[1], y.shape[1], x.shape[2], x.shape[3], y.shape[2], y.shape[3],
             g.kernel, g.stride, g.pad};
  if (K.shape[0] != d.Co || K.shape[1] != d.Ci || K.shape[2] != d.k || K.shape[3] != d.k || y.shape[0] != d.B)
    throw InputError("conv: kernel " + shape_string(K.shape) + " does not match input " + shape_string(x.shape) +
                     " and output " + shape_string(y.shape));
  if (conv_out(d.H, g) != d.Ho || conv_out(d.W, g) != d.Wo)
    throw InputError("conv: output " + shape_string(y.shape) + " inconsistent with geometry");
  return d;
}

void linear_check(const QTensor& W, const QTensor& x) {
  if (W.shape.size() != 2 || x.shape.size() != 2 || W.shape[1] != x.shape[1])
    throw InputError("qlinear: weight " + shape_string(W.shape) + " does not match input " + shape_string(x.shape));
}

inline std::size_t xi(const ConvDims& d, std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
  return ((b * d.Ci + c) * d.H + h) * d.W + w;
}
inline std::size_t yi(const ConvDims& d, std::size_t b, std::size_t o, std::size_t u, std::size_t v) {
  return ((b * d.Co + o) * d.Ho + u) * d.Wo + v;
}
inline std::size_t ki(const ConvDims& d, std::size_t o, std::size_t c, std::size_t a, std::size_t e) {
  return ((o * d.Ci + c) * d.k + a) * d.k + e;
}

// Input row touched by output row u through kernel tap a, or -1 when in the padding.
inline ptrdiff_t src(std::size_t u, std::size_t a, const ConvDims& d, std::size_t extent) {
  const ptrdiff_t h = static_cast<ptrdiff_t>(u * d.s + a) - static_cast<ptrdiff_t>(d.p);
  return (h < 0 || h >= static_cast<ptrdiff_t>(extent)) ? -1 : h;
}

// Output row u with u s + a - p == h, or -1.
inline ptrdiff_t dst(std::size_t h, std::size_t a, const ConvDims& d, std::size_t extent) {
  const ptrdiff_t t = static_cast<ptrdiff_t>(h + d.p) - static_cast<ptrdiff_t>(a);
  if (t < 0 || t % static_cast<ptrdiff_t>(d.s) != 0) return -1;
  const ptrdiff_t u = t / static_cast<ptrdiff_t>(d.s);
  return u >= static_cast<ptrdiff_t>(extent) ? -1 : u;
}

inline Quaternion conv_point(const QTensor& K, const QTensor& x, const ConvDims& d, std::size_t b, std::size_t o,
                             std::size_t u, std::size_t v) {
  Quaternion acc;
  for (std::size_t c = 0; c < d.Ci; ++c)
    for (std::size_t a = 0; a < d.k; ++a) {
      const ptrdiff_t h = src(u, a, d, d.H);
      if (h < 0) continue;
      for (std::size_t e = 0; e < d.k; ++e) {
        const ptrdiff_t w = src(v, e, d, d.W);
        if (w < 0) continue;
        acc += K.get(ki(d, o, c, a, e)) * x.get(xi(d, b, c, static_cast<std::size_t>(h), static_cast<std::size_t>(w)));
      }
    }
  return acc;
}

}  // namespace

std::size_t conv_out(std::size_t in, const ConvGeom& g) {
  if (g.kernel == 0 || g.stride == 0) throw InputError("conv: kernel and stride must be positive");
  if (in + 2 * g.pad < g.kernel)
    throw InputError("conv: kernel " + std::to_string(g.kernel) + " exceeds padded input " +
                     std::to_string(in + 2 * g.pad));
  return (in + 2 * g.pad - g.kernel) / g.stride + 1;
}

std::size_t deconv_out(std::size_t in, const ConvGeom& g) {
  if (g.kernel == 0 || g.stride == 0 || in == 0) throw InputError("deconv: sizes must be positive");
  const long out = static_cast<long>((in - 1) * g.stride + g.kernel) - 2 * static_cast<long>(g.pad);
  if (out <= 0) throw InputError("deconv: padding " + std::to_string(g.pad) + " leaves no output");
  return static_cast<std::size_t>(out);
}

namespace serial {

void qlinear_forward(const QTensor& W, const QTensor& x, QTensor& y) {
  linear_check(W, x);
  const std::size_t B = x.shape[0], in = x.shape[1], out = W.shape[0];
  y = QTensor({B, out});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      Quaternion acc;
      for (std::size_t i = 0; i < in; ++i) acc += W.get(o * in + i) * x.get(b * in + i);
      y.set(b * out + o, acc);
    }
}

void qlinear_backward(const QTensor& W, const QTensor& x, const QTensor& dy, QTensor* dx, QTensor* dW) {
  linear_check(W, x);
  const std::size_t B = x.shape[0], in = x.shape[1], out = W.shape[0];
  if (dx) *dx = QTensor(x.shape);
  if (dW) *dW = QTensor(W.shape);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      const Quaternion g = dy.get(b * out + o);
      for (std::size_t i = 0; i < in; ++i) {
        if (dx) dx->add(b * in + i, W.get(o * in + i).conj() * g);
        if (dW) dW->add(o * in + i, g * x.get(b * in + i).conj());
      }
    }
}

void conv_apply(const QTensor& K, const QTensor& x, const ConvGeom& g, QTensor& y) {
  const auto d = conv_dims(K, x, y, g);
  for (std::size_t b = 0; b < d.B; ++b)
    for (std::size_t o = 0; o < d.Co; ++o)
      for (std::size_t u = 0; u < d.Ho; ++u)
        for (std::size_t v = 0; v < d.Wo; ++v) y.set(yi(d, b, o, u, v), conv_point(K, x, d, b, o, u, v));
}

void conv_apply_adjoint(const QTensor& K, const QTensor& y, const ConvGeom& g, QTensor& x) {
  const auto d = conv_dims(K, x, y, g);
  x.fill(0.0);
  for (std::size_t b = 0; b < d.B; ++b)
    for (std::size_t o = 0; o < d.Co; ++o)
      for (std::size_t u = 0; u < d.Ho; ++u)
        for (std::size_t v = 0; v < d.Wo; ++v) {
          const Quaternion gy = y.get(yi(d, b, o, u, v));
          for (std::size_t c = 0; c < d.Ci; ++c)
            for (std::size_t a = 0; a < d.k; ++a) {
              const ptrdiff_t h = src(u, a, d, d.H);
              if (h < 0) continue;
              for (std::size_t e = 0; e < d.k; ++e) {
                const ptrdiff_t w = src(v, e, d, d.W);
                if (w < 0) continue;
                x.add(xi(d, b, c, static_cast<std::size_t>(h), static_cast<std::size_t>(w)),
                      K.get(ki(d, o, c, a, e)).conj() * gy);
              }
            }
        }
}

void conv_weight_grad(const QTensor& x, const QTensor& dy, const ConvGeom& g, QTensor& dK) {
  const auto d = conv_dims(dK, x, dy, g);
  dK.fill(0.0);
  for (std::size_t b = 0; b < d.B; ++b)
    for (std::size_t o = 0; o < d.Co; ++o)
      for (std::size_t u = 0; u < d.Ho; ++u)
        for (std::size_t v = 0; v < d.Wo; ++v) {
          const Quaternion gy = dy.get(yi(d, b, o, u, v));
          for (std::size_t c = 0; c < d.Ci; ++c)
            for (std::size_t a = 0; a < d.k; ++a) {
              const ptrdiff_t h = src(u, a, d, d.H);
              if (h < 0) continue;
              for (std::size_t e = 0; e < d.k; ++e) {
                const ptrdiff_t w = src(v, e, d, d.W);
                if (w < 0) continue;
                dK.add(ki(d, o, c, a, e),
                       gy * x.get(xi(d, b, c, static_cast<std::size_t>(h), static_cast<std::size_t>(w))).conj());
              }
            }
        }
}

}  // namespace serial

namespace parallel {

void qlinear_forward(const QTensor& W, const QTensor& x, QTensor& y) {
  linear_check(W, x);
  const ptrdiff_t B = static_cast<ptrdiff_t>(x.shape[0]);
  const ptrdiff_t in = static_cast<ptrdiff_t>(x.shape[1]);
  const ptrdiff_t out = static_cast<ptrdiff_t>(W.shape[0]);
  y = QTensor({x.shape[0], W.shape[0]});
#pragma omp parallel for collapse(2) schedule(static)
  for (ptrdiff_t b = 0; b < B; ++b)
    for (ptrdiff_t o = 0; o < out; ++o) {
      Quaternion acc;
      for (ptrdiff_t i = 0; i < in; ++i)
        acc += W.get(static_cast<std::size_t>(o * in + i)) * x.get(static_cast<std::size_t>(b * in + i));
      y.set(static_cast<std::size_t>(b * out + o), acc);
    }
}

void qlinear_backward(const QTensor& W, const QTensor& x, const QTensor& dy, QTensor* dx, QTensor* dW) {
  linear_check(W, x);
  const ptrdiff_t B = static_cast<ptrdiff_t>(x.shape[0]);
  const ptrdiff_t in = static_cast<ptrdiff_t>(x.shape[1]);
  const ptrdiff_t out = static_cast<ptrdiff_t>(W.shape[0]);
  if (dx) {
    *dx = QTensor(x.shape);
#pragma omp parallel for collapse(2) schedule(static)
    for (ptrdiff_t b = 0; b < B; ++b)
      for (ptrdiff_t i = 0; i < in; ++i) {
        Quaternion acc;
        for (ptrdiff_t o = 0; o < out; ++o)
          acc += W.get(static_cast<std::size_t>(o * in + i)).conj() * dy.get(static_cast<std::size_t>(b * out + o));
        dx->set(static_cast<std::size_t>(b * in + i), acc);
      }
  }
  if (dW) {
    *dW = QTensor(W.shape);
#pragma omp parallel for collapse(2) schedule(static)
    for (ptrdiff_t o = 0; o < out; ++o)
      for (ptrdiff_t i = 0; i < in; ++i) {
        Quaternion acc;
        for (ptrdiff_t b = 0; b < B; ++b)
          acc += dy.get(static_cast<std::size_t>(b * out + o)) * x.get(static_cast<std::size_t>(b * in + i)).conj();
        dW->set(static_cast<std::size_t>(o * in + i), acc);
      }
  }
}

void conv_apply(const QTensor& K, const QTensor& x, const ConvGeom& g, QTensor& y) {
  const auto d = conv_dims(K, x, y, g);
  const ptrdiff_t B = static_cast<ptrdiff_t>(d.B), Co = static_cast<ptrdiff_t>(d.Co);
#pragma omp parallel for collapse(2) schedule(static)
  for (ptrdiff_t b = 0; b < B; ++b)
    for (ptrdiff_t o = 0; o < Co; ++o)
      for (std::size_t u = 0; u < d.Ho; ++u)
        for (std::size_t v = 0; v < d.Wo; ++v) {
          const auto bb = static_cast<std::size_t>(b), oo = static_cast<std::size_t>(o);
          y.set(yi(d, bb, oo, u, v), conv_point(K, x, d, bb, oo, u, v));
        }
}

void conv_apply_adjoint(const QTensor& K, const QTensor& y, const ConvGeom& g, QTensor& x) {
  const auto d = conv_dims(K, x, y, g);
  const ptrdiff_t B = static_cast<ptrdiff_t>(d.B), Ci = static_cast<ptrdiff_t>(d.Ci);
  // Gather: each input cell collects every (output cell, tap) that reads it.
#pragma omp parallel for collapse(2) schedule(static)
  for (ptrdiff_t b = 0; b < B; ++b)
    for (ptrdiff_t c = 0; c < Ci; ++c)
      for (std::size_t h = 0; h < d.H; ++h)
        for (std::size_t w = 0; w < d.W; ++w) {
          const auto bb = static_cast<std::size_t>(b), cc = static_cast<std::size_t>(c);
          Quaternion acc;
          for (std::size_t o = 0; o < d.Co; ++o)
            for (std::size_t a = 0; a < d.k; ++a) {
              const ptrdiff_t u = dst(h, a, d, d.Ho);
              if (u < 0) continue;
              for (std::size_t e = 0; e < d.k; ++e) {
                const ptrdiff_t v = dst(w, e, d, d.Wo);
                if (v < 0) continue;
                acc += K.get(ki(d, o, cc, a, e)).conj() *
                       y.get(yi(d, bb, o, static_cast<std::size_t>(u), static_cast<std::size_t>(v)));
              }
            }
          x.set(xi(d, bb, cc, h, w), acc);
        }
}

void conv_weight_grad(const QTensor& x, const QTensor& dy, const ConvGeom& g, QTensor& dK) {
  const auto d = conv_dims(dK, x, dy, g);
  const ptrdiff_t Co = static_cast<ptrdiff_t>(d.Co), Ci = static_cast<ptrdiff_t>(d.Ci);
#pragma omp parallel for collapse(2) schedule(static)
  for (ptrdiff_t o = 0; o < Co; ++o)
    for (ptrdiff_t c = 0; c < Ci; ++c)
      for (std::size_t a = 0; a < d.k; ++a)
        for (std::size_t e = 0; e < d.k; ++e) {
          const auto oo = static_cast<std::size_t>(o), cc = static_cast<std::size_t>(c);
          Quaternion acc;
          for (std::size_t b = 0; b < d.B; ++b)
            for (std::size_t u = 0; u < d.Ho; ++u) {
              const ptrdiff_t h = src(u, a, d, d.H);
              if (h < 0) continue;
              for (std::size_t v = 0; v < d.Wo; ++v) {
                const ptrdiff_t w = src(v, e, d, d.W);
                if (w < 0) continue;
                acc += dy.get(yi(d, b, oo, u, v)) *
                       x.get(xi(d, b, cc, static_cast<std::size_t>(h), static_cast<std::size_t>(w))).conj();
              }
            }
          dK.set(ki(d, oo, cc, a, e), acc);
        }
}

}  // namespace parallel

}  // namespace qwgan::kernels
