#include "qwgan/qnn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "qwgan/errors.hpp"

namespace qwgan::qnn {

namespace {

std::atomic<Fault> g_fault{Fault::None};

void accumulate(QTensor& dst, const QTensor& src) {
  if (dst.c[0].empty()) {
    dst = src;
    return;
  }
  if (dst.size() != src.size()) throw NumericError("tape: gradient size mismatch");
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < dst.size(); ++i) dst.c[l][i] += src.c[l][i];
}

QTensor scalar(double v) {
  QTensor t(Shape{});
  t.c[0][0] = v;
  return t;
}

void lin_fwd(KernelMode m, const QTensor& W, const QTensor& x, QTensor& y) {
  if (m == KernelMode::Serial)
    kernels::serial::qlinear_forward(W, x, y);
  else
    kernels::parallel::qlinear_forward(W, x, y);
}
void lin_bwd(KernelMode m, const QTensor& W, const QTensor& x, const QTensor& dy, QTensor* dx, QTensor* dW) {
  if (m == KernelMode::Serial)
    kernels::serial::qlinear_backward(W, x, dy, dx, dW);
  else
    kernels::parallel::qlinear_backward(W, x, dy, dx, dW);
}
void conv_fwd(KernelMode m, const QTensor& K, const QTensor& x, const kernels::ConvGeom& g, QTensor& y) {
  if (m == KernelMode::Serial)
    kernels::serial::conv_apply(K, x, g, y);
  else
    kernels::parallel::conv_apply(K, x, g, y);
}
void conv_adj(KernelMode m, const QTensor& K, const QTensor& y, const kernels::ConvGeom& g, QTensor& x) {
  if (m == KernelMode::Serial)
    kernels::serial::conv_apply_adjoint(K, y, g, x);
  else
    kernels::parallel::conv_apply_adjoint(K, y, g, x);
}
void conv_wgrad(KernelMode m, const QTensor& x, const QTensor& dy, const kernels::ConvGeom& g, QTensor& dK) {
  if (m == KernelMode::Serial)
    kernels::serial::conv_weight_grad(x, dy, g, dK);
  else
    kernels::parallel::conv_weight_grad(x, dy, g, dK);
}

// Adds bias[o] to every entry of channel/feature o of a [B, O, ...] tensor.
void add_bias(QTensor& y, const QTensor& bias) {
  const std::size_t B = y.shape[0], O = y.shape[1];
  if (bias.shape != Shape{O})
    throw InputError("bias " + shape_string(bias.shape) + " does not match " + std::to_string(O) + " outputs");
  const std::size_t inner = y.size() / (B * O);
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t k = 0; k < inner; ++k) y.c[l][(b * O + o) * inner + k] += bias.c[l][o];
}

QTensor bias_grad(const QTensor& dy) {
  const std::size_t B = dy.shape[0], O = dy.shape[1];
  const std::size_t inner = dy.size() / (B * O);
  QTensor g({O});
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t k = 0; k < inner; ++k) g.c[l][o] += dy.c[l][(b * O + o) * inner + k];
  return g;
}

}  // namespace

void set_fault(Fault f) { g_fault.store(f); }
Fault current_fault() { return g_fault.load(); }

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Param: return "param";
    case OpKind::Input: return "input";
    case OpKind::QLinear: return "qlinear";
    case OpKind::QConv2d: return "qconv2d";
    case OpKind::QDeconv2d: return "qdeconv2d";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::ZeroReal: return "zero_real";
    case OpKind::Reshape: return "reshape";
    case OpKind::MeanReal: return "mean_real";
    case OpKind::Sub: return "sub";
    case OpKind::Scale: return "scale";
    case OpKind::SumSquares: return "sum_squares";
    case OpKind::InnerConst: return "inner_const";
  }
  return "unknown";
}

const QTensor& Gradients::of(const ParamTensor& p) const {
  for (std::size_t k = 0; k < params.size(); ++k)
    if (params[k] == &p) return param_grads[k];
  throw InputError("gradients: parameter '" + p.name + "' is not on the tape");
}

Tape::Node Tape::push(Rec r) {
  nodes_.push_back(std::move(r));
  return nodes_.size() - 1;
}

const Tape::Rec& Tape::at(Node n) const {
  if (n >= nodes_.size()) throw InputError("tape: unknown node");
  return nodes_[n];
}

Tape::Node Tape::param(const ParamTensor& p) {
  Rec r{OpKind::Param, {}, p.value};
  r.param = &p;
  return push(std::move(r));
}

Tape::Node Tape::input(QTensor x) { return push(Rec{OpKind::Input, {}, std::move(x)}); }

Tape::Node Tape::qlinear(Node x, Node W, Node bias) {
  Rec r{OpKind::QLinear, {x, W, bias}, {}};
  lin_fwd(mode_, at(W).value, at(x).value, r.value);
  if (bias != kNone) add_bias(r.value, at(bias).value);
  return push(std::move(r));
}

Tape::Node Tape::qconv2d(Node x, Node K, Node bias, const kernels::ConvGeom& g) {
  const auto& xv = at(x).value;
  const auto& kv = at(K).value;
  if (xv.shape.size() != 4 || kv.shape.size() != 4)
    throw InputError("qconv2d: expected [B, C, H, W] input and [Co, Ci, k, k] kernel");
  Rec r{OpKind::QConv2d, {x, K, bias}, QTensor({xv.shape[0], kv.shape[0], kernels::conv_out(xv.shape[2], g),
                                               kernels::conv_out(xv.shape[3], g)})};
  r.geom = g;
  conv_fwd(mode_, kv, xv, g, r.value);
  if (bias != kNone) add_bias(r.value, at(bias).value);
  return push(std::move(r));
}

Tape::Node Tape::qdeconv2d(Node x, Node K, Node bias, const kernels::ConvGeom& g) {
  const auto& xv = at(x).value;
  const auto& kv = at(K).value;
  if (xv.shape.size() != 4 || kv.shape.size() != 4)
    throw InputError("qdeconv2d: expected [B, C, H, W] input and [Ci, Co, k, k] kernel");
  const std::size_t ho = kernels::deconv_out(xv.shape[2], g), wo = kernels::deconv_out(xv.shape[3], g);
  if (kernels::conv_out(ho, g) != xv.shape[2] || kernels::conv_out(wo, g) != xv.shape[3])
    throw InputError("qdeconv2d: geometry does not invert");
  Rec r{OpKind::QDeconv2d, {x, K, bias}, QTensor({xv.shape[0], kv.shape[1], ho, wo})};
  r.geom = g;
  conv_adj(mode_, kv, xv, g, r.value);
  if (bias != kNone) add_bias(r.value, at(bias).value);
  return push(std::move(r));
}

Tape::Node Tape::leaky_relu(Node x, double slope) {
  Rec r{OpKind::LeakyRelu, {x}, at(x).value};
  r.scalar = slope;
  for (auto& a : r.value.c)
    for (double& v : a)
      if (!(v > 0.0)) v *= slope;
  return push(std::move(r));
}

Tape::Node Tape::tanh(Node x) {
  Rec r{OpKind::Tanh, {x}, at(x).value};
  for (auto& a : r.value.c)
    for (double& v : a) v = std::tanh(v);
  return push(std::move(r));
}

Tape::Node Tape::zero_real(Node x) {
  Rec r{OpKind::ZeroReal, {x}, at(x).value};
  std::fill(r.value.c[0].begin(), r.value.c[0].end(), 0.0);
  return push(std::move(r));
}

Tape::Node Tape::reshape(Node x, const Shape& per_sample) {
  Rec r{OpKind::Reshape, {x}, at(x).value};
  Shape s{r.value.shape.at(0)};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  if (numel(s) != r.value.size())
    throw InputError("reshape: cannot view " + shape_string(r.value.shape) + " as " + shape_string(s));
  r.value.shape = s;
  return push(std::move(r));
}

Tape::Node Tape::mean_real(Node x) {
  const auto& v = at(x).value;
  if (v.size() == 0) throw InputError("mean_real: empty tensor");
  double s = 0.0;
  for (double a : v.c[0]) s += a;
  return push(Rec{OpKind::MeanReal, {x}, scalar(s / static_cast<double>(v.size()))});
}

Tape::Node Tape::sub(Node a, Node b) {
  const auto& av = at(a).value;
  const auto& bv = at(b).value;
  if (av.shape != bv.shape)
    throw InputError("sub: shapes " + shape_string(av.shape) + " and " + shape_string(bv.shape) + " differ");
  Rec r{OpKind::Sub, {a, b}, av};
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < av.size(); ++i) r.value.c[l][i] -= bv.c[l][i];
  return push(std::move(r));
}

Tape::Node Tape::scale(Node a, double s) {
  Rec r{OpKind::Scale, {a}, at(a).value};
  r.scalar = s;
  for (auto& c : r.value.c)
    for (double& v : c) v *= s;
  return push(std::move(r));
}

Tape::Node Tape::sum_squares(Node x) {
  const auto& v = at(x).value;
  return push(Rec{OpKind::SumSquares, {x}, scalar(inner(v, v))});
}

Tape::Node Tape::inner_const(Node x, QTensor r) {
  const auto& v = at(x).value;
  if (r.size() != v.size()) throw InputError("inner_const: size mismatch");
  Rec rec{OpKind::InnerConst, {x}, scalar(inner(v, r))};
  rec.aux = std::move(r);
  return push(std::move(rec));
}

double Tape::min_kink_distance() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : nodes_) {
    if (r.kind != OpKind::LeakyRelu) continue;
    for (const auto& a : nodes_[r.in[0]].value.c)
      for (double v : a) m = std::min(m, std::abs(v));
  }
  return m;
}

Gradients Tape::backward(Node loss) const {
  const auto& lv = at(loss).value;
  if (lv.size() != 1 || lv.c[1][0] != 0.0 || lv.c[2][0] != 0.0 || lv.c[3][0] != 0.0)
    throw InputError("backward: loss must be a real scalar, got shape " + shape_string(lv.shape));
  Gradients out;
  std::vector<QTensor> G(nodes_.size());
  G[loss] = QTensor(lv.shape);
  G[loss].c[0][0] = 1.0;

  for (Node n = loss + 1; n-- > 0;) {
    ++out.ops_visited;
    const Rec& r = nodes_[n];
    if (G[n].size() == 0) continue;
    const QTensor& g = G[n];
    switch (r.kind) {
      case OpKind::Param:
      case OpKind::Input:
        break;
      case OpKind::QLinear: {
        QTensor dx, dW;
        lin_bwd(mode_, nodes_[r.in[1]].value, nodes_[r.in[0]].value, g, &dx, &dW);
        if (current_fault() == Fault::QLinearSignFlip)
          for (auto& a : dW.c)
            for (double& v : a) v = -v;
        accumulate(G[r.in[0]], dx);
        accumulate(G[r.in[1]], dW);
        if (r.in[2] != kNone) accumulate(G[r.in[2]], bias_grad(g));
        break;
      }
      case OpKind::QConv2d: {
        const auto& xv = nodes_[r.in[0]].value;
        const auto& kv = nodes_[r.in[1]].value;
        QTensor dx(xv.shape), dK(kv.shape);
        conv_adj(mode_, kv, g, r.geom, dx);
        conv_wgrad(mode_, xv, g, r.geom, dK);
        accumulate(G[r.in[0]], dx);
        accumulate(G[r.in[1]], dK);
        if (r.in[2] != kNone) accumulate(G[r.in[2]], bias_grad(g));
        break;
      }
      case OpKind::QDeconv2d: {
        const auto& xv = nodes_[r.in[0]].value;
        const auto& kv = nodes_[r.in[1]].value;
        QTensor dx(xv.shape), dK(kv.shape);
        conv_fwd(mode_, kv, g, r.geom, dx);
        conv_wgrad(mode_, g, xv, r.geom, dK);
        accumulate(G[r.in[0]], dx);
        accumulate(G[r.in[1]], dK);
        if (r.in[2] != kNone) accumulate(G[r.in[2]], bias_grad(g));
        break;
      }
      case OpKind::LeakyRelu: {
        const auto& xv = nodes_[r.in[0]].value;
        QTensor dx = g;
        for (std::size_t l = 0; l < 4; ++l)
          for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(xv.c[l][i] > 0.0)) dx.c[l][i] *= r.scalar;
        accumulate(G[r.in[0]], dx);
        break;
      }
      case OpKind::Tanh: {
        QTensor dx = g;
        for (std::size_t l = 0; l < 4; ++l)
          for (std::size_t i = 0; i < dx.size(); ++i) dx.c[l][i] *= 1.0 - r.value.c[l][i] * r.value.c[l][i];
        accumulate(G[r.in[0]], dx);
        break;
      }
      case OpKind::ZeroReal: {
        QTensor dx = g;
        std::fill(dx.c[0].begin(), dx.c[0].end(), 0.0);
        accumulate(G[r.in[0]], dx);
        break;
      }
      case OpKind::Reshape: {
        QTensor dx = g;
        dx.shape = nodes_[r.in[0]].value.shape;
        accumulate(G[r.in[0]], dx);
        break;
      }
      case OpKind::MeanReal: {
        const auto& xv = nodes_[r.in[0]].value;
        QTensor dx(xv.shape);
        std::fill(dx.c[0].begin(), dx.c[0].end(), g.c[0][0] / static_cast<double>(xv.size()));
        accumulate(G[r.in[0]], dx);
        break;
      }
      case OpKind::Sub: {
        accumulate(G[r.in[0]], g);
        QTensor neg = g;
        for (auto& a : neg.c)
          for (double& v : a) v = -v;
        accumulate(G[r.in[1]], neg);
        break;
      }
      case OpKind::Scale: {
        QTensor dx = g;
        for (auto& a : dx.c)
          for (double& v : a) v *= r.scalar;
        accumulate(G[r.in[0]], dx);
        break;
      }
      case OpKind::SumSquares: {
        QTensor dx = nodes_[r.in[0]].value;
        for (auto& a : dx.c)
          for (double& v : a) v *= 2.0 * g.c[0][0];
        accumulate(G[r.in[0]], dx);
        break;
      }
      case OpKind::InnerConst: {
        QTensor dx = r.aux;
        dx.shape = nodes_[r.in[0]].value.shape;
        for (auto& a : dx.c)
          for (double& v : a) v *= g.c[0][0];
        accumulate(G[r.in[0]], dx);
        break;
      }
    }
  }

  for (Node n = 0; n < nodes_.size(); ++n) {
    const Rec& r = nodes_[n];
    if (r.kind != OpKind::Param) continue;
    QTensor gp = G[n].size() ? G[n] : QTensor(r.value.shape);
    gp.shape = r.value.shape;
    auto it = std::find(out.params.begin(), out.params.end(), r.param);
    if (it == out.params.end()) {
      out.params.push_back(r.param);
      out.param_grads.push_back(std::move(gp));
    } else {
      auto& dst = out.param_grads[static_cast<std::size_t>(it - out.params.begin())];
      for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t i = 0; i < dst.size(); ++i) dst.c[l][i] += gp.c[l][i];
    }
  }
  out.node_grads = std::move(G);
  return out;
}

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::QLinear: return "qlinear";
    case LayerKind::QConv2d: return "qconv2d";
    case LayerKind::QDeconv2d: return "qdeconv2d";
    case LayerKind::LeakyRelu: return "leaky_relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::ZeroReal: return "zero_real";
    case LayerKind::Reshape: return "reshape";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::QLinear, LayerKind::QConv2d, LayerKind::QDeconv2d, LayerKind::LeakyRelu,
                 LayerKind::Tanh, LayerKind::ZeroReal, LayerKind::Reshape})
    if (s == to_string(k)) return k;
  throw InputError("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out) {
  LayerSpec l;
  l.kind = LayerKind::QLinear;
  l.in = in;
  l.out = out;
  return l;
}

LayerSpec LayerSpec::conv(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p) {
  LayerSpec l;
  l.kind = LayerKind::QConv2d;
  l.in = in;
  l.out = out;
  l.geom = {k, s, p};
  return l;
}

LayerSpec LayerSpec::deconv(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p) {
  LayerSpec l = conv(in, out, k, s, p);
  l.kind = LayerKind::QDeconv2d;
  return l;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec l;
  l.kind = LayerKind::LeakyRelu;
  l.slope = slope;
  return l;
}

LayerSpec LayerSpec::tanh() {
  LayerSpec l;
  l.kind = LayerKind::Tanh;
  return l;
}

LayerSpec LayerSpec::zero_real() {
  LayerSpec l;
  l.kind = LayerKind::ZeroReal;
  return l;
}

LayerSpec LayerSpec::reshape(Shape s) {
  LayerSpec l;
  l.kind = LayerKind::Reshape;
  l.shape = std::move(s);
  return l;
}

std::vector<Shape> NetworkSpec::shapes() const {
  if (input.empty() || numel(input) == 0) throw InputError("network: empty input shape");
  std::vector<Shape> out;
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(L.kind) + "): ";
    switch (L.kind) {
      case LayerKind::QLinear:
        if (cur.size() != 1 || cur[0] != L.in)
          throw InputError(where + "expects [" + std::to_string(L.in) + "], gets " + shape_string(cur));
        if (L.out == 0) throw InputError(where + "zero outputs");
        cur = {L.out};
        break;
      case LayerKind::QConv2d:
        if (cur.size() != 3 || cur[0] != L.in)
          throw InputError(where + "expects [" + std::to_string(L.in) + ", H, W], gets " + shape_string(cur));
        if (L.out == 0) throw InputError(where + "zero output channels");
        try {
          cur = {L.out, kernels::conv_out(cur[1], L.geom), kernels::conv_out(cur[2], L.geom)};
        } catch (const InputError& e) {
          throw InputError(where + e.what());
        }
        break;
      case LayerKind::QDeconv2d:
        if (cur.size() != 3 || cur[0] != L.in)
          throw InputError(where + "expects [" + std::to_string(L.in) + ", H, W], gets " + shape_string(cur));
        if (L.out == 0) throw InputError(where + "zero output channels");
        try {
          const std::size_t h = kernels::deconv_out(cur[1], L.geom), w = kernels::deconv_out(cur[2], L.geom);
          if (kernels::conv_out(h, L.geom) != cur[1] || kernels::conv_out(w, L.geom) != cur[2])
            throw InputError("geometry does not invert");
          cur = {L.out, h, w};
        } catch (const InputError& e) {
          throw InputError(where + e.what());
        }
        break;
      case LayerKind::Reshape:
        if (numel(L.shape) != numel(cur))
          throw InputError(where + "cannot view " + shape_string(cur) + " as " + shape_string(L.shape));
        cur = L.shape;
        break;
      case LayerKind::LeakyRelu:
        if (!(L.slope >= 0.0) || !std::isfinite(L.slope)) throw InputError(where + "slope must be >= 0");
        break;
      case LayerKind::Tanh:
      case LayerKind::ZeroReal:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

Shape NetworkSpec::output() const {
  const auto s = shapes();
  return s.empty() ? input : s.back();
}

Network::Network(NetworkSpec spec, std::uint64_t seed, double init_std) : spec_(std::move(spec)) {
  spec_.shapes();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  params_.reserve(2 * spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& L = spec_.layers[i];
    Shape wshape;
    std::size_t fan_in = 0;
    switch (L.kind) {
      case LayerKind::QLinear:
        wshape = {L.out, L.in};
        fan_in = L.in;
        break;
      case LayerKind::QConv2d:
        wshape = {L.out, L.in, L.geom.kernel, L.geom.kernel};
        fan_in = L.in * L.geom.kernel * L.geom.kernel;
        break;
      case LayerKind::QDeconv2d:
        wshape = {L.in, L.out, L.geom.kernel, L.geom.kernel};
        fan_in = L.in * L.geom.kernel * L.geom.kernel;
        break;
      default:
        first_param_.push_back(std::string::npos);
        continue;
    }
    first_param_.push_back(params_.size());
    const double sd = init_std > 0.0 ? init_std : 1.0 / std::sqrt(4.0 * static_cast<double>(fan_in));
    ParamTensor w{"layer" + std::to_string(i) + ".weight", QTensor(wshape)};
    for (auto& a : w.value.c)
      for (double& v : a) v = sd * normal(rng);
    params_.push_back(std::move(w));
    params_.push_back({"layer" + std::to_string(i) + ".bias", QTensor({L.out})});
  }
}

Network::Network(NetworkSpec spec, std::vector<ParamTensor> params) : Network(std::move(spec), 0, 1.0) {
  if (params.size() != params_.size())
    throw InputError("network: expected " + std::to_string(params_.size()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].name != params_[k].name)
      throw InputError("network: parameter " + std::to_string(k) + " is '" + params[k].name + "', expected '" +
                       params_[k].name + "'");
    if (params[k].value.shape != params_[k].value.shape)
      throw InputError("network: " + params[k].name + " has shape " + shape_string(params[k].value.shape) +
                       ", expected " + shape_string(params_[k].value.shape));
    if (!params[k].value.all_finite()) throw InputError("network: " + params[k].name + " is not finite");
  }
  params_ = std::move(params);
}

Tape::Node Network::forward(Tape& t, Tape::Node x) const {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& L = spec_.layers[i];
    const std::size_t p = first_param_[i];
    switch (L.kind) {
      case LayerKind::QLinear:
        x = t.qlinear(x, t.param(params_[p]), t.param(params_[p + 1]));
        break;
      case LayerKind::QConv2d:
        x = t.qconv2d(x, t.param(params_[p]), t.param(params_[p + 1]), L.geom);
        break;
      case LayerKind::QDeconv2d:
        x = t.qdeconv2d(x, t.param(params_[p]), t.param(params_[p + 1]), L.geom);
        break;
      case LayerKind::LeakyRelu:
        x = t.leaky_relu(x, L.slope);
        break;
      case LayerKind::Tanh:
        x = t.tanh(x);
        break;
      case LayerKind::ZeroReal:
        x = t.zero_real(x);
        break;
      case LayerKind::Reshape:
        x = t.reshape(x, L.shape);
        break;
    }
  }
  return x;
}

QTensor Network::infer(const QTensor& x, KernelMode mode) const {
  Shape expect{x.shape.empty() ? 0 : x.shape[0]};
  expect.insert(expect.end(), spec_.input.begin(), spec_.input.end());
  if (x.shape != expect)
    throw InputError("network: input " + shape_string(x.shape) + ", expected " + shape_string(expect));
  Tape t(mode);
  const auto out = forward(t, t.input(x));
  return t.value(out);
}

double network_lipschitz_bound(const Network& net) {
  double bound = 1.0;
  const auto& layers = net.spec().layers;
  std::size_t p = 0;
  for (const auto& L : layers) {
    switch (L.kind) {
      case LayerKind::QLinear:
        bound *= real_block_spectral_norm(net.params()[p]);
        p += 2;
        break;
      case LayerKind::QConv2d:
      case LayerKind::QDeconv2d: {
        const auto overlap = static_cast<double>((L.geom.kernel + L.geom.stride - 1) / L.geom.stride);
        bound *= overlap * real_block_spectral_norm(net.params()[p]);
        p += 2;
        break;
      }
      case LayerKind::LeakyRelu:
        bound *= std::max(1.0, L.slope);
        break;
      case LayerKind::Tanh:
      case LayerKind::ZeroReal:
      case LayerKind::Reshape:
        break;
    }
  }
  return bound;
}

void RMSProp::step(std::vector<ParamTensor>& params, const Gradients& grads) {
  if (v_.empty())
    for (const auto& p : params) v_.emplace_back(p.value.shape);
  if (v_.size() != params.size()) throw InputError("rmsprop: parameter list changed between steps");
  const double rho = cfg_.rho, lr = cfg_.lr, eps = cfg_.eps;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const QTensor& g = grads.of(params[k]);
    QTensor& w = params[k].value;
    QTensor& v = v_[k];
    if (g.size() != w.size() || v.size() != w.size()) throw InputError("rmsprop: shape mismatch for " + params[k].name);
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g.c[l][i];
        v.c[l][i] = rho * v.c[l][i] + (1.0 - rho) * gi * gi;
        w.c[l][i] -= lr * gi / (std::sqrt(v.c[l][i]) + eps);
      }
  }
}

void clip_params(std::vector<ParamTensor>& params, double c) {
  if (!(c > 0.0)) throw InputError("clip_params: c must be positive");
  for (auto& p : params)
    for (auto& a : p.value.c)
      for (double& v : a) v = std::clamp(v, -c, c);
}

double max_abs_param(const std::vector<ParamTensor>& params) {
  double m = 0.0;
  for (const auto& p : params) m = std::max(m, p.value.max_abs());
  return m;
}

namespace {

// [out, fan_in] quaternion view of a weight tensor.
std::pair<std::size_t, std::size_t> weight_dims(const ParamTensor& w) {
  const auto& s = w.value.shape;
  if (s.empty()) throw InputError("weight '" + w.name + "' has no shape");
  const std::size_t out = s[0];
  return {out, out ? w.value.size() / out : 0};
}

}  // namespace

double real_block_spectral_norm(const ParamTensor& w) {
  const auto [out, fan] = weight_dims(w);
  Eigen::MatrixXd A(4 * out, 4 * fan);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < fan; ++i)
      A.block<4, 4>(static_cast<Eigen::Index>(4 * o), static_cast<Eigen::Index>(4 * i)) =
          left_matrix(w.value.get(o * fan + i));
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  return svd.singularValues()(0);
}

double clipped_norm_bound(const ParamTensor& w, double c) {
  const auto [out, fan] = weight_dims(w);
  return 4.0 * c * std::sqrt(static_cast<double>(out) * static_cast<double>(fan));
}

namespace {

using Builder = std::function<Tape::Node(Tape&, const std::vector<Tape::Node>&)>;

double eval_loss(std::vector<ParamTensor>& ps, const Builder& build) {
  Tape t;
  std::vector<Tape::Node> nodes;
  for (const auto& p : ps) nodes.push_back(t.param(p));
  return t.value(build(t, nodes)).c[0][0];
}

LayerCheck check_case(const std::string& name, std::vector<ParamTensor>& ps, const Builder& build,
                      const GradcheckOptions& o) {
  LayerCheck lc;
  lc.layer = name;
  Gradients grads;
  {
    Tape t;
    std::vector<Tape::Node> nodes;
    for (const auto& p : ps) nodes.push_back(t.param(p));
    grads = t.backward(build(t, nodes));
  }
  for (auto& p : ps) {
    const QTensor analytic = grads.of(p);
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double keep = p.value.c[l][i];
        auto at = [&](double dx) {
          p.value.c[l][i] = keep + dx;
          return eval_loss(ps, build);
        };
        const double h = o.step;
        const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        p.value.c[l][i] = keep;
        const double a = analytic.c[l][i];
        const double err = std::abs(a - numeric);
        lc.max_abs = std::max(lc.max_abs, err);
        ++lc.checked;
        if (err <= o.abs_tol) continue;
        const double rel = err / std::max(std::abs(a), std::abs(numeric));
        lc.max_rel = std::max(lc.max_rel, rel);
        if (rel > o.rel_tol) lc.pass = false;
      }
  }
  return lc;
}

struct Draw {
  std::mt19937_64& rng;
  std::normal_distribution<double> n{0.0, 1.0};

  ParamTensor tensor(const std::string& name, Shape s, double sd = 1.0, double away = 0.0) {
    ParamTensor p{name, QTensor(std::move(s))};
    for (auto& a : p.value.c)
      for (double& v : a) {
        do {
          v = sd * n(rng);
        } while (std::abs(v) < away);
      }
    return p;
  }
  QTensor like(const QTensor& t) { return tensor("r", t.shape).value; }
};

// Random input ParamTensors until every leaky ReLU input stays clear of 0.
template <class Setup>
void redraw_until_smooth(Setup&& setup, std::vector<ParamTensor>& ps, const Builder& build, double margin) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    setup();
    Tape t;
    std::vector<Tape::Node> nodes;
    for (const auto& p : ps) nodes.push_back(t.param(p));
    build(t, nodes);
    if (t.min_kink_distance() > margin) return;
  }
  throw NumericError("gradcheck: could not draw inputs away from activation kinks");
}

}  // namespace

GradcheckReport gradcheck(std::uint64_t seed, GradcheckArch arch, const GradcheckOptions& opts) {
  std::mt19937_64 rng(seed);
  Draw d{rng};
  GradcheckReport rep;
  const bool big = arch == GradcheckArch::Default;
  const double margin = 20.0 * opts.step;

  auto run = [&](const std::string& name, std::vector<ParamTensor> ps, const Builder& build) {
    rep.layers.push_back(check_case(name, ps, build, opts));
  };

  {
    const std::size_t B = big ? 4 : 2, in = big ? 6 : 3, out = big ? 5 : 4;
    std::vector<ParamTensor> ps{d.tensor("x", {B, in}), d.tensor("W", {out, in}), d.tensor("b", {out})};
    const QTensor r = d.like(QTensor({B, out}));
    run("qlinear", std::move(ps), [r](Tape& t, const auto& n) { return t.inner_const(t.qlinear(n[0], n[1], n[2]), r); });
  }
  {
    const kernels::ConvGeom g{3, 2, 1};
    const std::size_t H = big ? 7 : 5;
    std::vector<ParamTensor> ps{d.tensor("x", {2, 2, H, H}), d.tensor("K", {3, 2, 3, 3}), d.tensor("b", {3})};
    const std::size_t ho = kernels::conv_out(H, g);
    const QTensor r = d.like(QTensor({2, 3, ho, ho}));
    run("qconv2d", std::move(ps),
        [r, g](Tape& t, const auto& n) { return t.inner_const(t.qconv2d(n[0], n[1], n[2], g), r); });
  }
  {
    const kernels::ConvGeom g{big ? std::size_t{4} : std::size_t{3}, 2, 1};
    const std::size_t H = big ? 4 : 3;
    std::vector<ParamTensor> ps{d.tensor("x", {2, 3, H, H}), d.tensor("K", {3, 2, g.kernel, g.kernel}),
                                d.tensor("b", {2})};
    const std::size_t ho = kernels::deconv_out(H, g);
    const QTensor r = d.like(QTensor({2, 2, ho, ho}));
    run("qdeconv2d", std::move(ps),
        [r, g](Tape& t, const auto& n) { return t.inner_const(t.qdeconv2d(n[0], n[1], n[2], g), r); });
  }
  for (double slope : {0.2, 0.0}) {
    std::vector<ParamTensor> ps{d.tensor("x", {3, 4}, 1.0, margin)};
    const QTensor r = d.like(ps[0].value);
    run(slope > 0 ? "leaky_relu" : "relu", std::move(ps),
        [r, slope](Tape& t, const auto& n) { return t.inner_const(t.leaky_relu(n[0], slope), r); });
  }
  {
    std::vector<ParamTensor> ps{d.tensor("x", {3, 4})};
    const QTensor r = d.like(ps[0].value);
    run("tanh", std::move(ps), [r](Tape& t, const auto& n) { return t.inner_const(t.tanh(n[0]), r); });
  }
  {
    std::vector<ParamTensor> ps{d.tensor("x", {3, 4})};
    const QTensor r = d.like(ps[0].value);
    run("zero_real", std::move(ps), [r](Tape& t, const auto& n) { return t.inner_const(t.zero_real(n[0]), r); });
  }
  {
    std::vector<ParamTensor> ps{d.tensor("x", {2, 6})};
    run("reshape+mean_real", std::move(ps),
        [](Tape& t, const auto& n) { return t.mean_real(t.tanh(t.reshape(n[0], {2, 3}))); });
  }
  {
    std::vector<ParamTensor> ps{d.tensor("a", {2, 3}), d.tensor("b", {2, 3})};
    run("sub+scale+sum_squares", std::move(ps),
        [](Tape& t, const auto& n) { return t.sum_squares(t.scale(t.sub(n[0], n[1]), 0.7)); });
  }
  {
    // Three-layer critic scored on two batches, as in the critic objective.
    const std::size_t n_in = big ? 4 : 2, hidden = big ? 8 : 5;
    NetworkSpec spec{{n_in},
                     {LayerSpec::linear(n_in, hidden), LayerSpec::leaky_relu(0.2), LayerSpec::linear(hidden, hidden),
                      LayerSpec::leaky_relu(0.2), LayerSpec::linear(hidden, 1)}};
    const Network net(spec, seed ^ 0x5bd1e995u, 0.5);
    std::vector<ParamTensor> ps = net.params();
    const std::size_t np = ps.size();
    ps.push_back(d.tensor("real", {3, n_in}));
    ps.push_back(d.tensor("fake", {3, n_in}));
    Builder build = [spec, np](Tape& t, const std::vector<Tape::Node>& n) {
      // Replays the network with the perturbable copies held in ps.
      auto run_net = [&](Tape::Node x) {
        std::size_t p = 0;
        for (const auto& L : spec.layers) {
          if (L.kind == LayerKind::QLinear) {
            x = t.qlinear(x, n[p], n[p + 1]);
            p += 2;
          } else {
            x = t.leaky_relu(x, L.slope);
          }
        }
        return x;
      };
      return t.sub(t.mean_real(run_net(n[np])), t.mean_real(run_net(n[np + 1])));
    };
    redraw_until_smooth(
        [&] {
          ps[np] = d.tensor("real", {3, n_in});
          ps[np + 1] = d.tensor("fake", {3, n_in});
        },
        ps, build, margin);
    run("critic3", std::move(ps), build);
  }
  {
    // Generator-style stack: linear, ReLU, reshape, deconv, tanh, zero real part.
    const kernels::ConvGeom g{3, 2, 1};
    std::vector<ParamTensor> ps{d.tensor("z", {2, 3}), d.tensor("W", {8, 3}), d.tensor("b", {8}),
                                d.tensor("K", {2, 2, 3, 3}, 0.5), d.tensor("c", {2})};
    const QTensor r = d.like(QTensor({2, 2, 3, 3}));
    Builder build = [r, g](Tape& t, const std::vector<Tape::Node>& n) {
      auto h = t.reshape(t.leaky_relu(t.qlinear(n[0], n[1], n[2]), 0.0), {2, 2, 2});
      return t.inner_const(t.zero_real(t.tanh(t.qdeconv2d(h, n[3], n[4], g))), r);
    };
    redraw_until_smooth([&] { ps[0] = d.tensor("z", {2, 3}); }, ps, build, margin);
    run("generator", std::move(ps), build);
  }

  for (const auto& l : rep.layers) {
    if (l.pass) continue;
    if (rep.pass) rep.first_failure = l.layer;
    rep.pass = false;
  }
  return rep;
}

}  // namespace qwgan::qnn
