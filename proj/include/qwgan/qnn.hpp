#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qwgan/kernels.hpp"
#include "qwgan/qtensor.hpp"

namespace qwgan::qnn {

/// Named quaternion weight tensor.
struct ParamTensor {
  std::string name;
  QTensor value;
};

enum class OpKind {
  Param,
  Input,
  QLinear,
  QConv2d,
  QDeconv2d,
  LeakyRelu,
  Tanh,
  ZeroReal,
  Reshape,
  MeanReal,
  Sub,
  Scale,
  SumSquares,
  InnerConst,
};

const char* to_string(OpKind k);

enum class KernelMode { Serial, Parallel };

class Tape;

/// Gradient of a scalar loss with respect to every node of a tape.
struct Gradients {
  std::vector<const ParamTensor*> params;
  std::vector<QTensor> param_grads;  // aligned with params
  std::vector<QTensor> node_grads;   // one per tape node
  std::size_t ops_visited = 0;

  /// Throws InputError when p was not recorded on the tape.
  const QTensor& of(const ParamTensor& p) const;
};

/// Records quaternion operations for one forward pass; backward() replays
/// them in reverse. Parameters are referenced, not copied, so they must
/// outlive the tape and stay put in memory.
class Tape {
 public:
  using Node = std::size_t;
  static constexpr Node kNone = std::numeric_limits<Node>::max();

  explicit Tape(KernelMode mode = KernelMode::Parallel) : mode_(mode) {}

  Node param(const ParamTensor& p);
  Node input(QTensor x);

  /// x [B, in], W [out, in], bias [out] or kNone.
  Node qlinear(Node x, Node W, Node bias);
  /// x [B, Ci, H, W], K [Co, Ci, k, k], bias [Co] or kNone.
  Node qconv2d(Node x, Node K, Node bias, const kernels::ConvGeom& g);
  /// Adjoint of qconv2d. x [B, Ci, H, W], K [Ci, Co, k, k] (the forward
  /// convolution maps Co channels to Ci), output spatial (in - 1) s - 2 p + k.
  Node qdeconv2d(Node x, Node K, Node bias, const kernels::ConvGeom& g);
  /// Componentwise; slope 0 gives ReLU.
  Node leaky_relu(Node x, double slope);
  Node tanh(Node x);
  Node zero_real(Node x);
  /// Keeps the batch dimension and reshapes the rest.
  Node reshape(Node x, const Shape& per_sample);
  /// Mean of the real components (scalar).
  Node mean_real(Node x);
  Node sub(Node a, Node b);
  Node scale(Node a, double s);
  /// Sum of squares of all real components (scalar).
  Node sum_squares(Node x);
  /// Real inner product with a constant tensor (scalar).
  Node inner_const(Node x, QTensor r);

  const QTensor& value(Node n) const { return nodes_.at(n).value; }
  OpKind kind(Node n) const { return nodes_.at(n).kind; }
  std::size_t size() const { return nodes_.size(); }

  /// loss must be a real scalar node.
  Gradients backward(Node loss) const;

  /// Smallest |component| entering a leaky ReLU, +inf when there is none.
  double min_kink_distance() const;

 private:
  struct Rec {
    Rec(OpKind k, std::vector<Node> i, QTensor v) : kind(k), in(std::move(i)), value(std::move(v)) {}
    OpKind kind;
    std::vector<Node> in;
    QTensor value;
    const ParamTensor* param = nullptr;
    kernels::ConvGeom geom;
    double scalar = 0.0;
    QTensor aux;
  };
  Node push(Rec r);
  const Rec& at(Node n) const;

  KernelMode mode_;
  std::vector<Rec> nodes_;
};

enum class Fault { None, QLinearSignFlip };
/// Test hook: corrupts the qlinear weight gradient so the checker must fail.
void set_fault(Fault f);
Fault current_fault();

enum class LayerKind { QLinear, QConv2d, QDeconv2d, LeakyRelu, Tanh, ZeroReal, Reshape };

const char* to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::QLinear;
  std::size_t in = 0;   // features or channels
  std::size_t out = 0;  // features or channels
  kernels::ConvGeom geom;
  double slope = 0.2;   // LeakyRelu only; 0 for ReLU
  Shape shape;          // Reshape target, per sample

  static LayerSpec linear(std::size_t in, std::size_t out);
  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p);
  static LayerSpec deconv(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p);
  static LayerSpec leaky_relu(double slope);
  static LayerSpec relu() { return leaky_relu(0.0); }
  static LayerSpec tanh();
  static LayerSpec zero_real();
  static LayerSpec reshape(Shape s);
};

struct NetworkSpec {
  Shape input;  // per sample
  std::vector<LayerSpec> layers;

  /// Per-sample output shape after each layer. Throws InputError naming the
  /// first layer whose input shape or convolution arithmetic is invalid.
  std::vector<Shape> shapes() const;
  Shape output() const;
};

class Network {
 public:
  Network() = default;
  /// Weights ~ N(0, init_std^2), or N(0, 1 / (4 fan_in)) when init_std <= 0. Biases 0.
  Network(NetworkSpec spec, std::uint64_t seed, double init_std = 0.0);
  /// Adopts saved parameters; names and shapes must match what the spec creates.
  Network(NetworkSpec spec, std::vector<ParamTensor> params);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }

  /// x has shape [B, input...].
  Tape::Node forward(Tape& t, Tape::Node x) const;
  QTensor infer(const QTensor& x, KernelMode mode = KernelMode::Parallel) const;

 private:
  NetworkSpec spec_;
  std::vector<ParamTensor> params_;
  std::vector<std::size_t> first_param_;  // per layer index into params_, or npos
};

struct RMSPropConfig {
  double lr = 2e-4;
  double rho = 0.99;
  double eps = 1e-8;
};

/// v <- rho v + (1 - rho) g^2, w <- w - lr g / (sqrt(v) + eps), per real component.
class RMSProp {
 public:
  explicit RMSProp(RMSPropConfig cfg = {}) : cfg_(cfg) {}
  void step(std::vector<ParamTensor>& params, const Gradients& grads);
  const RMSPropConfig& config() const { return cfg_; }
  const std::vector<QTensor>& accumulators() const { return v_; }

 private:
  RMSPropConfig cfg_;
  std::vector<QTensor> v_;
};

/// Clamps every real component into [-c, c]; throws InputError when c <= 0.
void clip_params(std::vector<ParamTensor>& params, double c);
double max_abs_param(const std::vector<ParamTensor>& params);

/// Largest singular value of the real 4x4-block matrix of a weight tensor;
/// convolution kernels are taken in im2col form [4 Co, 4 Ci k k].
double real_block_spectral_norm(const ParamTensor& w);
/// Bound on the norm above once every component lies in [-c, c]:
/// 4 c sqrt(fan_in fan_out).
double clipped_norm_bound(const ParamTensor& w, double c);

/// Upper bound on the qdist-Lipschitz constant of net: the product of
/// per-layer operator-norm bounds. A convolution's im2col norm is scaled by
/// ceil(k / s), the most windows one input pixel can fall into per axis.
double network_lipschitz_bound(const Network& net);

struct GradcheckOptions {
  double step = 1e-4;
  double rel_tol = 1e-4;
  double abs_tol = 1e-7;
};

struct LayerCheck {
  std::string layer;
  std::size_t checked = 0;
  double max_rel = 0.0;  // over entries whose absolute error exceeds abs_tol
  double max_abs = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<LayerCheck> layers;
  bool pass = true;
  // Single-op cases run before composite ones, so this points at the layer
  // that broke rather than at a network containing it.
  std::string first_failure;
};

enum class GradcheckArch { Small, Default };

/// Five-point central differences against backward() for every layer kind and a
/// three-layer critic, with random inputs redrawn away from ReLU kinks.
GradcheckReport gradcheck(std::uint64_t seed, GradcheckArch arch = GradcheckArch::Small,
                          const GradcheckOptions& opts = {});

}  // namespace qwgan::qnn
