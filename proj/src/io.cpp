#include "qwgan/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "qwgan/errors.hpp"

namespace qwgan::io {

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw InputError(what + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InputError(what + ": non-finite number");
  return v;
}

std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

std::size_t count(const json& j, const std::string& what) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw InputError(what + ": expected a nonnegative integer");
  return j.get<std::size_t>();
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + ": expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : numbers(j[0], what).size();
  Eigen::MatrixXd M(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = numbers(j[r], what + " row " + std::to_string(r));
    if (row.size() != cols) throw InputError(what + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return M;
}

json matrix_to_json(const Eigen::MatrixXd& M) {
  json out = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json shape_to_json(const Shape& s) {
  json out = json::array();
  for (auto d : s) out.push_back(d);
  return out;
}

Shape shape_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + ": expected a shape array");
  Shape s;
  for (const auto& d : j) s.push_back(count(d, what));
  return s;
}

}  // namespace

json to_json(const Quaternion& q) { return json::array({q.w, q.x, q.y, q.z}); }

Quaternion quaternion_from_json(const json& j) {
  const auto v = numbers(j, "quaternion");
  if (v.size() != 4) throw InputError("quaternion: expected 4 components, got " + std::to_string(v.size()));
  return {v[0], v[1], v[2], v[3]};
}

json to_json(const QVector& v) {
  json out = json::array();
  for (const auto& q : v) out.push_back(to_json(q));
  return out;
}

QVector qvector_from_json(const json& j) {
  if (!j.is_array()) throw InputError("quaternion vector: expected an array");
  QVector out;
  for (const auto& q : j) out.push_back(quaternion_from_json(q));
  return out;
}

qwd::DiscreteDistribution distribution_from_json(const json& j, bool renormalize) {
  const std::size_t dim = count(field(j, "dim"), "dim");
  const json& pts = field(j, "points");
  const json& mass = field(j, "mass");
  if (!pts.is_array() || !mass.is_array()) throw InputError("distribution: points and mass must be arrays");
  if (pts.size() != mass.size())
    throw InputError("distribution: " + std::to_string(pts.size()) + " points but " + std::to_string(mass.size()) +
                     " masses");
  std::vector<QVector> points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto flat = numbers(pts[i], "point " + std::to_string(i));
    if (flat.size() != 4 * dim)
      throw InputError("point " + std::to_string(i) + ": expected " + std::to_string(4 * dim) + " floats, got " +
                       std::to_string(flat.size()));
    QVector p(dim);
    for (std::size_t k = 0; k < dim; ++k) p[k] = {flat[4 * k], flat[4 * k + 1], flat[4 * k + 2], flat[4 * k + 3]};
    points.push_back(std::move(p));
  }
  const bool shorthand = !mass.empty() && mass[0].is_number();
  if (shorthand) {
    const auto m = numbers(mass, "mass");
    return qwd::DiscreteDistribution::real_pmf(dim, std::move(points), m, renormalize);
  }
  return qwd::DiscreteDistribution(dim, std::move(points), qvector_from_json(mass), renormalize);
}

json to_json(const qwd::DiscreteDistribution& d) {
  json pts = json::array();
  for (const auto& p : d.points()) {
    json flat = json::array();
    for (const auto& q : p)
      for (std::size_t l = 0; l < 4; ++l) flat.push_back(q[l]);
    pts.push_back(std::move(flat));
  }
  json out{{"dim", d.dim()}, {"points", std::move(pts)}};
  if (d.mode() == qwd::MassMode::RealPmf)
    out["mass"] = d.real_mass();
  else
    out["mass"] = to_json(d.mass());
  return out;
}

qwd::CostMatrix cost_from_json(const json& j) {
  const json& m = j.is_object() ? field(j, "cost") : j;
  return {matrix_from_json(m, "cost")};
}

json to_json(const qwd::PrimalResult& r) {
  json gamma = json::array();
  for (std::size_t i = 0; i < r.plan.gamma.rows(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < r.plan.gamma.cols(); ++k) row.push_back(to_json(r.plan.gamma(i, k)));
    gamma.push_back(std::move(row));
  }
  return {{"format_version", kFormatVersion}, {"mode", qwd::to_string(r.mode)}, {"value", r.value},
          {"gamma", std::move(gamma)}};
}

json to_json(const qwd::DualResult& r) {
  return {{"mode", qwd::to_string(r.mode)},
          {"value", r.value},
          {"f", vector_to_json(r.potentials.f)},
          {"g", vector_to_json(r.potentials.g)}};
}

qlp::QuaternionLP qlp_from_json(const json& j, bool need_cost) {
  const Eigen::MatrixXd U = matrix_from_json(field(j, "upsilon"), "upsilon");
  QVector b = qvector_from_json(field(j, "b"));
  Eigen::VectorXd C;
  if (j.contains("C")) {
    const auto c = numbers(j.at("C"), "C");
    C = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  } else if (need_cost) {
    throw InputError("missing field 'C'");
  } else {
    C = Eigen::VectorXd::Zero(U.cols());
  }
  return {U, std::move(b), std::move(C)};
}

json to_json(const qlp::QuaternionLP& lp) {
  return {{"upsilon", matrix_to_json(lp.upsilon)}, {"b", to_json(lp.b)}, {"C", vector_to_json(lp.C)}};
}

json to_json(const qlp::FarkasCertificate& c) {
  json out{{"format_version", kFormatVersion}, {"kind", qlp::to_string(c.kind)}};
  if (c.kind == qlp::FarkasCertificate::Kind::Primal) {
    out["gamma"] = to_json(c.gamma);
  } else {
    out["y"] = vector_to_json(c.y);
    out["component"] = c.component;
  }
  return out;
}

json to_json(const qlp::GapRecord& r) {
  return {{"lp", to_json(r.lp)}, {"primal", r.primal}, {"dual", r.dual}, {"gap", r.gap}};
}

json to_json(const qlp::Projection& p) { return {{"xhat", to_json(p.xhat)}, {"distance", p.distance}}; }

json to_json(const qlp::SeparatingHyperplane& h) {
  return {{"p", vector_to_json(h.p)}, {"alpha", to_json(h.alpha)}, {"index", h.index}};
}

json to_json(const qnn::NetworkSpec& s) {
  json layers = json::array();
  for (const auto& L : s.layers) {
    json l{{"kind", qnn::to_string(L.kind)}};
    switch (L.kind) {
      case qnn::LayerKind::QLinear:
        l["in"] = L.in;
        l["out"] = L.out;
        break;
      case qnn::LayerKind::QConv2d:
      case qnn::LayerKind::QDeconv2d:
        l["in"] = L.in;
        l["out"] = L.out;
        l["kernel"] = L.geom.kernel;
        l["stride"] = L.geom.stride;
        l["pad"] = L.geom.pad;
        break;
      case qnn::LayerKind::LeakyRelu:
        l["slope"] = L.slope;
        break;
      case qnn::LayerKind::Reshape:
        l["shape"] = shape_to_json(L.shape);
        break;
      case qnn::LayerKind::Tanh:
      case qnn::LayerKind::ZeroReal:
        break;
    }
    layers.push_back(std::move(l));
  }
  return {{"input", shape_to_json(s.input)}, {"layers", std::move(layers)}};
}

qnn::NetworkSpec network_spec_from_json(const json& j) {
  qnn::NetworkSpec s;
  s.input = shape_from_json(field(j, "input"), "input");
  const json& layers = field(j, "layers");
  if (!layers.is_array()) throw InputError("layers: expected an array");
  for (const auto& l : layers) {
    const json& k = field(l, "kind");
    if (!k.is_string()) throw InputError("layer kind must be a string");
    qnn::LayerSpec L;
    L.kind = qnn::layer_kind_from_string(k.get<std::string>());
    switch (L.kind) {
      case qnn::LayerKind::QLinear:
        L = qnn::LayerSpec::linear(count(field(l, "in"), "in"), count(field(l, "out"), "out"));
        break;
      case qnn::LayerKind::QConv2d:
      case qnn::LayerKind::QDeconv2d: {
        const auto in = count(field(l, "in"), "in"), out = count(field(l, "out"), "out");
        const auto kk = count(field(l, "kernel"), "kernel"), st = count(field(l, "stride"), "stride"),
                   pd = count(field(l, "pad"), "pad");
        L = L.kind == qnn::LayerKind::QConv2d ? qnn::LayerSpec::conv(in, out, kk, st, pd)
                                              : qnn::LayerSpec::deconv(in, out, kk, st, pd);
        break;
      }
      case qnn::LayerKind::LeakyRelu:
        L = qnn::LayerSpec::leaky_relu(number(field(l, "slope"), "slope"));
        break;
      case qnn::LayerKind::Reshape:
        L = qnn::LayerSpec::reshape(shape_from_json(field(l, "shape"), "shape"));
        break;
      case qnn::LayerKind::Tanh:
      case qnn::LayerKind::ZeroReal:
        break;
    }
    s.layers.push_back(std::move(L));
  }
  s.shapes();
  return s;
}

json to_json(const qnn::Network& net) {
  json layers = json::array();
  const auto& spec = net.spec();
  std::size_t p = 0;
  for (const auto& L : spec.layers) {
    if (L.kind != qnn::LayerKind::QLinear && L.kind != qnn::LayerKind::QConv2d &&
        L.kind != qnn::LayerKind::QDeconv2d)
      continue;
    for (int r = 0; r < 2; ++r, ++p) {
      const auto& t = net.params()[p];
      layers.push_back({{"name", t.name},
                        {"kind", qnn::to_string(L.kind)},
                        {"shape", shape_to_json(t.value.shape)},
                        {"components", t.value.c}});
    }
  }
  return {{"architecture", to_json(spec)}, {"layers", std::move(layers)}};
}

qnn::Network network_from_json(const json& j) {
  auto spec = network_spec_from_json(field(j, "architecture"));
  const json& layers = field(j, "layers");
  if (!layers.is_array()) throw InputError("layers: expected an array");
  std::vector<qnn::ParamTensor> params;
  for (const auto& l : layers) {
    const json& name = field(l, "name");
    if (!name.is_string()) throw InputError("layer name must be a string");
    qnn::ParamTensor p{name.get<std::string>(), QTensor(shape_from_json(field(l, "shape"), "shape"))};
    const json& comp = field(l, "components");
    if (!comp.is_array() || comp.size() != 4) throw InputError(p.name + ": expected 4 component arrays");
    for (std::size_t c = 0; c < 4; ++c) {
      auto v = numbers(comp[c], p.name);
      if (v.size() != p.value.size())
        throw InputError(p.name + ": component " + std::to_string(c) + " has " + std::to_string(v.size()) +
                         " entries, shape needs " + std::to_string(p.value.size()));
      p.value.c[c] = std::move(v);
    }
    params.push_back(std::move(p));
  }
  return qnn::Network(std::move(spec), std::move(params));
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

json to_json(const RunManifest& m) {
  json artifacts = json::object();
  for (const auto& [name, hash] : m.artifacts) artifacts[name] = hash;
  return {{"format_version", kFormatVersion}, {"command", m.command},     {"config", m.config},
          {"seed", m.seed},                   {"artifacts", artifacts}, {"tool_version", m.tool_version}};
}

}  // namespace qwgan::io
