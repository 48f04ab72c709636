#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qwgan/qlp.hpp"
#include "qwgan/qnn.hpp"
#include "qwgan/qwd.hpp"

namespace qwgan::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Quaternions are [w, x, y, z] everywhere.
json to_json(const Quaternion& q);
Quaternion quaternion_from_json(const json& j);
json to_json(const QVector& v);
QVector qvector_from_json(const json& j);

/// {dim, points: [[4 dim floats]], mass: [[w, x, y, z]] or [float]}.
/// The float shorthand means real masses.
qwd::DiscreteDistribution distribution_from_json(const json& j, bool renormalize = false);
/// Real-pmf distributions are written with the shorthand.
json to_json(const qwd::DiscreteDistribution& d);
/// A bare matrix or {"cost": matrix}.
qwd::CostMatrix cost_from_json(const json& j);

json to_json(const qwd::PrimalResult& r);
json to_json(const qwd::DualResult& r);

/// {upsilon: [[..]], b: [[w,x,y,z]], C: [..]}; C may be omitted where unused.
qlp::QuaternionLP qlp_from_json(const json& j, bool need_cost = true);
json to_json(const qlp::QuaternionLP& lp);
json to_json(const qlp::FarkasCertificate& c);
json to_json(const qlp::GapRecord& r);
json to_json(const qlp::Projection& p);
json to_json(const qlp::SeparatingHyperplane& h);

json to_json(const qnn::NetworkSpec& s);
qnn::NetworkSpec network_spec_from_json(const json& j);
/// {architecture, layers: [{name, kind, shape, components: [w[], x[], y[], z[]]}]}
json to_json(const qnn::Network& net);
qnn::Network network_from_json(const json& j);

/// Parse errors and unreadable files become InputError.
json read_json(const std::filesystem::path& p);
/// Pretty-printed with a trailing newline; identical input gives identical bytes.
std::string dump(const json& j);
/// Writes the bytes exactly; throws std::runtime_error when the file cannot be written.
void write_text(const std::filesystem::path& p, std::string_view text);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& p);

struct RunManifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> artifacts;  // file name, sha256
  std::string tool_version;
};
json to_json(const RunManifest& m);

}  // namespace qwgan::io
