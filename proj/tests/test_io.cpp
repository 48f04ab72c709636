#include "doctest.h"

#include <filesystem>
#include <random>

#include "qwgan/errors.hpp"
#include "qwgan/io.hpp"

using namespace qwgan;
using namespace qwgan::io;

TEST_CASE("distribution files") {
  const json real = json::parse(R"({"dim": 1, "points": [[0,0,0,0],[1,0,0,0]], "mass": [0.25, 0.75]})");
  const auto d = distribution_from_json(real);
  CHECK(d.mode() == qwd::MassMode::RealPmf);
  CHECK(d.size() == 2);
  CHECK(to_json(d) == real);

  const json quat = json::parse(R"({"dim": 2, "points": [[0,0,0,0, 1,2,3,4]], "mass": [[1,0.5,0,0]]})");
  const auto q = distribution_from_json(quat);
  CHECK(q.mode() == qwd::MassMode::General);
  CHECK(q.points()[0][1] == Quaternion{1, 2, 3, 4});
  CHECK(to_json(q) == quat);

  CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"dim": 1, "points": [[0,0,0,0]], "mass": [0.5, 0.5]})")),
                  InputError);
  CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"dim": 1, "points": [[0,0,0]], "mass": [1]})")),
                  InputError);
  CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"dim": 1, "points": [[0,0,0,0]], "mass": [0.9]})")),
                  InputError);
  CHECK(distribution_from_json(json::parse(R"({"dim": 1, "points": [[0,0,0,0]], "mass": [0.9]})"), true).total(0) ==
        1.0);
  CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"points": []})")), InputError);
  CHECK_THROWS_AS(distribution_from_json(json::parse(R"({"dim": 1, "points": [["a",0,0,0]], "mass": [1]})")),
                  InputError);
}

TEST_CASE("cost and plan documents") {
  const auto c1 = cost_from_json(json::parse("[[0, 1], [2, 3]]"));
  const auto c2 = cost_from_json(json::parse(R"({"cost": [[0, 1], [2, 3]]})"));
  CHECK(c1.values == c2.values);
  CHECK(c1.values(1, 0) == 2.0);
  CHECK_THROWS_AS(cost_from_json(json::parse("[[0, 1], [2]]")), InputError);

  const auto pr = distribution_from_json(json::parse(R"({"dim": 1, "points": [[0,0,0,0]], "mass": [1]})"));
  const auto pg = distribution_from_json(json::parse(R"({"dim": 1, "points": [[2,0,0,0]], "mass": [1]})"));
  const json plan = to_json(qwd::qwd_primal(pr, pg));
  CHECK(plan["value"] == 2.0);
  CHECK(plan["mode"] == "real-pmf");
  CHECK(plan["gamma"][0][0] == json::array({1.0, 0.0, 0.0, 0.0}));
}

TEST_CASE("quaternion LP documents") {
  const json j = json::parse(R"({"upsilon": [[1, 1]], "b": [[1, 0, 0, 0]], "C": [1, 2]})");
  const auto lp = qlp_from_json(j);
  CHECK(to_json(lp) == j);
  CHECK_THROWS_AS(qlp_from_json(json::parse(R"({"upsilon": [[1]], "b": [[1,0,0,0]]})")), InputError);
  CHECK(qlp_from_json(json::parse(R"({"upsilon": [[1]], "b": [[1,0,0,0]]})"), false).C.size() == 1);
  CHECK_THROWS_AS(quaternion_from_json(json::array({1, 2, 3})), InputError);
}

TEST_CASE("network documents") {
  qnn::NetworkSpec spec{{1, 4, 4},
                        {qnn::LayerSpec::conv(1, 2, 3, 2, 1), qnn::LayerSpec::leaky_relu(0.2),
                         qnn::LayerSpec::reshape({8}), qnn::LayerSpec::linear(8, 1), qnn::LayerSpec::tanh(),
                         qnn::LayerSpec::zero_real()}};
  const qnn::Network net(spec, 3);
  const json j = to_json(net);
  CHECK(j["layers"].size() == 4);
  CHECK(j["layers"][0]["kind"] == "qconv2d");
  CHECK(j["layers"][0]["components"].size() == 4);
  const auto back = network_from_json(json::parse(j.dump()));
  std::mt19937_64 rng(1);
  QTensor x({2, 1, 4, 4});
  std::normal_distribution<double> n;
  for (auto& a : x.c)
    for (double& v : a) v = n(rng);
  CHECK(back.infer(x) == net.infer(x));
  CHECK(dump(to_json(back)) == dump(j));

  json bad = j;
  bad["layers"][0]["shape"] = json::array({2, 1, 3, 2});
  CHECK_THROWS_AS(network_from_json(bad), InputError);
  bad = j;
  bad["layers"][1]["name"] = "layer0.bias_";
  CHECK_THROWS_AS(network_from_json(bad), InputError);
  bad = j;
  bad["architecture"]["layers"][0]["kind"] = "dense";
  CHECK_THROWS_AS(network_from_json(bad), InputError);
}

TEST_CASE("files and hashes") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto dir = std::filesystem::temp_directory_path() / "qwgan_io_test";
  std::filesystem::create_directories(dir);
  const auto f = dir / "x.json";
  write_text(f, dump(json{{"a", 1}}));
  CHECK(read_json(f)["a"] == 1);
  CHECK(sha256_file(f) == sha256_hex(dump(json{{"a", 1}})));
  write_text(dir / "bad.json", "{");
  CHECK_THROWS_AS(read_json(dir / "bad.json"), InputError);
  CHECK_THROWS_AS(read_json(dir / "missing.json"), InputError);

  RunManifest m{"qwd", {{"pr", "a.json"}}, 7, {{"plan.json", "00"}}, "1.0.0"};
  const json mj = to_json(m);
  CHECK(mj["seed"] == 7);
  CHECK(mj["artifacts"]["plan.json"] == "00");
  std::filesystem::remove_all(dir);
}
