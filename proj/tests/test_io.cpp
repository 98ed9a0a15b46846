#include <catch_amalgamated.hpp>

#include "fluxtriple/io.hpp"

#include <filesystem>
#include <fstream>

using namespace fluxtriple;

namespace {
json base() {
  return json::parse(R"({"version": 1, "geometry": {"dim": 2}, "lattice": {"K": 3},
                         "bundle": {"N": 2, "flux": 1}})");
}
} // namespace

TEST_CASE("config parsing accepts the documented schema", "[io]") {
  auto c = parse_config(base());
  CHECK(c.geom.dim == 2);
  CHECK(c.K == 3);
  CHECK(c.N == 2);
  CHECK(c.n12 == 1);
  CHECK(c.mode() == "dense");
  CHECK_FALSE(c.seed.has_value());
  auto j = base();
  j["bundle"]["flux"] = json::parse("[[0, 3], [-3, 0]]");
  CHECK(parse_config(j).n12 == 3);
  j["lattice"]["spin"] = "antiperiodic";
  CHECK(parse_config(j).spin == antiperiodic_spin(2));
}

TEST_CASE("config parsing rejects malformed input", "[io]") {
  auto bad = [](auto edit) {
    json j = base();
    edit(j);
    return j;
  };
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["colour"] = 1; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["lattice"]["L"] = 1; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["version"] = 2; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["geometry"]["dim"] = 3; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["lattice"]["K"] = 0; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["bundle"]["flux"] = json::parse("[[0, 1], [1, 0]]"); })),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["cutoff"]["name"] = "sharp"; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["action"]["mode"] = "exact"; })), ConfigError);
  CHECK_THROWS_AS(parse_config(bad([](json &j) { j["fluctuation"]["preset"] = "instanton"; })), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("stochastic runs require a seed", "[io]") {
  json j = base();
  j["action"] = {{"mode", "stochastic"}};
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j["seed"] = 5;
  auto c = parse_config(j);
  CHECK(c.seed_or_throw("test") == 5);
  json k = base();
  k["action"] = {{"probes", 16}};
  CHECK_THROWS_AS(parse_config(k), ConfigError);
}

TEST_CASE("config hash ignores the output location only", "[io]") {
  json a = base(), b = base();
  b["output"] = {{"dir", "elsewhere"}};
  CHECK(config_hash(parse_config(a)) == config_hash(parse_config(b)));
  b["lattice"]["K"] = 4;
  CHECK(config_hash(parse_config(a)) != config_hash(parse_config(b)));
  CHECK(config_hash(parse_config(a)).size() == 16);
}

TEST_CASE("sections round-trip through JSON", "[io]") {
  auto tw = make_twist(3, 1, 2);
  auto g = square_torus(2);
  std::mt19937_64 rng(2);
  auto s = random_section(tw, g, rng, 6, 1);
  auto back = section_from_json(section_to_json(s), tw, g);
  CHECK((back - s).max_coeff() < 1e-15);
  CHECK_THROWS(section_from_json(json::parse(R"([{"sector": 9, "mode": [0, 0], "c": [1, 0]}])"), tw, g));
}

TEST_CASE("experiments build from presets", "[io]") {
  json j = base();
  j["connection"] = {{"preset", "random"}, {"amplitude", 0.2}};
  j["seed"] = 3;
  auto ex = build_experiment(parse_config(j));
  CHECK(ex.triple.hilbert_dim() > 0);
  CHECK_FALSE(ex.broken);
  json z = base();
  z["connection"] = {{"preset", "random"}};
  CHECK_THROWS_AS(build_experiment(parse_config(z)), ConfigError);
  json ab = base();
  ab["bundle"]["flux"] = 0;
  ab["fluctuation"] = {{"preset", "abelian_sin"}, {"amplitude", 0.5}};
  auto e2 = build_experiment(parse_config(ab));
  CHECK(e2.pert.size() == 2);
  CHECK(su_defect(e2.pert[1]) < 1e-14);
}

TEST_CASE("CSV rows and atomic writes", "[io]") {
  auto csv = csv_table({{0.5, 1.25, 0.0, "dense", true}, {1.0, std::nan(""), 0.1, "stochastic", false}},
                       "abc");
  CHECK(csv.rfind("t_or_lambda,value,stderr,method,window_ok,config_hash\n", 0) == 0);
  CHECK(csv.find("0.5,1.25,0,dense,true,abc") != std::string::npos);
  CHECK(csv.find("1,nan,0.10000000000000001,stochastic,false,abc") != std::string::npos);
  auto dir = std::filesystem::temp_directory_path() / "fluxtriple_io_test";
  std::filesystem::remove_all(dir);
  write_atomic(dir / "x.csv", csv);
  std::ifstream in(dir / "x.csv");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  CHECK(all == csv);
  CHECK_FALSE(std::filesystem::exists(dir / "x.csv.tmp"));
  std::filesystem::remove_all(dir);
  auto svg = svg_plot({0, 1, 2}, {1, 0.5, 0.25}, "t", "delta", 0.3);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
}
