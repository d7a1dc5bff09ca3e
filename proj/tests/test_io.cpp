#include <doctest.h>

#include "fixtures.hpp"
#include "meso/errors.hpp"
#include "meso/io.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace meso;
using io::Json;

namespace {

int count(const std::string& haystack, const std::string& needle) {
  int n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("config resolution: defaults, unknown keys and type checks") {
  for (const auto& cmd : io::commands()) {
    const Json def = io::default_config(cmd);
    CHECK(io::resolve_config(cmd, Json::object()) == def);
    CHECK(def.contains("out"));
    CHECK(def.contains("threads"));
  }
  CHECK_THROWS_AS((void)io::default_config("plot"), ConfigError);
  const Json c = io::resolve_config("clt", Json{{"n", 300}, {"test_function", {{"eta0", 0.05}}}});
  CHECK(c["n"] == 300);
  CHECK(c["test_function"]["eta0"] == 0.05);
  CHECK(c["test_function"]["family"] == "gaussian");
  CHECK_THROWS_AS((void)io::resolve_config("clt", Json{{"samples_total", 3}}), ConfigError);
  CHECK_THROWS_AS((void)io::resolve_config("clt", Json{{"n", "big"}}), ConfigError);
  CHECK_THROWS_AS((void)io::resolve_config("clt", Json{{"profile", 3}}), ConfigError);
  CHECK_THROWS_AS((void)io::resolve_config("clt", Json{{"test_function", {{"eta0", "x"}}}}), ConfigError);
  CHECK_THROWS_AS((void)io::parse_json("{\"n\": ", "inline"), ConfigError);
}

TEST_CASE("dotted overrides") {
  Json c = io::default_config("variance");
  io::apply_override(c, "profile.kind=block");
  io::apply_override(c, "test_function.amplitude=0");
  io::apply_override(c, "variance.epsilon=0.4");
  io::apply_override(c, "profile.block=[[2,0.5],[0.5,1]]");
  CHECK(c["profile"]["kind"] == "block");
  CHECK(c["test_function"]["amplitude"] == 0);
  CHECK(c["variance"]["epsilon"] == 0.4);
  CHECK(c["profile"]["block"][0][0] == 2);
  CHECK_THROWS_AS(io::apply_override(c, "profile.kind"), ConfigError);
  CHECK_THROWS_AS(io::apply_override(c, "profile..kind=block"), ConfigError);
  CHECK_THROWS_AS(io::apply_override(c, "profile.colour=red"), ConfigError);
  CHECK_THROWS_AS(io::apply_override(c, "n=[1]"), ConfigError);
}

TEST_CASE("domain types round-trip through JSON") {
  for (const auto& recipe : shipped_recipes()) {
    const ProfileRecipe back = io::recipe_from_json(io::to_json(recipe));
    CHECK(back.kind == recipe.kind);
    const auto a = build_variance_profile(recipe, 40);
    const auto b = build_variance_profile(back, 40);
    CHECK((a.s() - b.s()).cwiseAbs().maxCoeff() == 0);
  }
  const EntryLaw law = io::law_from_json(io::to_json(EntryLaw{EntryFamily::rademacher, 2}));
  CHECK(law.family == EntryFamily::rademacher);
  CHECK(law.beta == 2);
  const TestFunction tf = io::test_function_from_json(io::default_config("clt")["test_function"], 2000);
  CHECK(tf.eta0 == doctest::Approx(std::pow(2000.0, -0.3)));
  CHECK(tf.g.family == BaseFamily::gaussian);
  const TestFunction again = io::test_function_from_json(
      io::resolve_config("clt", Json{{"test_function", io::to_json(tf)}})["test_function"], 5);
  CHECK(again.eta0 == tf.eta0);
  Json bad = io::default_config("clt")["profile"];
  bad["block"] = Json::array({Json::array({1, 2}), Json::array({3})});
  CHECK_THROWS_AS((void)io::recipe_from_json(bad), ConfigError);
  const LocalLawConfig ll = io::local_law_config_from_json(io::default_config("local-law"));
  CHECK(ll.n_values.size() == 4);
  CHECK(ll.zeta == Complex{0.3, -0.1});
  const AcceptanceOptions ao = io::acceptance_options_from_json(io::default_config("check-all"));
  CHECK(ao.clt_samples == AcceptanceOptions{}.clt_samples);
}

TEST_CASE("report JSON carries the documented keys") {
  CLTReport rep;
  rep.n = 10;
  rep.sample_variance = 0.3;
  rep.variance_stderr = 0.01;
  rep.predicted_variance_hhalf = 0.31;
  const Json j = io::to_json(rep);
  for (const char* key : {"config", "sample_variance", "stderr", "predicted_variance_kernel", "predicted_variance_hhalf",
                          "ks_stat", "ks_p", "skewness", "kurtosis"})
    CHECK(j.contains(key));
  CHECK(j["predicted_variance_kernel"].is_null());
  VarianceReport v;
  CHECK(io::to_json(v)["v_4d"].is_null());
}

TEST_CASE("property: number formatting round-trips exactly") {
  fixture::Gen gen(9);
  for (int i = 0; i < 2000; ++i) {
    const double x = gen.uniform(-1, 1) * std::pow(10.0, gen.uniform(-300, 300));
    CHECK(std::strtod(io::format_number(x).c_str(), nullptr) == x);
  }
  CHECK(io::format_number(0.1) == "0.1");
  CHECK(io::format_number(NAN) == "nan");
  CHECK(io::format_number(-INFINITY) == "-inf");
}

TEST_CASE("CSV tables") {
  io::CsvTable t({"a", "b"});
  t.add_row(std::vector<Real>{1, 0.25});
  t.add_row(std::vector<std::string>{"x", "y"});
  CHECK(t.str() == "a,b\n1,0.25\nx,y\n");
  CHECK(t.rows() == 2);
  CHECK_THROWS_AS(t.add_row(std::vector<Real>{1}), ConfigError);
}

TEST_CASE("SVG documents") {
  const RVec x = RVec::LinSpaced(50, -2, 2);
  const RVec y = x.array().square();
  const std::string plot = io::svg_plot({{"x^2", x, y, false}, {"pts", x, y, true}}, {"t", "x", "y"});
  CHECK(plot.rfind("<svg", 0) == 0);
  CHECK(plot.find("</svg>") != std::string::npos);
  CHECK(count(plot, "<circle") == 50);
  CHECK(count(plot, "<polyline") == 1);
  // Log axes skip non-positive points.
  const std::string logplot = io::svg_plot({{"y", x, y, true}}, {"t", "x", "y", false, true});
  CHECK(count(logplot, "<circle") == 50);
  RMat values(3, 4);
  values.setRandom();
  values(1, 2) = NAN;
  const std::string heat = io::svg_heatmap(RVec::LinSpaced(4, 0, 1), RVec::LinSpaced(3, 0, 1), values, {"h", "x", "y"});
  CHECK(count(heat, "#bbbbbb") == 1);
  CHECK_THROWS_AS((void)io::svg_heatmap(RVec::LinSpaced(3, 0, 1), RVec::LinSpaced(3, 0, 1), values, {}), ConfigError);
  const std::string hist = io::svg_histogram_overlay(x, 1.0, 12, {"h", "x", "p"});
  CHECK(count(hist, "fill=\"#9ecae1\"") == 12);
  CHECK_THROWS_AS((void)io::svg_histogram_overlay(x, 1.0, 0, {}), ConfigError);
  CHECK(io::svg_plot({{"title <&>", x, y, false}}, {}).find("title &lt;&amp;&gt;") != std::string::npos);
}

TEST_CASE("FNV-1a digests and the output manifest") {
  CHECK(io::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(io::fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(io::fnv1a_hex("foobar") == "85944171f73967e8");
  const auto dir = std::filesystem::temp_directory_path() / "meso_io_manifest_test";
  std::filesystem::remove_all(dir);
  io::OutputDir out(dir);
  out.write("a.txt", "hello");
  out.write_json("b.json", Json{{"k", 1}});
  out.finish("density", Json{{"n", 3}}, 0);
  std::ifstream in(dir / "manifest.json");
  std::stringstream buf;
  buf << in.rdbuf();
  const Json m = Json::parse(buf.str());
  CHECK(m["command"] == "density");
  CHECK(m["config"]["n"] == 3);
  REQUIRE(m["files"].size() == 2);
  CHECK(m["files"][0]["name"] == "a.txt");
  CHECK(m["files"][0]["bytes"] == 5);
  CHECK(m["files"][0]["fnv1a64"] == io::fnv1a_hex("hello"));
  std::filesystem::remove_all(dir);
}
