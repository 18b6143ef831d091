#include <doctest.h>

#include <fstream>

#include "refineloc/config.hpp"
#include "refineloc/errors.hpp"
#include "refineloc/seeding.hpp"
#include "test_util.hpp"

using namespace refineloc;

namespace {

std::string schema_message(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const SchemaError& e) {
    return e.what();
  }
  FAIL("expected SchemaError for " << text);
  return {};
}

}  // namespace

TEST_CASE("empty config gives defaults") {
  const auto c = parse_run_config("{}");
  CHECK(c.seed == 0);
  CHECK(c.synth.N == 5);
  CHECK(c.synth.D == 32);
  CHECK(c.synth.video_count == 300);
  CHECK(c.refine.eta_max == 3);
  CHECK(c.refine.beta == 4.0);
  CHECK(c.refine.S == 0.8);
  CHECK(c.refine.postproc.top_k == 2);
  CHECK(c.refine.eval_thresholds.size() == 10);
  CHECK(c.ablation_generators.size() == 5);
  CHECK(c.manifest_name == "manifest.json");
}

TEST_CASE("sub-seeds derive from the root seed") {
  const auto c = parse_run_config(R"({"seed": 42})");
  CHECK(c.synth.seed == derive_seed(42, "synth"));
  CHECK(c.refine.seed == derive_seed(42, "refine"));
  CHECK(c.refine.model.init_seed == derive_seed(42, "init"));
  CHECK(c.synth.seed != c.refine.seed);

  RunConfig d = c;
  d.set_seed(7);
  CHECK(d.synth.seed == derive_seed(7, "synth"));
  CHECK(d.refine.model.init_seed == derive_seed(7, "init"));

  // fnv1a64 reference values.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  // splitmix64 first output for state 0.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("values are read from every section") {
  const auto c = parse_run_config(R"({
    "synth": {"N": 4, "D": 16, "T_range": [30, 50], "noise_sigma": 2.0},
    "data": {"manifest": "m.json"},
    "model": {"L": 3, "attention_variant": "scalar_sigmoid"},
    "postproc": {"alpha_A": 0.4, "alpha_C": 0.35, "top_k": 1},
    "refine": {"eta_max": 2, "beta": 1.5, "generator": "attention", "generator_threshold": 0.1, "lr": 0.001},
    "eval": {"thresholds": [0.5, 0.75]},
    "ablation": {"generators": ["uniform_random"], "betas": [0, 4]}
  })");
  CHECK(c.synth.N == 4);
  CHECK(c.synth.T_range == std::pair{30, 50});
  CHECK(c.synth.noise_sigma == 2.0);
  CHECK(c.manifest_name == "m.json");
  CHECK(c.refine.model.L == 3);
  CHECK(c.refine.model.attention == AttentionVariant::ScalarSigmoid);
  CHECK(c.refine.postproc.alpha_C == 0.35);
  CHECK(c.refine.generator.kind == GeneratorKind::Attention);
  CHECK(c.refine.generator.threshold == 0.1);
  CHECK(c.refine.eval_thresholds == std::vector<double>{0.5, 0.75});
  CHECK(c.ablation_generators == std::vector<GeneratorKind>{GeneratorKind::UniformRandom});
  CHECK(c.ablation_betas == std::vector<double>{0.0, 4.0});

  // The resolved dump parses back to the same configuration.
  const auto back = parse_run_config(run_config_to_json_string(c));
  CHECK(run_config_to_json_string(back) == run_config_to_json_string(c));
}

TEST_CASE("schema errors name the key path") {
  CHECK(schema_message(R"({"bogus": 1})").find("bogus") != std::string::npos);
  CHECK(schema_message(R"({"refine": {"betta": 1}})").find("refine.betta") != std::string::npos);
  CHECK(schema_message(R"({"refine": {"beta": "four"}})").find("refine.beta") != std::string::npos);
  CHECK(schema_message(R"({"synth": {"T_range": [1, 2, 3]}})").find("synth.T_range") != std::string::npos);
  CHECK(schema_message(R"({"synth": 3})").find("synth") != std::string::npos);
  CHECK(schema_message("[]").find("object") != std::string::npos);
}

TEST_CASE("malformed json reports the location") {
  const auto msg = schema_message("{\n  \"seed\": 1,\n  oops\n}");
  CHECK(msg.find("line 3") != std::string::npos);
}

TEST_CASE("out-of-range values are config errors") {
  CHECK_THROWS_AS(parse_run_config(R"({"refine": {"S": 2}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"refine": {"generator": "nope"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"L": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"eval": {"thresholds": []}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"eval": {"thresholds": [1.5]}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"ablation": {"betas": [-1]}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"postproc": {"alpha_A": -0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"synth": {"T_range": [9, 3]}})"), ConfigError);
}

TEST_CASE("config files") {
  const auto dir = testutil::scratch_dir("config");
  std::ofstream(dir / "c.json") << R"({"seed": 3})";
  CHECK(load_run_config(dir / "c.json").seed == 3);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), IoError);
}
