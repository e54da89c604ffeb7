#include "pplearn/errors.hpp"
#include "pplearn/io.hpp"
#include "pplearn/pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace pplearn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pplearn_io_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Dataset small_dataset() {
  ScenarioSpec sc = ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 10);
  sc.n = 6;
  const SimulatedTrial trial = gen_trial(sc, 0);
  Dataset data;
  data.schema.covariates = {"X", "time"};
  data.schema.action_probabilities = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  data.schema.family = Family::Gaussian;
  data.schema.train_horizon = 10;
  data.schema.model = simulation_model(Family::Gaussian);
  data.trajectories = trial.trajectories;
  return data;
}

}  // namespace

TEST_CASE("doubles survive text round trips") {
  Rng rng(71);
  for (int k = 0; k < 1000; ++k) {
    const double v = std::ldexp(rng.normal(), static_cast<int>(rng.uniform_label(200)) - 100);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(-3.0) == "-3");
  CHECK_THROWS_AS(parse_double("1.5x"), ConfigError);
  CHECK_THROWS_AS(parse_double(""), ConfigError);
}

TEST_CASE("trajectory CSV round trip") {
  const Dataset data = small_dataset();
  std::ostringstream out;
  write_trajectories_csv(out, data.trajectories, data.schema.covariates);
  const std::string text = out.str();
  CHECK(text.rfind("user_id,t,X,time,action_label,outcome,propensity\n", 0) == 0);

  std::istringstream in(text);
  const auto back = read_trajectories_csv(in, data.schema.covariates);
  std::ostringstream again;
  write_trajectories_csv(again, back, data.schema.covariates);
  CHECK(again.str() == text);
  REQUIRE(back.size() == data.trajectories.size());
  CHECK(back[2].steps[7].outcome == data.trajectories[2].steps[7].outcome);
}

TEST_CASE("trajectory CSV errors") {
  std::istringstream wrong_header("user_id,t,Z,action_label,outcome,propensity\n");
  CHECK_THROWS_AS(read_trajectories_csv(wrong_header, {"X"}), ConfigError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_trajectories_csv(empty, {"X"}), ConfigError);
  std::istringstream short_row("user_id,t,X,action_label,outcome,propensity\na,1,1,1\n");
  CHECK_THROWS_AS(read_trajectories_csv(short_row, {"X"}), ConfigError);
  std::istringstream split(
      "user_id,t,X,action_label,outcome,propensity\n"
      "a,1,1,1,0,0.5\nb,1,1,1,0,0.5\na,2,1,1,0,0.5\n");
  CHECK_THROWS_AS(read_trajectories_csv(split, {"X"}), ConfigError);
  std::istringstream bad_number(
      "user_id,t,X,action_label,outcome,propensity\na,1,one,1,0,0.5\n");
  CHECK_THROWS_AS(read_trajectories_csv(bad_number, {"X"}), ConfigError);
}

TEST_CASE("dataset directory round trip") {
  const Dataset data = small_dataset();
  const fs::path dir = scratch("dataset");
  write_dataset(dir, data);
  const Dataset back = read_dataset(dir);
  CHECK(back.schema.covariates == data.schema.covariates);
  CHECK(back.schema.train_horizon == 10);
  CHECK(back.schema.family == Family::Gaussian);
  REQUIRE(back.schema.model.has_value());
  CHECK(model_to_json(*back.schema.model) == model_to_json(*data.schema.model));
  CHECK(back.train()[0].steps.size() == 10);
  CHECK(back.test()[0].steps.size() == 10);
  CHECK(back.user_ids().front() == "u1");

  const std::string csv = slurp(dir / "trajectories.csv");
  const std::string schema = slurp(dir / "schema.json");
  write_dataset(dir, back);
  CHECK(slurp(dir / "trajectories.csv") == csv);
  CHECK(slurp(dir / "schema.json") == schema);
  CHECK_THROWS_AS(read_dataset(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("model JSON round trip") {
  const ModelSpec spec(Family::Bernoulli, {"a", "b"}, ActionCoding({0.2, 0.5, 0.3}), {"b"},
                       {"intercept", "b:A3"});
  const Json j = model_to_json(spec);
  const ModelSpec back = model_from_json(j);
  CHECK(model_to_json(back) == j);
  CHECK(back.h2_terms() == spec.h2_terms());
  Json bad = j;
  bad["random_effects"] = Json::array({"nope"});
  CHECK_THROWS_AS(model_from_json(bad), ConfigError);
}

TEST_CASE("fit JSON round trip") {
  Rng rng(72);
  const Dataset data = small_dataset();
  const ModelSpec spec = *data.schema.model;
  FitConfig cfg;
  cfg.method = Method::PPL;
  cfg.lambda = 5.0;
  cfg.allow_nonconvergence = true;
  const FitFile fit = fit_dataset(data, spec, cfg);
  const Json j = fit_to_json(fit);
  const FitFile back = fit_from_json(Json::parse(j.dump()));
  CHECK(fit_to_json(back).dump() == j.dump());
  CHECK(back.table.coef == fit.table.coef);
  REQUIRE(back.ppl.has_value());
  CHECK(back.ppl->params.beta == fit.ppl->params.beta);
  CHECK(back.ppl->pen.lambda == 5.0);

  cfg.method = Method::MGLM;
  const FitFile mglm = fit_dataset(data, spec, cfg);
  const Json mj = fit_to_json(mglm);
  const FitFile mback = fit_from_json(Json::parse(mj.dump()));
  CHECK(fit_to_json(mback).dump() == mj.dump());
  CHECK(mback.table.divergent == mglm.table.divergent);
}

TEST_CASE("truth and report JSON round trips") {
  const Dataset data = small_dataset();
  ScenarioSpec sc = ScenarioSpec::standard(Family::Gaussian, Scenario::NonSparse, 10);
  sc.n = 6;
  const SimulatedTrial trial = gen_trial(sc, 0);
  TruthFile truth{GroundTruth{Family::Gaussian, sc.beta0, trial.effects.alpha0, data.user_ids()},
                  trial.effects.u0, simulation_eval_states(sc)};
  const Json tj = truth_to_json(truth);
  CHECK(truth_to_json(truth_from_json(tj)) == tj);

  const ModelSpec spec = *data.schema.model;
  const PolicyTable gee = gee_fit(Design::build(data.train(), spec), spec, data.user_ids());
  EvalReport report;
  report.covariates = data.schema.covariates;
  const auto test = data.test();
  report.methods.push_back(evaluate_policy(gee, &truth.truth, truth.eval_states, test));
  const Json rj = report_to_json(report);
  CHECK(report_to_json(report_from_json(Json::parse(rj.dump()))).dump() == rj.dump());

  std::ostringstream csv;
  write_report_csv(csv, report);
  const std::string text = csv.str();
  CHECK(text.rfind("method,metric,state,time,value\n", 0) == 0);
  CHECK(text.find("GEE,value_ratio,X=-1;time=11,11,") != std::string::npos);
  CHECK(text.find("GEE,mse,") != std::string::npos);
}

TEST_CASE("non-finite values are written as null") {
  EvalReport report;
  report.covariates = {"X", "time"};
  MethodReport m;
  m.method = Method::MGLM;
  m.mse = std::numeric_limits<double>::infinity();
  report.methods.push_back(m);
  const Json j = report_to_json(report);
  CHECK(j.dump().find("null") != std::string::npos);
}

TEST_CASE("configs reject unknown keys and wrong commands") {
  SimulateConfig sim;
  sim.out = "x";
  sim.trials = 3;
  const Json j = to_json(sim);
  CHECK(to_json(simulate_config_from_json(j)) == j);
  Json extra = j;
  extra["tirals"] = 3;
  CHECK_THROWS_AS(simulate_config_from_json(extra), ConfigError);
  CHECK_THROWS_AS(fit_config_from_json(j), ConfigError);

  ReproduceConfig rep;
  rep.out = "y";
  rep.ms = {10};
  const Json rj = to_json(rep);
  CHECK(to_json(reproduce_config_from_json(rj)) == rj);

  Json solver = solver_to_json(SolverConfig{});
  CHECK(solver_to_json(solver_from_json(solver)) == solver);
  solver["max_outr"] = 3;
  CHECK_THROWS_AS(solver_from_json(solver), ConfigError);
  Json wrong_type = solver_to_json(SolverConfig{});
  wrong_type["max_outer"] = "many";
  CHECK_THROWS_AS(solver_from_json(wrong_type), ConfigError);
}

TEST_CASE("scenario cells") {
  CHECK(parse_cell("continuous-nonsparse") == std::pair{Family::Gaussian, Scenario::NonSparse});
  CHECK(parse_cell("binary-sparse") == std::pair{Family::Bernoulli, Scenario::Sparse});
  CHECK(cell_name(Family::Bernoulli, Scenario::NonSparse) == "binary-nonsparse");
  CHECK_THROWS_AS(parse_cell("continuous"), ConfigError);
}

TEST_CASE("write_json creates directories and fails cleanly") {
  const fs::path dir = scratch("json");
  write_json(dir / "a" / "b.json", Json{{"k", 1}});
  CHECK(slurp(dir / "a" / "b.json") == "{\n  \"k\": 1\n}\n");
  CHECK(read_json(dir / "a" / "b.json")["k"] == 1);
  CHECK_THROWS_AS(read_json(dir / "none.json"), IoError);
  write_text(dir / "bad.json", "{");
  CHECK_THROWS_AS(read_json(dir / "bad.json"), ConfigError);
  write_text(dir / "file", "x");
  CHECK_THROWS_AS(write_json(dir / "file" / "c.json", Json{}), IoError);
  fs::remove_all(dir);
}
