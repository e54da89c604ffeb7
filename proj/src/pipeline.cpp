#include "pplearn/pipeline.hpp"

#include "pplearn/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace pplearn {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) {
    throw ConfigError(std::string(what) + " config must be a JSON object");
  }
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) {
      throw ConfigError("unknown " + std::string(what) + " setting '" + item.key() + "'");
    }
  }
}

template <class T>
void read_if(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) {
    return;
  }
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("setting '") + key + "' has the wrong type");
  }
}

void check_command(const Json& j, const char* command) {
  if (j.contains("command") && j.at("command") != command) {
    throw ConfigError(std::string("config is not a '") + command + "' config");
  }
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string csv_number(double v) { return format_double(v); }

// Runs fn(0..count-1) on up to jobs threads. The first exception by index is rethrown.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, std::max(count, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

std::string trial_dir(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial_%03d", k);
  return buf;
}

void require_out(const std::string& out) {
  if (out.empty()) {
    throw ConfigError("an output directory is required");
  }
}

void write_timing(const fs::path& dir, std::chrono::steady_clock::time_point start) {
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "timing.json", Json{{"seconds", seconds}});
}

Dataset simulated_dataset(const ScenarioSpec& spec, const SimulatedTrial& trial) {
  Dataset data;
  const ModelSpec model = simulation_model(spec.family);
  data.schema.covariates = model.covariates();
  const auto probs = model.actions().probabilities();
  data.schema.action_probabilities.assign(probs.begin(), probs.end());
  data.schema.family = spec.family;
  data.schema.train_horizon = trial.train_horizon;
  data.schema.model = model;
  data.trajectories = trial.trajectories;
  return data;
}

TruthFile simulated_truth(const ScenarioSpec& spec, const SimulatedTrial& trial) {
  TruthFile t;
  t.truth.family = spec.family;
  t.truth.beta0 = spec.beta0;
  t.truth.alpha0 = trial.effects.alpha0;
  for (const auto& traj : trial.trajectories) {
    t.truth.user_ids.push_back(traj.user_id);
  }
  t.u0 = trial.effects.u0;
  t.eval_states = simulation_eval_states(spec);
  return t;
}

std::string policy_csv(const PolicyTable& table) {
  std::ostringstream os;
  os << "user_id";
  for (const auto& t : table.spec.terms()) {
    os << ',' << t.name;
  }
  os << ",divergent\n";
  for (Index i = 0; i < table.n(); ++i) {
    os << table.user_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < table.coef.cols(); ++j) {
      os << ',' << csv_number(table.coef(i, j));
    }
    os << ',' << (table.divergent[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
  }
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) {
    return kNaN;
  }
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  mean = kNaN;
  sd = kNaN;
  if (v.empty()) {
    return;
  }
  if (std::any_of(v.begin(), v.end(), [](double x) { return !std::isfinite(x); })) {
    mean = std::numeric_limits<double>::infinity();
    return;
  }
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) {
      ss += (x - mean) * (x - mean);
    }
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
}

std::vector<TrialRecord> run_trial(const ReproduceConfig& cfg, Family family, Scenario scenario,
                                   int m, int k) {
  ScenarioSpec spec = ScenarioSpec::standard(family, scenario, m);
  spec.n = cfg.n;
  spec.test_horizon = cfg.test_horizon;
  spec.n_trials = cfg.trials;
  spec.seed = cfg.seed;
  const SimulatedTrial trial = gen_trial(spec, k);
  const Dataset data = simulated_dataset(spec, trial);
  const TruthFile truth = simulated_truth(spec, trial);
  const ModelSpec model = *data.schema.model;
  const std::vector<Trajectory> test = data.test();

  std::vector<TrialRecord> out;
  for (Method method : cfg.methods) {
    TrialRecord r;
    r.family = family;
    r.scenario = scenario;
    r.m = m;
    r.trial = k;
    r.method = method;
    r.beta_error = kNaN;
    r.alpha_error_median = kNaN;
    try {
      FitConfig fc;
      fc.method = method;
      fc.solver = cfg.solver;
      const FitFile fit = fit_dataset(data, model, fc);
      const MethodReport rep = evaluate_policy(fit.table, &truth.truth, truth.eval_states, test);
      r.mse = *rep.mse;
      for (const auto& v : rep.vr) {
        r.vr.push_back(v.value_ratio);
      }
      r.mean_vr = rep.mean_vr;
      r.converged = fit.converged;
      r.divergent_users = rep.divergent_users;
      if (method == Method::GEE) {
        r.beta_error = (fit.table.coef.row(0).transpose() - spec.beta0).squaredNorm();
      }
      if (fit.ppl) {
        const FitResult& f = *fit.ppl;
        r.beta_error = (f.params.beta - spec.beta0).squaredNorm();
        std::vector<double> per_user;
        for (Index i = 0; i < f.params.alpha.rows(); ++i) {
          per_user.push_back((f.params.alpha.row(i) - truth.truth.alpha0.row(i)).squaredNorm());
        }
        r.alpha_error_median = median(per_user);
        r.active_groups = f.active_groups;
        r.lambda = f.pen.lambda;
      }
    } catch (const Error& e) {
      r.mse = kNaN;
      r.mean_vr = kNaN;
      r.converged = false;
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string join_active(const std::vector<int>& groups, const std::vector<std::string>& names) {
  std::string out;
  for (int g : groups) {
    if (!out.empty()) {
      out += ';';
    }
    out += names[static_cast<std::size_t>(g)];
  }
  return out;
}

}  // namespace

std::pair<Family, Scenario> parse_cell(std::string_view name) {
  const auto dash = name.find('-');
  if (dash == std::string_view::npos) {
    throw ConfigError("scenario '" + std::string(name) +
                      "' must look like continuous-nonsparse or binary-sparse");
  }
  return {parse_family(name.substr(0, dash)), parse_scenario(name.substr(dash + 1))};
}

std::string cell_name(Family family, Scenario scenario) {
  return std::string(family == Family::Gaussian ? "continuous" : "binary") + "-" +
         std::string(scenario_name(scenario));
}

Json solver_to_json(const SolverConfig& c) {
  Json tron;
  tron["delta0"] = c.tron.delta0;
  tron["accept_eta"] = c.tron.accept_eta;
  tron["expand_eta"] = c.tron.expand_eta;
  tron["shrink_factor"] = c.tron.shrink_factor;
  tron["expand_factor"] = c.tron.expand_factor;
  tron["cg_tol"] = c.tron.cg_tol;
  tron["cg_max_iter"] = c.tron.cg_max_iter;
  tron["grad_tol"] = c.tron.grad_tol;
  tron["max_iter"] = c.tron.max_iter;
  tron["precondition"] = c.tron.precondition;
  Json j;
  j["tron"] = tron;
  j["max_outer"] = c.max_outer;
  j["outer_tol"] = c.outer_tol;
  j["damping"] = c.damping;
  j["polish_grad_tol"] = c.polish_grad_tol;
  j["lambda_grid"] = c.lambda_grid;
  j["lambda_min_ratio"] = c.lambda_min_ratio;
  j["conditional_variance"] = c.conditional_variance;
  j["accelerate"] = c.accelerate;
  return j;
}

SolverConfig solver_from_json(const Json& j, const SolverConfig& base) {
  check_keys(j,
             {"tron", "max_outer", "outer_tol", "damping", "polish_grad_tol", "lambda_grid",
              "lambda_min_ratio", "conditional_variance", "accelerate"},
             "solver");
  SolverConfig c = base;
  if (j.contains("tron")) {
    const Json& t = j.at("tron");
    check_keys(t,
               {"delta0", "accept_eta", "expand_eta", "shrink_factor", "expand_factor", "cg_tol",
                "cg_max_iter", "grad_tol", "max_iter", "precondition"},
               "tron");
    read_if(t, "delta0", c.tron.delta0);
    read_if(t, "accept_eta", c.tron.accept_eta);
    read_if(t, "expand_eta", c.tron.expand_eta);
    read_if(t, "shrink_factor", c.tron.shrink_factor);
    read_if(t, "expand_factor", c.tron.expand_factor);
    read_if(t, "cg_tol", c.tron.cg_tol);
    read_if(t, "cg_max_iter", c.tron.cg_max_iter);
    read_if(t, "grad_tol", c.tron.grad_tol);
    read_if(t, "max_iter", c.tron.max_iter);
    read_if(t, "precondition", c.tron.precondition);
  }
  read_if(j, "max_outer", c.max_outer);
  read_if(j, "outer_tol", c.outer_tol);
  read_if(j, "damping", c.damping);
  read_if(j, "polish_grad_tol", c.polish_grad_tol);
  read_if(j, "lambda_grid", c.lambda_grid);
  read_if(j, "lambda_min_ratio", c.lambda_min_ratio);
  read_if(j, "conditional_variance", c.conditional_variance);
  read_if(j, "accelerate", c.accelerate);
  c.validate();
  return c;
}

ScenarioSpec SimulateConfig::scenario_spec() const {
  ScenarioSpec spec = ScenarioSpec::standard(family, scenario, m);
  spec.n = n;
  spec.test_horizon = test_horizon;
  spec.n_trials = trials;
  spec.seed = seed;
  spec.validate();
  return spec;
}

Json to_json(const SimulateConfig& c) {
  Json j;
  j["command"] = "simulate";
  j["scenario"] = cell_name(c.family, c.scenario);
  j["m"] = c.m;
  j["n"] = c.n;
  j["test_horizon"] = c.test_horizon;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["out"] = c.out;
  return j;
}

SimulateConfig simulate_config_from_json(const Json& j) {
  check_keys(j, {"command", "scenario", "m", "n", "test_horizon", "trials", "seed", "jobs", "out"},
             "simulate");
  check_command(j, "simulate");
  SimulateConfig c;
  if (j.contains("scenario")) {
    std::string name;
    read_if(j, "scenario", name);
    std::tie(c.family, c.scenario) = parse_cell(name);
  }
  read_if(j, "m", c.m);
  read_if(j, "n", c.n);
  read_if(j, "test_horizon", c.test_horizon);
  read_if(j, "trials", c.trials);
  read_if(j, "seed", c.seed);
  read_if(j, "jobs", c.jobs);
  read_if(j, "out", c.out);
  return c;
}

Json to_json(const FitConfig& c) {
  Json j;
  j["command"] = "fit";
  j["data"] = c.data;
  j["out"] = c.out;
  j["method"] = method_name(c.method);
  j["lambda"] = c.lambda ? Json(*c.lambda) : Json(nullptr);
  j["model"] = c.model ? Json(*c.model) : Json(nullptr);
  j["solver"] = solver_to_json(c.solver);
  j["allow_nonconvergence"] = c.allow_nonconvergence;
  return j;
}

FitConfig fit_config_from_json(const Json& j) {
  check_keys(j,
             {"command", "data", "out", "method", "lambda", "model", "solver",
              "allow_nonconvergence"},
             "fit");
  check_command(j, "fit");
  FitConfig c;
  read_if(j, "data", c.data);
  read_if(j, "out", c.out);
  if (j.contains("method")) {
    std::string m;
    read_if(j, "method", m);
    c.method = parse_method(m);
  }
  if (j.contains("lambda") && !j.at("lambda").is_null()) {
    double v = 0.0;
    read_if(j, "lambda", v);
    c.lambda = v;
  }
  if (j.contains("model") && !j.at("model").is_null()) {
    std::string v;
    read_if(j, "model", v);
    c.model = v;
  }
  if (j.contains("solver")) {
    c.solver = solver_from_json(j.at("solver"));
  }
  read_if(j, "allow_nonconvergence", c.allow_nonconvergence);
  return c;
}

Json to_json(const EvaluateConfig& c) {
  Json j;
  j["command"] = "evaluate";
  j["data"] = c.data;
  j["fits"] = c.fits;
  j["out"] = c.out;
  return j;
}

EvaluateConfig evaluate_config_from_json(const Json& j) {
  check_keys(j, {"command", "data", "fits", "out"}, "evaluate");
  check_command(j, "evaluate");
  EvaluateConfig c;
  read_if(j, "data", c.data);
  read_if(j, "fits", c.fits);
  read_if(j, "out", c.out);
  return c;
}

Json to_json(const PolicyQuery& c) {
  Json j;
  j["command"] = "policy";
  j["fit"] = c.fit;
  j["user"] = c.user;
  j["covariates"] = c.covariates;
  j["t"] = c.t;
  return j;
}

PolicyQuery policy_query_from_json(const Json& j) {
  check_keys(j, {"command", "fit", "user", "covariates", "t"}, "policy");
  check_command(j, "policy");
  PolicyQuery q;
  read_if(j, "fit", q.fit);
  read_if(j, "user", q.user);
  read_if(j, "covariates", q.covariates);
  read_if(j, "t", q.t);
  return q;
}

Json to_json(const ReproduceConfig& c) {
  Json j;
  j["command"] = "reproduce-tables";
  Json families = Json::array();
  for (Family f : c.families) {
    families.push_back(family_name(f));
  }
  j["families"] = families;
  Json scenarios = Json::array();
  for (Scenario s : c.scenarios) {
    scenarios.push_back(scenario_name(s));
  }
  j["scenarios"] = scenarios;
  j["m"] = c.ms;
  Json methods = Json::array();
  for (Method m : c.methods) {
    methods.push_back(method_name(m));
  }
  j["methods"] = methods;
  j["trials"] = c.trials;
  j["n"] = c.n;
  j["test_horizon"] = c.test_horizon;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["out"] = c.out;
  j["solver"] = solver_to_json(c.solver);
  return j;
}

ReproduceConfig reproduce_config_from_json(const Json& j) {
  check_keys(j,
             {"command", "families", "scenarios", "m", "methods", "trials", "n", "test_horizon",
              "seed", "jobs", "out", "solver"},
             "reproduce-tables");
  check_command(j, "reproduce-tables");
  ReproduceConfig c;
  if (j.contains("families")) {
    std::vector<std::string> v;
    read_if(j, "families", v);
    c.families.clear();
    for (const auto& s : v) {
      c.families.push_back(parse_family(s));
    }
  }
  if (j.contains("scenarios")) {
    std::vector<std::string> v;
    read_if(j, "scenarios", v);
    c.scenarios.clear();
    for (const auto& s : v) {
      c.scenarios.push_back(parse_scenario(s));
    }
  }
  read_if(j, "m", c.ms);
  if (j.contains("methods")) {
    std::vector<std::string> v;
    read_if(j, "methods", v);
    c.methods.clear();
    for (const auto& s : v) {
      c.methods.push_back(parse_method(s));
    }
  }
  read_if(j, "trials", c.trials);
  read_if(j, "n", c.n);
  read_if(j, "test_horizon", c.test_horizon);
  read_if(j, "seed", c.seed);
  read_if(j, "jobs", c.jobs);
  read_if(j, "out", c.out);
  if (j.contains("solver")) {
    c.solver = solver_from_json(j.at("solver"));
  }
  if (c.families.empty() || c.scenarios.empty() || c.ms.empty() || c.methods.empty()) {
    throw ConfigError("reproduce-tables needs at least one family, scenario, m and method");
  }
  return c;
}

ModelSpec default_model(const DatasetSchema& schema) {
  if (!schema.family) {
    throw ConfigError("dataset schema names no outcome family; supply a model file");
  }
  const ModelSpec probe(*schema.family, schema.covariates, ActionCoding(schema.action_probabilities),
                        schema.covariates, {});
  std::vector<std::string> all;
  for (const auto& t : probe.terms()) {
    all.push_back(t.name);
  }
  return ModelSpec(*schema.family, schema.covariates, ActionCoding(schema.action_probabilities),
                   schema.covariates, all);
}

void run_simulate(const SimulateConfig& cfg) {
  require_out(cfg.out);
  const ScenarioSpec spec = cfg.scenario_spec();
  const fs::path out(cfg.out);
  parallel_for(cfg.trials, cfg.jobs, [&](int k) {
    const SimulatedTrial trial = gen_trial(spec, k);
    const fs::path dir = out / trial_dir(k);
    write_dataset(dir, simulated_dataset(spec, trial));
    write_json(dir / "truth.json", truth_to_json(simulated_truth(spec, trial)));
  });
  write_json(out / "config.json", to_json(cfg));
}

FitFile fit_dataset(const Dataset& data, const ModelSpec& spec, const FitConfig& cfg) {
  if (data.schema.family && *data.schema.family != spec.family()) {
    throw ConfigError("model family does not match the dataset");
  }
  if (spec.covariates() != data.schema.covariates) {
    throw ConfigError("model covariates do not match the dataset columns");
  }
  const std::vector<Trajectory> train = data.train();
  const Design design = Design::build(train, spec);
  std::vector<std::string> ids = data.user_ids();
  switch (cfg.method) {
    case Method::PPL: {
      FitResult fit = cfg.lambda ? fit_at_lambda(design, *cfg.lambda, default_init(design), cfg.solver)
                                 : select_lambda(design, cfg.solver);
      PolicyTable table = policy_table(fit, spec, std::move(ids));
      const bool converged = fit.converged;
      return FitFile{std::move(table), std::move(fit), converged};
    }
    case Method::GEE:
      return FitFile{gee_fit(design, spec, std::move(ids)), std::nullopt, true};
    case Method::MGLM:
      return FitFile{mglm_fit(design, spec, std::move(ids)), std::nullopt, true};
  }
  throw ConfigError("unknown method");
}

FitFile run_fit(const FitConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  require_out(cfg.out);
  if (cfg.data.empty()) {
    throw ConfigError("fit needs a dataset directory");
  }
  cfg.solver.validate();
  const Dataset data = read_dataset(cfg.data);
  const ModelSpec spec = cfg.model ? model_from_json(read_json(*cfg.model))
                         : data.schema.model ? *data.schema.model
                                             : default_model(data.schema);
  FitFile fit = fit_dataset(data, spec, cfg);
  const fs::path out(cfg.out);
  write_json(out / "fit.json", fit_to_json(fit));
  write_text(out / "policy.csv", policy_csv(fit.table));
  write_json(out / "config.json", to_json(cfg));
  write_timing(out, start);
  if (!fit.converged && !cfg.allow_nonconvergence) {
    std::ostringstream os;
    os << "fit did not converge (" << fit.ppl->iterations << " outer cycles, gradient norm "
       << fit.ppl->grad_norm << "); outputs were written to " << cfg.out;
    throw NumericError(os.str());
  }
  return fit;
}

EvalReport run_evaluate(const EvaluateConfig& cfg) {
  require_out(cfg.out);
  if (cfg.fits.empty()) {
    throw ConfigError("evaluate needs at least one fit directory");
  }
  const Dataset data = read_dataset(cfg.data);
  std::optional<TruthFile> truth;
  const fs::path truth_path = fs::path(cfg.data) / "truth.json";
  if (fs::exists(truth_path)) {
    truth = truth_from_json(read_json(truth_path));
  }
  const std::vector<Trajectory> test = data.test();
  EvalReport report;
  report.covariates = data.schema.covariates;
  for (const auto& dir : cfg.fits) {
    const FitFile fit = fit_from_json(read_json(fs::path(dir) / "fit.json"));
    if (fit.table.user_ids != data.user_ids()) {
      throw ConfigError("fit in " + dir + " was made for a different set of users");
    }
    const std::vector<State> none;
    report.methods.push_back(evaluate_policy(fit.table, truth ? &truth->truth : nullptr,
                                             truth ? truth->eval_states : none, test));
  }
  const fs::path out(cfg.out);
  write_json(out / "report.json", report_to_json(report));
  std::ostringstream csv;
  write_report_csv(csv, report);
  write_text(out / "report.csv", csv.str());
  write_json(out / "config.json", to_json(cfg));
  return report;
}

Json run_policy(const PolicyQuery& q) {
  const FitFile fit = fit_from_json(read_json(fs::path(q.fit) / "fit.json"));
  const auto user = fit.table.find_user(q.user);
  if (!user) {
    throw ConfigError("unknown user '" + q.user + "'");
  }
  const State state{q.covariates, q.t};
  const int action = fit.table.decide(*user, state);
  const VectorXd means = fit.table.action_means(*user, state);
  Json j;
  j["user"] = q.user;
  j["method"] = method_name(fit.table.method);
  j["t"] = q.t;
  j["covariates"] = q.covariates;
  j["action"] = action;
  Json m = Json::array();
  for (Index a = 0; a < means.size(); ++a) {
    m.push_back(number(means[a]));
  }
  j["means"] = m;
  j["divergent"] = static_cast<bool>(fit.table.divergent[static_cast<std::size_t>(*user)]);
  return j;
}

std::vector<TrialRecord> run_grid(const ReproduceConfig& cfg) {
  cfg.solver.validate();
  if (cfg.trials < 1) {
    throw ConfigError("reproduce-tables needs at least one trial");
  }
  struct Task {
    Family family;
    Scenario scenario;
    int m;
    int trial;
  };
  std::vector<Task> tasks;
  for (Family f : cfg.families) {
    for (Scenario s : cfg.scenarios) {
      for (int m : cfg.ms) {
        ScenarioSpec check = ScenarioSpec::standard(f, s, m);
        check.n = cfg.n;
        check.test_horizon = cfg.test_horizon;
        check.n_trials = cfg.trials;
        check.validate();
        for (int k = 0; k < cfg.trials; ++k) {
          tasks.push_back({f, s, m, k});
        }
      }
    }
  }
  std::vector<std::vector<TrialRecord>> results(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), cfg.jobs, [&](int i) {
    const Task& t = tasks[static_cast<std::size_t>(i)];
    results[static_cast<std::size_t>(i)] = run_trial(cfg, t.family, t.scenario, t.m, t.trial);
  });
  std::vector<TrialRecord> out;
  for (auto& r : results) {
    std::move(r.begin(), r.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<CellSummary> summarize(const std::vector<TrialRecord>& records) {
  std::vector<CellSummary> cells;
  std::vector<std::vector<const TrialRecord*>> members;
  for (const auto& r : records) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) {
      return c.family == r.family && c.scenario == r.scenario && c.m == r.m && c.method == r.method;
    });
    if (it == cells.end()) {
      CellSummary c;
      c.family = r.family;
      c.scenario = r.scenario;
      c.m = r.m;
      c.method = r.method;
      cells.push_back(c);
      members.emplace_back();
      it = cells.end() - 1;
    }
    members[static_cast<std::size_t>(it - cells.begin())].push_back(&r);
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellSummary& s = cells[c];
    std::vector<double> mse;
    std::vector<double> vr;
    std::vector<std::vector<double>> by_state;
    int converged = 0;
    for (const TrialRecord* r : members[c]) {
      ++s.trials;
      if (!r->error.empty()) {
        ++s.failures;
        continue;
      }
      mse.push_back(r->mse);
      vr.push_back(r->mean_vr);
      converged += r->converged ? 1 : 0;
      by_state.resize(std::max(by_state.size(), r->vr.size()));
      for (std::size_t k = 0; k < r->vr.size(); ++k) {
        by_state[k].push_back(r->vr[k]);
      }
    }
    mean_sd(mse, s.mean_mse, s.sd_mse);
    s.median_mse = median(mse);
    s.frac_over_cap =
        mse.empty() ? kNaN
                    : static_cast<double>(std::count_if(mse.begin(), mse.end(),
                                                        [](double x) { return !(x <= kMseDisplayCap); })) /
                          static_cast<double>(mse.size());
    double unused = 0.0;
    mean_sd(vr, s.mean_vr, unused);
    s.converged_fraction = s.trials > 0 ? static_cast<double>(converged) / s.trials : kNaN;
    for (const auto& v : by_state) {
      double mean = 0.0;
      double sd = 0.0;
      mean_sd(v, mean, sd);
      s.vr_mean.push_back(mean);
      s.vr_sd.push_back(sd);
    }
  }
  return cells;
}

std::vector<CellSummary> run_reproduce(const ReproduceConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  require_out(cfg.out);
  const std::vector<TrialRecord> records = run_grid(cfg);
  const std::vector<CellSummary> cells = summarize(records);
  const fs::path out(cfg.out);

  std::ostringstream table;
  table << "family,scenario,m,method,trials,failures,mean_mse,mse_display,sd_mse,median_mse,"
           "frac_over_1e10,mean_vr,converged_fraction\n";
  Json table_json = Json::array();
  for (const auto& c : cells) {
    table << family_name(c.family) << ',' << scenario_name(c.scenario) << ',' << c.m << ','
          << method_name(c.method) << ',' << c.trials << ',' << c.failures << ','
          << csv_number(c.mean_mse) << ',' << format_mse(c.mean_mse) << ','
          << csv_number(c.sd_mse) << ',' << csv_number(c.median_mse) << ','
          << csv_number(c.frac_over_cap) << ',' << csv_number(c.mean_vr) << ','
          << csv_number(c.converged_fraction) << '\n';
    table_json.push_back({{"family", family_name(c.family)},
                          {"scenario", scenario_name(c.scenario)},
                          {"m", c.m},
                          {"method", method_name(c.method)},
                          {"trials", c.trials},
                          {"failures", c.failures},
                          {"mean_mse", number(c.mean_mse)},
                          {"mse_display", format_mse(c.mean_mse)},
                          {"sd_mse", number(c.sd_mse)},
                          {"median_mse", number(c.median_mse)},
                          {"frac_over_1e10", number(c.frac_over_cap)},
                          {"mean_vr", number(c.mean_vr)},
                          {"converged_fraction", number(c.converged_fraction)}});
  }
  write_text(out / "table.csv", table.str());
  write_json(out / "table.json", table_json);

  std::ostringstream vr;
  vr << "family,scenario,m,method,t,X,mean_vr,sd_vr\n";
  for (const auto& c : cells) {
    ScenarioSpec spec = ScenarioSpec::standard(c.family, c.scenario, c.m);
    spec.test_horizon = cfg.test_horizon;
    const std::vector<State> states = simulation_eval_states(spec);
    for (std::size_t k = 0; k < c.vr_mean.size() && k < states.size(); ++k) {
      vr << family_name(c.family) << ',' << scenario_name(c.scenario) << ',' << c.m << ','
         << method_name(c.method) << ',' << states[k].time_index << ','
         << csv_number(states[k].covariates[0]) << ',' << csv_number(c.vr_mean[k]) << ','
         << csv_number(c.vr_sd[k]) << '\n';
    }
  }
  write_text(out / "vr.csv", vr.str());

  const std::vector<std::string> names = simulation_model(Family::Gaussian).h2_terms();
  std::ostringstream trials;
  trials << "family,scenario,m,trial,method,mse,mean_vr,beta_error,alpha_error_median,lambda,"
            "active_terms,converged,divergent_users,error\n";
  for (const auto& r : records) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    trials << family_name(r.family) << ',' << scenario_name(r.scenario) << ',' << r.m << ','
           << r.trial << ',' << method_name(r.method) << ',' << csv_number(r.mse) << ','
           << csv_number(r.mean_vr) << ',' << csv_number(r.beta_error) << ','
           << csv_number(r.alpha_error_median) << ',' << csv_number(r.lambda) << ','
           << join_active(r.active_groups, names) << ',' << (r.converged ? 1 : 0) << ','
           << r.divergent_users << ',' << error << '\n';
  }
  write_text(out / "trials.csv", trials.str());
  write_json(out / "config.json", to_json(cfg));
  write_timing(out, start);
  return cells;
}

}  // namespace pplearn
