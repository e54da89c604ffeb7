#include "pplearn/pplearn.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

using Json = nlohmann::ordered_json;

struct IoFailure {
  std::string what;
};

struct ContextDeleter {
  void operator()(pplearn_context* c) const { pplearn_context_free(c); }
};

Json load_config(const std::string& path) {
  if (path.empty()) {
    return Json::object();
  }
  std::ifstream in(path);
  if (!in) {
    throw IoFailure{"cannot open config " + path};
  }
  return Json::parse(in);
}

template <class T>
void set_if(CLI::Option* opt, Json& j, const char* key, const T& value) {
  if (opt->count() > 0) {
    j[key] = value;
  }
}

int exit_code(pplearn_status s) { return s == PPLEARN_ERR_INTERNAL ? 1 : static_cast<int>(s); }

int report(pplearn_context* ctx, pplearn_status s) {
  if (s != PPLEARN_OK) {
    std::cerr << "error: " << pplearn_last_error(ctx) << '\n';
  }
  return exit_code(s);
}

std::string take(char* s) {
  std::string out = s != nullptr ? s : "";
  pplearn_string_free(s);
  return out;
}

struct TronFlags {
  double delta0 = 0.0;
  double grad_tol = 0.0;
  double cg_tol = 0.0;
  int max_iter = 0;
  int cg_max_iter = 0;
  int max_outer = 0;
  double outer_tol = 0.0;
  int lambda_grid = 0;
  double lambda_min_ratio = 0.0;
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app) {
    opts = {app->add_option("--tron-delta0", delta0, "Initial trust-region radius"),
            app->add_option("--tron-grad-tol", grad_tol, "TRON relative gradient tolerance"),
            app->add_option("--tron-cg-tol", cg_tol, "Truncated CG relative tolerance"),
            app->add_option("--tron-max-iter", max_iter, "TRON iteration limit"),
            app->add_option("--tron-cg-max-iter", cg_max_iter, "CG iteration limit"),
            app->add_option("--max-outer", max_outer, "Hyperparameter refresh cycles"),
            app->add_option("--outer-tol", outer_tol, "Relative objective change between cycles"),
            app->add_option("--lambda-grid", lambda_grid, "Number of positive lambda values"),
            app->add_option("--lambda-min-ratio", lambda_min_ratio,
                            "Smallest lambda as a fraction of lambda_max")};
  }

  void apply(Json& cfg) const {
    Json solver = cfg.contains("solver") ? cfg["solver"] : Json::object();
    Json tron = solver.contains("tron") ? solver["tron"] : Json::object();
    set_if(opts[0], tron, "delta0", delta0);
    set_if(opts[1], tron, "grad_tol", grad_tol);
    set_if(opts[2], tron, "cg_tol", cg_tol);
    set_if(opts[3], tron, "max_iter", max_iter);
    set_if(opts[4], tron, "cg_max_iter", cg_max_iter);
    if (!tron.empty()) {
      solver["tron"] = tron;
    }
    set_if(opts[5], solver, "max_outer", max_outer);
    set_if(opts[6], solver, "outer_tol", outer_tol);
    set_if(opts[7], solver, "lambda_grid", lambda_grid);
    set_if(opts[8], solver, "lambda_min_ratio", lambda_min_ratio);
    if (!solver.empty()) {
      cfg["solver"] = solver;
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized policy learning with penalized pseudo-likelihood GLMMs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pplearn_version()));

  std::string config_path;

  auto* sim = app.add_subcommand("simulate", "Generate seeded simulation datasets");
  std::string scenario;
  int m = 0;
  int n = 0;
  int trials = 0;
  int test_horizon = 0;
  unsigned long long seed = 0;
  int jobs = 1;
  std::string out;
  sim->add_option("--config", config_path, "JSON config; flags override its fields");
  auto* sim_scenario = sim->add_option("--scenario", scenario,
                                       "continuous|binary-nonsparse|sparse, e.g. continuous-sparse");
  auto* sim_m = sim->add_option("--m", m, "Training horizon");
  auto* sim_n = sim->add_option("--n", n, "Number of users");
  auto* sim_trials = sim->add_option("--trials", trials, "Number of trials");
  auto* sim_test = sim->add_option("--test-horizon", test_horizon, "Test steps after training");
  auto* sim_seed = sim->add_option("--seed", seed, "Master seed");
  auto* sim_jobs = sim->add_option("--jobs", jobs, "Parallel trials");
  auto* sim_out = sim->add_option("--out", out, "Output directory");

  auto* fit = app.add_subcommand("fit", "Fit PPL, GEE or MGLM on a dataset");
  std::string data;
  std::string method;
  double lambda = 0.0;
  std::string model;
  fit->add_option("--config", config_path, "JSON config; flags override its fields");
  auto* fit_data = fit->add_option("--data", data, "Dataset directory");
  auto* fit_out = fit->add_option("--out", out, "Output directory");
  auto* fit_method = fit->add_option("--method", method, "ppl, gee or mglm");
  auto* fit_lambda = fit->add_option("--lambda", lambda, "Fixed lambda instead of the AIC path");
  auto* fit_model = fit->add_option("--model", model, "Model JSON file");
  auto* fit_allow = fit->add_flag("--allow-nonconvergence",
                                  "Exit 0 even when the fit did not converge");
  TronFlags fit_tron;
  fit_tron.add(fit);

  auto* eval = app.add_subcommand("evaluate", "Compute MSE, value ratios and IPTW");
  std::vector<std::string> fits;
  eval->add_option("--config", config_path, "JSON config; flags override its fields");
  auto* eval_data = eval->add_option("--data", data, "Dataset directory");
  auto* eval_fits = eval->add_option("--fit", fits, "Fit directory (repeatable)");
  auto* eval_out = eval->add_option("--out", out, "Output directory");

  auto* pol = app.add_subcommand("policy", "Recommended action for a user and state");
  std::string fit_dir;
  std::string user;
  std::vector<double> covariates;
  int t = 1;
  pol->add_option("--fit", fit_dir, "Fit directory")->required();
  pol->add_option("--user", user, "User id")->required();
  pol->add_option("--covariates", covariates, "State covariates in schema order")
      ->delimiter(',')
      ->required();
  pol->add_option("--t", t, "Time index");

  auto* rep = app.add_subcommand("reproduce-tables", "Run the simulation grid and tabulate");
  std::vector<std::string> families;
  std::vector<std::string> scenarios;
  std::vector<int> ms;
  std::vector<std::string> methods;
  rep->add_option("--config", config_path, "JSON config; flags override its fields");
  auto* rep_fam = rep->add_option("--families", families, "gaussian, bernoulli")->delimiter(',');
  auto* rep_sc = rep->add_option("--scenarios", scenarios, "nonsparse, sparse")->delimiter(',');
  auto* rep_m = rep->add_option("--m", ms, "Training horizons")->delimiter(',');
  auto* rep_meth = rep->add_option("--methods", methods, "ppl, gee, mglm")->delimiter(',');
  auto* rep_trials = rep->add_option("--trials", trials, "Trials per cell");
  auto* rep_n = rep->add_option("--n", n, "Users per trial");
  auto* rep_seed = rep->add_option("--seed", seed, "Master seed");
  auto* rep_jobs = rep->add_option("--jobs", jobs, "Parallel trials");
  auto* rep_out = rep->add_option("--out", out, "Output directory");
  TronFlags rep_tron;
  rep_tron.add(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return PPLEARN_ERR_VALIDATION;
  }

  std::unique_ptr<pplearn_context, ContextDeleter> ctx(pplearn_context_new());
  if (!ctx) {
    std::cerr << "error: out of memory\n";
    return 1;
  }

  try {
    if (sim->parsed()) {
      Json cfg = load_config(config_path);
      set_if(sim_scenario, cfg, "scenario", scenario);
      set_if(sim_m, cfg, "m", m);
      set_if(sim_n, cfg, "n", n);
      set_if(sim_trials, cfg, "trials", trials);
      set_if(sim_test, cfg, "test_horizon", test_horizon);
      set_if(sim_seed, cfg, "seed", seed);
      set_if(sim_jobs, cfg, "jobs", jobs);
      set_if(sim_out, cfg, "out", out);
      return report(ctx.get(), pplearn_simulate(ctx.get(), cfg.dump().c_str()));
    }
    if (fit->parsed()) {
      Json cfg = load_config(config_path);
      set_if(fit_data, cfg, "data", data);
      set_if(fit_out, cfg, "out", out);
      set_if(fit_method, cfg, "method", method);
      set_if(fit_lambda, cfg, "lambda", lambda);
      set_if(fit_model, cfg, "model", model);
      set_if(fit_allow, cfg, "allow_nonconvergence", true);
      fit_tron.apply(cfg);
      return report(ctx.get(), pplearn_fit_command(ctx.get(), cfg.dump().c_str()));
    }
    if (eval->parsed()) {
      Json cfg = load_config(config_path);
      set_if(eval_data, cfg, "data", data);
      set_if(eval_fits, cfg, "fits", fits);
      set_if(eval_out, cfg, "out", out);
      char* result = nullptr;
      const pplearn_status s = pplearn_evaluate(ctx.get(), cfg.dump().c_str(), &result);
      if (s == PPLEARN_OK) {
        const Json r = Json::parse(take(result));
        for (const auto& mr : r["methods"]) {
          std::cout << mr["method"].get<std::string>() << "  mse " << mr["mse_display"].get<std::string>()
                    << "  mean_vr " << mr["mean_vr"].dump() << "  iptw " << mr["iptw"].dump() << '\n';
        }
      }
      return report(ctx.get(), s);
    }
    if (pol->parsed()) {
      const Json query{{"fit", fit_dir}, {"user", user}, {"covariates", covariates}, {"t", t}};
      char* result = nullptr;
      const pplearn_status s = pplearn_policy(ctx.get(), query.dump().c_str(), &result);
      if (s == PPLEARN_OK) {
        std::cout << take(result) << '\n';
      }
      return report(ctx.get(), s);
    }
    if (rep->parsed()) {
      Json cfg = load_config(config_path);
      set_if(rep_fam, cfg, "families", families);
      set_if(rep_sc, cfg, "scenarios", scenarios);
      set_if(rep_m, cfg, "m", ms);
      set_if(rep_meth, cfg, "methods", methods);
      set_if(rep_trials, cfg, "trials", trials);
      set_if(rep_n, cfg, "n", n);
      set_if(rep_seed, cfg, "seed", seed);
      set_if(rep_jobs, cfg, "jobs", jobs);
      set_if(rep_out, cfg, "out", out);
      rep_tron.apply(cfg);
      char* result = nullptr;
      const pplearn_status s = pplearn_reproduce_tables(ctx.get(), cfg.dump().c_str(), &result);
      if (s == PPLEARN_OK) {
        const Json table = Json::parse(take(result));
        std::printf("%-9s %-9s %3s %-5s %10s %8s\n", "family", "scenario", "m", "method", "mse",
                    "mean_vr");
        for (const auto& row : table) {
          std::printf("%-9s %-9s %3d %-5s %10s %8.3f\n", row["family"].get<std::string>().c_str(),
                      row["scenario"].get<std::string>().c_str(), row["m"].get<int>(),
                      row["method"].get<std::string>().c_str(),
                      row["mse_display"].get<std::string>().c_str(),
                      row["mean_vr"].is_number() ? row["mean_vr"].get<double>() : 0.0);
        }
      }
      return report(ctx.get(), s);
    }
  } catch (const IoFailure& e) {
    std::cerr << "error: " << e.what << '\n';
    return PPLEARN_ERR_IO;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: invalid config: " << e.what() << '\n';
    return PPLEARN_ERR_VALIDATION;
  }
  return 0;
}
