#include "pplearn/pplearn.h"

#include "pplearn/errors.hpp"
#include "pplearn/pipeline.hpp"

#include <cstring>
#include <new>
#include <string>

struct pplearn_context {
  std::string error;
};

struct pplearn_dataset {
  pplearn::Dataset data;
};

struct pplearn_fit {
  pplearn::FitFile fit;
};

namespace {

using pplearn::Json;

template <class F>
pplearn_status guarded(pplearn_context* ctx, F&& body) {
  if (ctx != nullptr) {
    ctx->error.clear();
  }
  auto fail = [&](pplearn_status s, const char* what) {
    if (ctx != nullptr) {
      ctx->error = what;
    }
    return s;
  };
  try {
    body();
    return PPLEARN_OK;
  } catch (const pplearn::Error& e) {
    return fail(static_cast<pplearn_status>(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(PPLEARN_ERR_VALIDATION, e.what());
  } catch (const std::bad_alloc&) {
    return fail(PPLEARN_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PPLEARN_ERR_INTERNAL, e.what());
  }
}

Json parse_config(const char* text) {
  if (text == nullptr) {
    return Json::object();
  }
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw pplearn::ConfigError(std::string("invalid JSON config: ") + e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (p == nullptr) {
    throw pplearn::ConfigError(std::string(what) + " must not be NULL");
  }
}

}  // namespace

extern "C" {

const char* pplearn_version(void) { return "0.1.0"; }

pplearn_context* pplearn_context_new(void) { return new (std::nothrow) pplearn_context(); }

void pplearn_context_free(pplearn_context* ctx) { delete ctx; }

const char* pplearn_last_error(const pplearn_context* ctx) {
  return ctx != nullptr ? ctx->error.c_str() : "";
}

void pplearn_string_free(char* s) { delete[] s; }

pplearn_status pplearn_simulate(pplearn_context* ctx, const char* config_json) {
  return guarded(ctx, [&] {
    pplearn::run_simulate(pplearn::simulate_config_from_json(parse_config(config_json)));
  });
}

pplearn_status pplearn_fit_command(pplearn_context* ctx, const char* config_json) {
  return guarded(ctx, [&] {
    pplearn::run_fit(pplearn::fit_config_from_json(parse_config(config_json)));
  });
}

pplearn_status pplearn_evaluate(pplearn_context* ctx, const char* config_json,
                                char** report_json) {
  return guarded(ctx, [&] {
    const auto report =
        pplearn::run_evaluate(pplearn::evaluate_config_from_json(parse_config(config_json)));
    if (report_json != nullptr) {
      *report_json = copy_string(pplearn::report_to_json(report).dump(2));
    }
  });
}

pplearn_status pplearn_policy(pplearn_context* ctx, const char* query_json, char** result_json) {
  return guarded(ctx, [&] {
    require(result_json, "result_json");
    const Json result =
        pplearn::run_policy(pplearn::policy_query_from_json(parse_config(query_json)));
    *result_json = copy_string(result.dump(2));
  });
}

pplearn_status pplearn_reproduce_tables(pplearn_context* ctx, const char* config_json,
                                        char** table_json) {
  return guarded(ctx, [&] {
    const auto cfg = pplearn::reproduce_config_from_json(parse_config(config_json));
    pplearn::run_reproduce(cfg);
    if (table_json != nullptr) {
      *table_json = copy_string(
          pplearn::read_json(std::filesystem::path(cfg.out) / "table.json").dump(2));
    }
  });
}

pplearn_status pplearn_dataset_load(pplearn_context* ctx, const char* dir, pplearn_dataset** out) {
  return guarded(ctx, [&] {
    require(dir, "dir");
    require(out, "out");
    *out = new pplearn_dataset{pplearn::read_dataset(dir)};
  });
}

void pplearn_dataset_free(pplearn_dataset* data) { delete data; }

size_t pplearn_dataset_users(const pplearn_dataset* data) {
  return data != nullptr ? data->data.trajectories.size() : 0;
}

size_t pplearn_dataset_steps(const pplearn_dataset* data) {
  size_t total = 0;
  if (data != nullptr) {
    for (const auto& t : data->data.trajectories) {
      total += t.steps.size();
    }
  }
  return total;
}

pplearn_status pplearn_fit_dataset(pplearn_context* ctx, const pplearn_dataset* data,
                                   const char* config_json, pplearn_fit** out) {
  return guarded(ctx, [&] {
    require(data, "data");
    require(out, "out");
    const pplearn::FitConfig cfg = pplearn::fit_config_from_json(parse_config(config_json));
    const auto& schema = data->data.schema;
    const pplearn::ModelSpec spec =
        cfg.model ? pplearn::model_from_json(pplearn::read_json(*cfg.model))
        : schema.model ? *schema.model
                       : pplearn::default_model(schema);
    *out = new pplearn_fit{pplearn::fit_dataset(data->data, spec, cfg)};
  });
}

pplearn_status pplearn_fit_load(pplearn_context* ctx, const char* fit_json_path,
                                pplearn_fit** out) {
  return guarded(ctx, [&] {
    require(fit_json_path, "fit_json_path");
    require(out, "out");
    *out = new pplearn_fit{pplearn::fit_from_json(pplearn::read_json(fit_json_path))};
  });
}

void pplearn_fit_free(pplearn_fit* fit) { delete fit; }

int pplearn_fit_converged(const pplearn_fit* fit) {
  return fit != nullptr && fit->fit.converged ? 1 : 0;
}

pplearn_status pplearn_fit_to_json(pplearn_context* ctx, const pplearn_fit* fit, char** out) {
  return guarded(ctx, [&] {
    require(fit, "fit");
    require(out, "out");
    *out = copy_string(pplearn::fit_to_json(fit->fit).dump(2));
  });
}

pplearn_status pplearn_fit_decide(pplearn_context* ctx, const pplearn_fit* fit,
                                  const char* user_id, const double* covariates,
                                  size_t num_covariates, int t, int* action, double* means,
                                  size_t num_actions) {
  return guarded(ctx, [&] {
    require(fit, "fit");
    require(user_id, "user_id");
    require(action, "action");
    if (num_covariates > 0) {
      require(covariates, "covariates");
    }
    const auto& table = fit->fit.table;
    const auto user = table.find_user(user_id);
    if (!user) {
      throw pplearn::ConfigError(std::string("unknown user '") + user_id + "'");
    }
    const pplearn::State state{std::vector<double>(covariates, covariates + num_covariates), t};
    *action = table.decide(*user, state);
    if (means != nullptr) {
      const auto k = static_cast<size_t>(table.spec.actions().num_actions());
      if (num_actions != k) {
        throw pplearn::ConfigError("means buffer must hold one entry per action");
      }
      const Eigen::VectorXd m = table.action_means(*user, state);
      for (size_t a = 0; a < k; ++a) {
        means[a] = m[static_cast<Eigen::Index>(a)];
      }
    }
  });
}

}  // extern "C"
