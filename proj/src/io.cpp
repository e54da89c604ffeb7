#include "pplearn/io.hpp"

#include "pplearn/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pplearn {

namespace fs = std::filesystem;

namespace {

constexpr const char* kTrajectoryFormat = "pplearn-trajectories";
constexpr const char* kTrajectoriesFile = "trajectories.csv";
constexpr const char* kSchemaFile = "schema.json";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) {
    out.push_back(field);
  }
  if (!line.empty() && line.back() == sep) {
    out.emplace_back();
  }
  return out;
}

int parse_int(std::string_view text) {
  int v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

// Non-finite numbers are stored as null.
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_or(const Json& j, double missing) {
  if (j.is_null()) {
    return missing;
  }
  if (!j.is_number()) {
    throw ConfigError("expected a number in JSON");
  }
  return j.get<double>();
}

Json vector_json(const VectorXd& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) {
    out.push_back(number(v[i]));
  }
  return out;
}

VectorXd vector_from(const Json& j, double missing = std::numeric_limits<double>::quiet_NaN()) {
  if (!j.is_array()) {
    throw ConfigError("expected a JSON array of numbers");
  }
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Index>(i)] = number_or(j[i], missing);
  }
  return v;
}

Json matrix_json(const MatrixXd& m) {
  Json out = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    out.push_back(vector_json(m.row(i).transpose()));
  }
  return out;
}

MatrixXd matrix_from(const Json& j, Index cols) {
  if (!j.is_array()) {
    throw ConfigError("expected a JSON array of rows");
  }
  MatrixXd m(static_cast<Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const VectorXd row = vector_from(j[i]);
    if (row.size() != cols) {
      throw ConfigError("matrix row has the wrong length");
    }
    m.row(static_cast<Index>(i)) = row.transpose();
  }
  return m;
}

template <class T>
T field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(std::string("missing JSON field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("JSON field '") + key + "' has the wrong type");
  }
}

const Json& node(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(std::string("missing JSON field '") + key + "'");
  }
  return j.at(key);
}

Json state_json(const State& s) {
  Json out;
  out["t"] = s.time_index;
  Json cov = Json::array();
  for (double c : s.covariates) {
    cov.push_back(number(c));
  }
  out["covariates"] = cov;
  return out;
}

State state_from(const Json& j) {
  State s;
  s.time_index = field<int>(j, "t");
  const VectorXd cov = vector_from(node(j, "covariates"));
  s.covariates.assign(cov.data(), cov.data() + cov.size());
  return s;
}

std::string state_label(const std::vector<std::string>& names, const State& s) {
  std::string out;
  for (std::size_t k = 0; k < s.covariates.size(); ++k) {
    if (!out.empty()) {
      out += ';';
    }
    out += (k < names.size() ? names[k] : "s" + std::to_string(k + 1)) + "=" +
           format_double(s.covariates[k]);
  }
  return out;
}

std::vector<Trajectory> segment(const std::vector<Trajectory>& users, int horizon, bool test) {
  std::vector<Trajectory> out;
  out.reserve(users.size());
  for (const auto& traj : users) {
    Trajectory t{traj.user_id, {}};
    for (const auto& s : traj.steps) {
      const bool in_test = horizon > 0 && s.state.time_index > horizon;
      if (in_test == test) {
        t.steps.push_back(s);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) {
    throw NumericError("cannot format number");
  }
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::vector<Trajectory> Dataset::train() const {
  return segment(trajectories, schema.train_horizon, false);
}

std::vector<Trajectory> Dataset::test() const {
  return segment(trajectories, schema.train_horizon, true);
}

std::vector<std::string> Dataset::user_ids() const {
  std::vector<std::string> ids;
  ids.reserve(trajectories.size());
  for (const auto& t : trajectories) {
    ids.push_back(t.user_id);
  }
  return ids;
}

ActionCoding Dataset::coding() const { return ActionCoding(schema.action_probabilities); }

void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& users,
                            const std::vector<std::string>& covariates) {
  out << "user_id,t";
  for (const auto& name : covariates) {
    out << ',' << name;
  }
  out << ",action_label,outcome,propensity\n";
  for (const auto& traj : users) {
    if (traj.user_id.find_first_of(",\"\n\r") != std::string::npos) {
      throw ConfigError("user id '" + traj.user_id + "' contains a CSV delimiter");
    }
    for (const auto& s : traj.steps) {
      if (s.state.covariates.size() != covariates.size()) {
        throw ConfigError("step has the wrong number of covariates");
      }
      out << traj.user_id << ',' << s.state.time_index;
      for (double c : s.state.covariates) {
        out << ',' << format_double(c);
      }
      out << ',' << s.action << ',' << format_double(s.outcome) << ','
          << format_double(s.propensity) << '\n';
    }
  }
}

std::vector<Trajectory> read_trajectories_csv(std::istream& in,
                                              const std::vector<std::string>& covariates) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError("trajectory file is empty");
  }
  std::vector<std::string> expected{"user_id", "t"};
  expected.insert(expected.end(), covariates.begin(), covariates.end());
  for (const char* c : {"action_label", "outcome", "propensity"}) {
    expected.emplace_back(c);
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  if (split(line, ',') != expected) {
    throw ConfigError("trajectory header does not match the schema columns");
  }
  std::vector<Trajectory> users;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != expected.size()) {
      throw ConfigError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " fields, expected " + std::to_string(expected.size()));
    }
    if (users.empty() || users.back().user_id != cells[0]) {
      for (const auto& u : users) {
        if (u.user_id == cells[0]) {
          throw ConfigError("rows of user '" + cells[0] + "' are not contiguous");
        }
      }
      users.push_back({cells[0], {}});
    }
    Step s;
    s.state.time_index = parse_int(cells[1]);
    for (std::size_t k = 0; k < covariates.size(); ++k) {
      s.state.covariates.push_back(parse_double(cells[2 + k]));
    }
    const std::size_t base = 2 + covariates.size();
    s.action = parse_int(cells[base]);
    s.outcome = parse_double(cells[base + 1]);
    s.propensity = parse_double(cells[base + 2]);
    users.back().steps.push_back(std::move(s));
  }
  return users;
}

Json schema_to_json(const DatasetSchema& schema) {
  Json j;
  j["format"] = kTrajectoryFormat;
  j["version"] = 1;
  Json columns = Json::array({"user_id", "t"});
  for (const auto& c : schema.covariates) {
    columns.push_back(c);
  }
  for (const char* c : {"action_label", "outcome", "propensity"}) {
    columns.push_back(c);
  }
  j["columns"] = columns;
  j["covariates"] = schema.covariates;
  j["action_probabilities"] = schema.action_probabilities;
  if (schema.family) {
    j["family"] = family_name(*schema.family);
  }
  j["train_horizon"] = schema.train_horizon;
  if (schema.model) {
    j["model"] = model_to_json(*schema.model);
  }
  return j;
}

DatasetSchema schema_from_json(const Json& j) {
  if (field<std::string>(j, "format") != kTrajectoryFormat) {
    throw ConfigError("schema is not a trajectory schema");
  }
  DatasetSchema s;
  s.covariates = field<std::vector<std::string>>(j, "covariates");
  s.action_probabilities = field<std::vector<double>>(j, "action_probabilities");
  ActionCoding check(s.action_probabilities);
  if (j.contains("family")) {
    s.family = parse_family(field<std::string>(j, "family"));
  }
  s.train_horizon = j.contains("train_horizon") ? field<int>(j, "train_horizon") : 0;
  if (s.train_horizon < 0) {
    throw ConfigError("train_horizon must be nonnegative");
  }
  if (j.contains("model")) {
    s.model = model_from_json(j.at("model"));
  }
  return s;
}

Json model_to_json(const ModelSpec& spec) {
  Json j;
  j["family"] = family_name(spec.family());
  j["covariates"] = spec.covariates();
  const auto probs = spec.actions().probabilities();
  j["action_probabilities"] = std::vector<double>(probs.begin(), probs.end());
  j["interactions"] = spec.interactions();
  j["random_effects"] = spec.h2_terms();
  return j;
}

ModelSpec model_from_json(const Json& j) {
  return ModelSpec(parse_family(field<std::string>(j, "family")),
                   field<std::vector<std::string>>(j, "covariates"),
                   ActionCoding(field<std::vector<double>>(j, "action_probabilities")),
                   field<std::vector<std::string>>(j, "interactions"),
                   field<std::vector<std::string>>(j, "random_effects"));
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  std::ostringstream csv;
  write_trajectories_csv(csv, data.trajectories, data.schema.covariates);
  write_text(dir / kTrajectoriesFile, csv.str());
  write_json(dir / kSchemaFile, schema_to_json(data.schema));
}

Dataset read_dataset(const fs::path& dir) {
  Dataset data;
  data.schema = schema_from_json(read_json(dir / kSchemaFile));
  const fs::path csv = dir / kTrajectoriesFile;
  std::ifstream in(csv);
  if (!in) {
    throw IoError("cannot open " + csv.string());
  }
  data.trajectories = read_trajectories_csv(in, data.schema.covariates);
  validate_trajectories(data.trajectories, data.schema.covariates.size(),
                        data.coding().num_actions(), data.schema.family);
  return data;
}

Json truth_to_json(const TruthFile& t) {
  Json j;
  j["family"] = family_name(t.truth.family);
  j["user_ids"] = t.truth.user_ids;
  j["beta0"] = vector_json(t.truth.beta0);
  j["alpha0"] = matrix_json(t.truth.alpha0);
  j["u0"] = vector_json(t.u0);
  Json states = Json::array();
  for (const auto& s : t.eval_states) {
    states.push_back(state_json(s));
  }
  j["eval_states"] = states;
  return j;
}

TruthFile truth_from_json(const Json& j) {
  TruthFile t;
  t.truth.family = parse_family(field<std::string>(j, "family"));
  t.truth.user_ids = field<std::vector<std::string>>(j, "user_ids");
  t.truth.beta0 = vector_from(node(j, "beta0"));
  const Json& alpha = node(j, "alpha0");
  const Index q = alpha.empty() ? 0 : static_cast<Index>(alpha.at(0).size());
  t.truth.alpha0 = matrix_from(alpha, q);
  if (t.truth.alpha0.rows() != static_cast<Index>(t.truth.user_ids.size())) {
    throw ConfigError("truth has a different number of users and alpha0 rows");
  }
  if (j.contains("u0")) {
    t.u0 = vector_from(j.at("u0"));
  }
  if (j.contains("eval_states")) {
    for (const auto& s : j.at("eval_states")) {
      t.eval_states.push_back(state_from(s));
    }
  }
  return t;
}

Json fit_to_json(const FitFile& fit) {
  const PolicyTable& table = fit.table;
  Json j;
  j["method"] = method_name(table.method);
  j["converged"] = fit.converged;
  j["model"] = model_to_json(table.spec);
  j["user_ids"] = table.user_ids;
  Json terms = Json::array();
  for (const auto& t : table.spec.terms()) {
    terms.push_back(t.name);
  }
  j["terms"] = terms;
  j["coefficients"] = matrix_json(table.coef);
  j["divergent"] = table.divergent;
  if (fit.ppl) {
    const FitResult& r = *fit.ppl;
    Json p;
    p["lambda"] = number(r.pen.lambda);
    p["aic"] = number(r.aic);
    const auto h2 = table.spec.h2_terms();
    Json active = Json::array();
    for (int l : r.active_groups) {
      active.push_back(h2[static_cast<std::size_t>(l)]);
    }
    p["active_terms"] = active;
    p["beta"] = vector_json(r.params.beta);
    p["alpha"] = matrix_json(r.params.alpha);
    p["phi"] = number(r.params.phi);
    p["d_inv"] = vector_json(r.pen.d_inv);
    p["weights"] = vector_json(r.pen.weights);
    p["objective"] = {{"pseudo_loglik", number(r.objective.pseudo_loglik)},
                      {"ridge_term", number(r.objective.ridge_term)},
                      {"group_lasso_term", number(r.objective.group_lasso_term)},
                      {"total", number(r.objective.total)}};
    Json path = Json::array();
    for (double v : r.objective_path) {
      path.push_back(number(v));
    }
    p["objective_path"] = path;
    Json lambdas = Json::array();
    for (const auto& e : r.lambda_path) {
      lambdas.push_back({{"lambda", number(e.lambda)},
                         {"aic", number(e.aic)},
                         {"active_groups", e.active_groups},
                         {"converged", e.converged}});
    }
    p["lambda_path"] = lambdas;
    p["iterations"] = r.iterations;
    p["tron_iterations"] = r.tron_iterations;
    p["grad_norm"] = number(r.grad_norm);
    j["ppl"] = p;
  }
  return j;
}

FitFile fit_from_json(const Json& j) {
  const ModelSpec spec = model_from_json(node(j, "model"));
  FitFile fit{PolicyTable{parse_method(field<std::string>(j, "method")), spec,
                          field<std::vector<std::string>>(j, "user_ids"),
                          matrix_from(node(j, "coefficients"), spec.p()),
                          field<std::vector<bool>>(j, "divergent")},
              std::nullopt, field<bool>(j, "converged")};
  const auto n = fit.table.user_ids.size();
  if (static_cast<std::size_t>(fit.table.coef.rows()) != n || fit.table.divergent.size() != n) {
    throw ConfigError("fit file has inconsistent user counts");
  }
  if (j.contains("ppl")) {
    const Json& p = j.at("ppl");
    FitResult r;
    r.pen.lambda = number_or(node(p, "lambda"), 0.0);
    r.aic = number_or(node(p, "aic"), std::numeric_limits<double>::infinity());
    const auto h2 = spec.h2_terms();
    for (const auto& name : field<std::vector<std::string>>(p, "active_terms")) {
      const auto it = std::find(h2.begin(), h2.end(), name);
      if (it == h2.end()) {
        throw ConfigError("active term '" + name + "' is not a random-effect term");
      }
      r.active_groups.push_back(static_cast<int>(it - h2.begin()));
    }
    r.params.beta = vector_from(node(p, "beta"));
    r.params.alpha = matrix_from(node(p, "alpha"), spec.q());
    r.params.phi = number_or(node(p, "phi"), 1.0);
    r.pen.d_inv = vector_from(node(p, "d_inv"));
    r.pen.weights = vector_from(node(p, "weights"));
    const Json& obj = node(p, "objective");
    r.objective.pseudo_loglik = number_or(node(obj, "pseudo_loglik"), 0.0);
    r.objective.ridge_term = number_or(node(obj, "ridge_term"), 0.0);
    r.objective.group_lasso_term = number_or(node(obj, "group_lasso_term"), 0.0);
    r.objective.total = number_or(node(obj, "total"), 0.0);
    for (const auto& v : node(p, "objective_path")) {
      r.objective_path.push_back(number_or(v, std::numeric_limits<double>::quiet_NaN()));
    }
    for (const auto& e : node(p, "lambda_path")) {
      r.lambda_path.push_back({number_or(node(e, "lambda"), 0.0),
                               number_or(node(e, "aic"), std::numeric_limits<double>::infinity()),
                               field<int>(e, "active_groups"), field<bool>(e, "converged")});
    }
    r.iterations = field<int>(p, "iterations");
    r.tron_iterations = field<int>(p, "tron_iterations");
    r.grad_norm = number_or(node(p, "grad_norm"), 0.0);
    r.converged = fit.converged;
    if (r.params.beta.size() != spec.p() ||
        r.params.alpha.rows() != static_cast<Index>(n) || r.pen.d_inv.size() != spec.q() ||
        r.pen.weights.size() != spec.q()) {
      throw ConfigError("fit parameters do not match the model");
    }
    fit.ppl = std::move(r);
  }
  return fit;
}

Json report_to_json(const EvalReport& report) {
  Json j;
  j["covariates"] = report.covariates;
  Json methods = Json::array();
  for (const auto& m : report.methods) {
    Json r;
    r["method"] = method_name(m.method);
    r["mse"] = m.mse ? number(*m.mse) : Json(nullptr);
    r["mse_display"] = m.mse ? format_mse(*m.mse) : "";
    r["mean_vr"] = number(m.mean_vr);
    r["iptw"] = m.iptw ? number(*m.iptw) : Json(nullptr);
    r["iptw_note"] = m.iptw_note;
    r["divergent_users"] = m.divergent_users;
    Json vr = Json::array();
    for (const auto& v : m.vr) {
      Json e = state_json(v.state);
      e["value_ratio"] = number(v.value_ratio);
      vr.push_back(e);
    }
    r["value_ratios"] = vr;
    methods.push_back(r);
  }
  j["methods"] = methods;
  return j;
}

EvalReport report_from_json(const Json& j) {
  EvalReport report;
  report.covariates = field<std::vector<std::string>>(j, "covariates");
  for (const auto& r : node(j, "methods")) {
    MethodReport m;
    m.method = parse_method(field<std::string>(r, "method"));
    if (!node(r, "mse").is_null()) {
      m.mse = number_or(r.at("mse"), 0.0);
    } else if (!field<std::string>(r, "mse_display").empty()) {
      m.mse = std::numeric_limits<double>::infinity();
    }
    m.mean_vr = number_or(node(r, "mean_vr"), std::numeric_limits<double>::quiet_NaN());
    if (!node(r, "iptw").is_null()) {
      m.iptw = number_or(r.at("iptw"), 0.0);
    }
    m.iptw_note = field<std::string>(r, "iptw_note");
    m.divergent_users = field<int>(r, "divergent_users");
    for (const auto& e : node(r, "value_ratios")) {
      m.vr.push_back({state_from(e), number_or(node(e, "value_ratio"), 0.0)});
    }
    report.methods.push_back(std::move(m));
  }
  return report;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "method,metric,state,time,value\n";
  for (const auto& m : report.methods) {
    const auto name = method_name(m.method);
    if (m.mse) {
      out << name << ",mse,,," << format_double(*m.mse) << '\n';
    }
    if (!m.vr.empty()) {
      out << name << ",mean_vr,,," << format_double(m.mean_vr) << '\n';
    }
    if (m.iptw) {
      out << name << ",iptw,,," << format_double(*m.iptw) << '\n';
    }
    for (const auto& v : m.vr) {
      out << name << ",value_ratio," << state_label(report.covariates, v.state) << ','
          << v.state.time_index << ',' << format_double(v.value_ratio) << '\n';
    }
  }
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
  out.close();
  if (!out) {
    throw IoError("error while writing " + path.string());
  }
}

}  // namespace pplearn
