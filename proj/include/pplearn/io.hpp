#pragma once

#include "pplearn/evaluate.hpp"
#include "pplearn/model.hpp"
#include "pplearn/solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pplearn {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

/// Sidecar of a trajectory CSV: covariate columns, action coding and the split
/// between training and test steps.
struct DatasetSchema {
  std::vector<std::string> covariates;
  std::vector<double> action_probabilities;  // centering of the action dummies
  std::optional<Family> family;
  int train_horizon = 0;  // steps with t > train_horizon form the test segment; 0 means none
  std::optional<ModelSpec> model;
};

struct Dataset {
  DatasetSchema schema;
  std::vector<Trajectory> trajectories;

  std::vector<Trajectory> train() const;
  std::vector<Trajectory> test() const;
  std::vector<std::string> user_ids() const;
  ActionCoding coding() const;
};

void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& users,
                            const std::vector<std::string>& covariates);
std::vector<Trajectory> read_trajectories_csv(std::istream& in,
                                              const std::vector<std::string>& covariates);

Json schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(const Json& j);

Json model_to_json(const ModelSpec& spec);
ModelSpec model_from_json(const Json& j);

/// Writes trajectories.csv and schema.json into dir.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

/// Ground truth of a simulated dataset plus the states at which value ratios are taken.
struct TruthFile {
  GroundTruth truth;
  VectorXd u0;
  std::vector<State> eval_states;
};

Json truth_to_json(const TruthFile& truth);
TruthFile truth_from_json(const Json& j);

/// A fitted policy table; ppl carries the penalized fit when the method is PPL.
struct FitFile {
  PolicyTable table;
  std::optional<FitResult> ppl;
  bool converged = true;
};

Json fit_to_json(const FitFile& fit);
FitFile fit_from_json(const Json& j);

Json report_to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);
/// One row per method x metric x state x time.
void write_report_csv(std::ostream& out, const EvalReport& report);

Json read_json(const std::filesystem::path& path);
/// Two-space indented JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pplearn
