#include "pplearn/pplearn.h"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "pplearn_capi";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PPLEARN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Context {
  pplearn_context* ctx = pplearn_context_new();
  ~Context() { pplearn_context_free(ctx); }
};

// One small simulated dataset shared by the tests below.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path out = root() / "sim";
    Context c;
    const std::string cfg = "{\"scenario\": \"continuous-nonsparse\", \"m\": 10, \"n\": 8, "
                            "\"trials\": 1, \"seed\": 3, \"out\": \"" + out.string() + "\"}";
    REQUIRE(pplearn_simulate(c.ctx, cfg.c_str()) == PPLEARN_OK);
    return out / "trial_000";
  }();
  return dir;
}

}  // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::string(pplearn_version()).size() > 0);
  Context c;
  CHECK(std::string(pplearn_last_error(c.ctx)).empty());
  CHECK(pplearn_simulate(c.ctx, "{\"trails\": 2}") == PPLEARN_ERR_VALIDATION);
  CHECK(std::string(pplearn_last_error(c.ctx)).find("trails") != std::string::npos);
  CHECK(pplearn_simulate(c.ctx, "not json") == PPLEARN_ERR_VALIDATION);
  CHECK(pplearn_simulate(c.ctx, nullptr) == PPLEARN_ERR_VALIDATION);
  pplearn_dataset* data = nullptr;
  CHECK(pplearn_dataset_load(c.ctx, (root() / "absent").c_str(), &data) == PPLEARN_ERR_IO);
  CHECK(data == nullptr);
}

TEST_CASE("dataset, fit and decisions through the C interface") {
  Context c;
  pplearn_dataset* data = nullptr;
  REQUIRE(pplearn_dataset_load(c.ctx, dataset().c_str(), &data) == PPLEARN_OK);
  CHECK(pplearn_dataset_users(data) == 8);
  CHECK(pplearn_dataset_steps(data) == 160);

  pplearn_fit* fit = nullptr;
  REQUIRE(pplearn_fit_dataset(c.ctx, data, "{\"method\": \"gee\"}", &fit) == PPLEARN_OK);
  CHECK(pplearn_fit_converged(fit) == 1);

  const double state[2] = {1.0, 11.0};
  int action = 0;
  double means[3] = {0, 0, 0};
  REQUIRE(pplearn_fit_decide(c.ctx, fit, "u1", state, 2, 11, &action, means, 3) == PPLEARN_OK);
  CHECK((action >= 1 && action <= 3));
  CHECK(means[action - 1] >= means[0]);
  CHECK(means[action - 1] >= means[1]);
  CHECK(means[action - 1] >= means[2]);
  CHECK(pplearn_fit_decide(c.ctx, fit, "nobody", state, 2, 11, &action, nullptr, 0) ==
        PPLEARN_ERR_VALIDATION);
  CHECK(pplearn_fit_decide(c.ctx, fit, "u1", state, 1, 11, &action, nullptr, 0) ==
        PPLEARN_ERR_VALIDATION);

  char* text = nullptr;
  REQUIRE(pplearn_fit_to_json(c.ctx, fit, &text) == PPLEARN_OK);
  CHECK(std::string(text).find("\"GEE\"") != std::string::npos);
  const fs::path saved = root() / "gee_fit.json";
  std::ofstream(saved) << text;
  pplearn_string_free(text);

  pplearn_fit* loaded = nullptr;
  REQUIRE(pplearn_fit_load(c.ctx, saved.c_str(), &loaded) == PPLEARN_OK);
  int again = 0;
  REQUIRE(pplearn_fit_decide(c.ctx, loaded, "u1", state, 2, 11, &again, nullptr, 0) == PPLEARN_OK);
  CHECK(again == action);

  pplearn_fit* bad = nullptr;
  CHECK(pplearn_fit_dataset(c.ctx, data, "{\"method\": \"svm\"}", &bad) == PPLEARN_ERR_VALIDATION);
  CHECK(bad == nullptr);

  pplearn_fit_free(loaded);
  pplearn_fit_free(fit);
  pplearn_dataset_free(data);
}

TEST_CASE("command line exit codes") {
  const std::string data = dataset().string();
  const std::string out = (root() / "cli").string();
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("fit --data " + data + " --out " + out + "/gee --method gee") == 0);
  CHECK(fs::exists(out + "/gee/fit.json"));
  CHECK(run_cli("fit --data " + data + " --out " + out + "/x --method svm") == 2);
  CHECK(run_cli("fit --data " + out + "/absent --out " + out + "/y --method gee") == 3);
  CHECK(run_cli("fit --config " + out + "/absent.json") == 3);
  CHECK(run_cli("nonsense") == 2);
  CHECK(run_cli("policy --fit " + out + "/gee --user u1 --covariates 1,11 --t 11") == 0);
  CHECK(run_cli("policy --fit " + out + "/gee --user nobody --covariates 1,11 --t 11") == 2);
  CHECK(run_cli("evaluate --data " + data + " --fit " + out + "/gee --out " + out + "/eval") == 0);
  CHECK(fs::exists(out + "/eval/report.json"));
  CHECK(fs::exists(out + "/eval/report.csv"));
}

TEST_CASE("command line reruns are byte identical") {
  const std::string data = dataset().string();
  const std::string out = (root() / "rerun").string();
  REQUIRE(run_cli("fit --data " + data + " --out " + out + " --method ppl") == 0);
  const std::string first = slurp(out + "/fit.json");
  const std::string policy = slurp(out + "/policy.csv");
  REQUIRE(run_cli("fit --data " + data + " --out " + out + " --method ppl") == 0);
  CHECK(slurp(out + "/fit.json") == first);
  CHECK(slurp(out + "/policy.csv") == policy);
  CHECK(first.find("\"lambda\"") != std::string::npos);
}
