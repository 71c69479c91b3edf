#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "ceem/csv.hpp"
#include "ceem/simulate.hpp"

namespace fs = std::filesystem;
using namespace ceem;

namespace {

const fs::path kConfigs = CEEM_CONFIG_DIR;

int run(const std::string& args) {
  const std::string cmd = std::string(CEEM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ceem_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::vector<double> column(const CsvTable& t, const std::string& name) {
  const size_t c = t.column(name);
  std::vector<double> out;
  for (const auto& row : t.rows) out.push_back(row[c]);
  return out;
}

}  // namespace

TEST(Cli, SimulateWritesDataset) {
  const auto dir = scratch("simulate");
  ASSERT_EQ(run("simulate --config " + (kConfigs / "lorenz-table1.yaml").string() + " --out-dir " +
                dir.string()),
            0);
  const auto d = read_dataset(dir / "data");
  EXPECT_EQ(d.manifest.T, 128);
  ASSERT_EQ(d.trajectories.size(), 1u);
  EXPECT_EQ(d.trajectories[0].y.cols(), 128);
  EXPECT_EQ(d.trajectories[0].y.rows(), 2);

  ASSERT_EQ(run("simulate --config " + (kConfigs / "lorenz-table1.yaml").string() + " --seed 5 --out-dir " +
                (dir / "other").string()),
            0);
  const auto e = read_dataset(dir / "other" / "data");
  EXPECT_EQ(e.manifest.seed, 5u);
  EXPECT_NE(e.trajectories[0].y, d.trajectories[0].y);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  const auto dir = scratch("errors");
  const auto bad = write_file(dir / "bad.yaml", "data:\n  T: 10\n");
  EXPECT_EQ(run("simulate --config " + bad.string()), 2);
  const auto typo = write_file(dir / "typo.yaml", "model:\n  id: lorenz\n  sigmaa: 1\n");
  EXPECT_EQ(run("fit --config " + typo.string()), 2);
  EXPECT_EQ(run("fit --config " + (kConfigs / "lti.yaml").string() + " --algorithm em"), 2);
  EXPECT_EQ(run("nonsense"), 2);
  EXPECT_NE(run("evaluate --config " + (kConfigs / "lti.yaml").string() + " --params " +
                (dir / "missing.json").string()),
            0);
}

TEST(Cli, FitIsDeterministicAndMonotone) {
  const auto dir = scratch("fit");
  const std::string cfg = (kConfigs / "lti.yaml").string();
  ASSERT_EQ(run("fit --config " + cfg + " --out-dir " + (dir / "a").string()), 0);
  ASSERT_EQ(run("fit --config " + cfg + " --out-dir " + (dir / "b").string()), 0);
  const auto a = read_csv(dir / "a" / "fit" / "history.csv");
  const auto b = read_csv(dir / "b" / "fit" / "history.csv");
  ASSERT_EQ(a.rows.size(), b.rows.size());
  EXPECT_EQ(column(a, "J"), column(b, "J"));
  EXPECT_EQ(column(a, "theta_0"), column(b, "theta_0"));
  EXPECT_EQ(column(a, "eps"), column(b, "eps"));
  const auto J = column(a, "J");
  for (size_t i = 1; i < J.size(); ++i) EXPECT_GE(J[i], J[i - 1] - 1e-9 * std::abs(J[i - 1]));
  EXPECT_TRUE(fs::exists(dir / "a" / "fit" / "params.json"));
}

TEST(Cli, CoupledFitReducesDynamicsError) {
  const auto dir = scratch("coupled");
  const auto cfg = write_file(dir / "coupled.yaml", R"(model:
  id: coupled_lorenz
  num_attractors: 2
data:
  num_trajectories: 2
  sigma_w: 0.0
  sigma_v: 0.01
  seed: 3
noise:
  sigma_w: 0.01
ceem:
  max_epochs: 8
  accelerate: true
eval:
  eps_samples: 128
)");
  ASSERT_EQ(run("fit --config " + cfg.string() + " --out-dir " + dir.string()), 0);
  const auto eps = column(read_csv(dir / "fit" / "history.csv"), "eps");
  ASSERT_GE(eps.size(), 2u);
  EXPECT_LT(eps.back(), 0.5 * eps.front());
}

TEST(Cli, EvaluateAtTruthHasZeroDynamicsError) {
  const auto dir = scratch("evaluate");
  const std::string cfg = (kConfigs / "lti.yaml").string();
  write_file(dir / "params.json", R"({"theta": [0.9, 0.2]})");
  ASSERT_EQ(run("evaluate --config " + cfg + " --params " + (dir / "params.json").string() +
                " --out-dir " + dir.string()),
            0);
  const auto eps = read_csv(dir / "metrics" / "eps.csv");
  EXPECT_EQ(column(eps, "eps")[0], 0.0);
  EXPECT_TRUE(fs::exists(dir / "metrics" / "train_rmse.csv"));
  EXPECT_TRUE(fs::exists(dir / "metrics" / "test_rmse.csv"));
}
