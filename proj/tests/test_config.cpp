#include <gtest/gtest.h>

#include <string>

#include "ceem/config.hpp"

using namespace ceem;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "t.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, BundledFilesRoundTrip) {
  for (const char* name : {"lorenz-table1.yaml", "coupled-lorenz.yaml", "lti.yaml"}) {
    const auto c = load_config(std::filesystem::path(CEEM_CONFIG_DIR) / name);
    const std::string once = emit_config(c);
    const std::string twice = emit_config(parse_config(once));
    EXPECT_EQ(once, twice) << name;
  }
}

TEST(Config, DefaultsFilledIn) {
  const auto c = parse_config("model:\n  id: lorenz\n");
  EXPECT_EQ(c.model.num_attractors, 1);
  EXPECT_EQ(c.data.T, 128);
  EXPECT_DOUBLE_EQ(c.model.dt, 0.04);
  EXPECT_EQ(c.eval.drop_first, 25);
  EXPECT_TRUE(c.center_lift);
  EXPECT_EQ(parse_config("model:\n  id: coupled_lorenz\n").model.num_attractors, 2);
}

TEST(Config, UnknownKeyReportsPosition) {
  const auto msg = error_of("model:\n  id: lorenz\n  dtt: 0.1\n");
  EXPECT_NE(msg.find("t.yaml:3:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("model.dtt"), std::string::npos) << msg;
  EXPECT_NE(error_of("model:\n  id: lorenz\nextra: {}\n").find("extra"), std::string::npos);
}

TEST(Config, RejectsInvalidInput) {
  EXPECT_NE(error_of("data:\n  T: 10\n").find("model"), std::string::npos);
  EXPECT_FALSE(error_of("model:\n  dt: 0.1\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: pendulum\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: lti\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: lorenz\ndata:\n  T: -3\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: lorenz\ndata:\n  T: ten\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: lorenz\nceem:\n  max_epochs: 0\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: lorenz\npem:\n  num_particles: 1\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: lorenz\nceem:\n  init: random\n").empty());
  EXPECT_FALSE(error_of("model: [1, 2]\n").empty());
  EXPECT_FALSE(error_of("model:\n  id: lti\n  A: [[1, 2], [3]]\n  C: [[1, 0]]\n").empty());
}

TEST(Config, LinearExperimentIsReproducible) {
  const auto c = load_config(std::filesystem::path(CEEM_CONFIG_DIR) / "lti.yaml");
  const auto a = build_experiment(c);
  const auto b = build_experiment(c);
  ASSERT_EQ(a.data.trajectories.size(), 2u);
  EXPECT_EQ(a.data.trajectories[0].y.cols(), 100);
  EXPECT_EQ(a.data.trajectories[0].u.rows(), 1);
  EXPECT_EQ(a.data.trajectories[1].y, b.data.trajectories[1].y);
  EXPECT_EQ(a.theta_init, b.theta_init);
  ASSERT_TRUE(a.theta_true.has_value());
  EXPECT_EQ(a.theta_true->size(), 2);
  EXPECT_NE(a.theta_init, *a.theta_true);

  auto reseeded = c;
  reseeded.data.seed = 8;
  EXPECT_NE(build_experiment(reseeded).data.trajectories[0].y, a.data.trajectories[0].y);

  const auto test = simulate_test_set(c, a, 2, 99);
  EXPECT_EQ(test.trajectories.size(), 2u);
  EXPECT_NE(test.trajectories[0].y, a.data.trajectories[0].y);
}

TEST(Config, LorenzExperimentMatchesBenchmark) {
  const auto c = load_config(std::filesystem::path(CEEM_CONFIG_DIR) / "lorenz-table1.yaml");
  const auto e = build_experiment(c);
  EXPECT_EQ(e.model->state_dim(), 3);
  EXPECT_EQ(e.model->obs_dim(), 2);
  EXPECT_EQ(e.data.trajectories[0].y.cols(), 128);
  for (Index i = 0; i < e.theta_init.size(); ++i) {
    EXPECT_LE(std::abs(e.theta_init[i] / (*e.theta_true)[i] - 1.0), c.model.init_fraction + 1e-12);
  }
  const auto ceem_cfg = resolved_ceem(c, e);
  ASSERT_TRUE(ceem_cfg.lift_center.has_value());
  EXPECT_EQ(*ceem_cfg.lift_center, e.x0.mean);
  EXPECT_THROW(build_experiment(parse_config("model:\n  id: lorenz\n  theta_true: [1, 2, 3]\n")),
               ConfigError);
}
