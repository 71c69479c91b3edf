#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ceem/config.hpp"
#include "ceem/eval.hpp"
#include "ceem/experiments.hpp"

namespace py = pybind11;
using namespace ceem;

namespace {

py::dict report_dict(const FitReport& r) {
  std::vector<double> J, wall;
  std::vector<std::optional<double>> eps;
  std::vector<Vector> thetas;
  for (const auto& e : r.epochs) {
    J.push_back(e.J);
    eps.push_back(e.eps);
    wall.push_back(e.wall_seconds);
    thetas.push_back(e.theta);
  }
  py::dict d;
  d["algorithm"] = r.algorithm;
  d["theta"] = r.theta;
  d["initial_theta"] = r.initial_theta;
  d["initial_J"] = r.initial_J;
  d["initial_eps"] = r.initial_eps;
  d["J"] = J;
  d["eps"] = eps;
  d["wall_seconds"] = wall;
  d["theta_history"] = thetas;
  d["termination"] = to_string(r.termination);
  d["param_names"] = r.param_names;
  d["states"] = r.states;
  return d;
}

py::dict dataset_dict(const TrajectoryDataset& data) {
  std::vector<Matrix> y, u, x;
  for (const auto& t : data.trajectories) {
    y.push_back(t.y);
    u.push_back(t.u);
    if (t.x) x.push_back(*t.x);
  }
  py::dict d;
  d["model_id"] = data.manifest.model_id;
  d["dt"] = data.manifest.dt;
  d["seed"] = data.manifest.seed;
  d["y"] = y;
  d["u"] = u;
  d["x"] = x;
  return d;
}

ExperimentConfig parse(const std::string& yaml, std::optional<std::uint64_t> seed) {
  auto cfg = parse_config(yaml, "<python>");
  if (seed) cfg.data.seed = *seed;
  return cfg;
}

struct LinearProblem {
  LtiModel model;
  GaussianNoiseSpec noise;
  Matrix u;
};

LinearProblem linear_problem(const Matrix& A, const Matrix& C, double sigma_w, double sigma_v,
                             Index T) {
  return {LtiModel(A, C), GaussianNoiseSpec::isotropic(A.rows(), sigma_w, C.rows(), sigma_v),
          no_inputs(T)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coordinate-ascent EM for nonlinear state-space models";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "lorenz_benchmark",
      [](Index num_attractors, Index T, double dt, double sigma_w, double sigma_v,
         Index num_trajectories, std::uint64_t seed) {
        LorenzBenchmarkSpec spec;
        spec.num_attractors = num_attractors;
        spec.T = T;
        spec.dt = dt;
        spec.sigma_w = sigma_w;
        spec.sigma_v = sigma_v;
        spec.num_trajectories = num_trajectories;
        spec.seed = seed;
        const auto b = make_lorenz_benchmark(spec);
        py::dict d = dataset_dict(b.data);
        d["theta_true"] = b.theta_true;
        d["C"] = b.truth.C;
        d["x0_mean"] = b.x0.mean;
        d["x0_std"] = b.x0.stddev;
        return d;
      },
      py::arg("num_attractors") = 1, py::arg("T") = 128, py::arg("dt") = 0.04,
      py::arg("sigma_w") = 0.0, py::arg("sigma_v") = 0.01, py::arg("num_trajectories") = 1,
      py::arg("seed") = 0, "Simulated (coupled) Lorenz dataset with its true parameters.");

  m.def(
      "simulate",
      [](const std::string& yaml, std::optional<std::uint64_t> seed) {
        const auto e = build_experiment(parse(yaml, seed));
        py::dict d = dataset_dict(e.data);
        d["theta_true"] = e.theta_true;
        d["theta_init"] = e.theta_init;
        return d;
      },
      py::arg("config"), py::arg("seed") = py::none(),
      "Dataset described by a YAML experiment configuration.");

  m.def(
      "fit",
      [](const std::string& yaml, const std::string& algorithm, std::optional<std::uint64_t> seed) {
        const auto cfg = parse(yaml, seed);
        const auto e = build_experiment(cfg);
        e.fit_noise.validate_for_density();
        std::optional<TruthInfo> truth;
        if (cfg.eval.eps && e.theta_true) {
          truth = TruthInfo{*e.theta_true, e.x0, cfg.eval.eps_samples, cfg.data.seed};
        }
        FitReport r;
        {
          py::gil_scoped_release release;
          if (algorithm == "ceem") {
            r = ceem_fit(e.data, *e.model, e.theta_init, e.fit_noise, resolved_ceem(cfg, e),
                         std::nullopt, truth);
          } else if (algorithm == "pem") {
            r = pem_fit(e.data, *e.model, e.theta_init, e.fit_noise, resolved_pem(cfg, e), truth);
          } else {
            throw ConfigError("algorithm must be 'ceem' or 'pem', got '" + algorithm + "'");
          }
        }
        return report_dict(r);
      },
      py::arg("config"), py::arg("algorithm") = "ceem", py::arg("seed") = py::none(),
      "Fit the parameters of a YAML experiment; returns the per-epoch history.");

  m.def(
      "evaluate",
      [](const std::string& yaml, const Vector& theta, std::optional<std::uint64_t> seed) {
        const auto cfg = parse(yaml, seed);
        const auto e = build_experiment(cfg);
        require_dim(theta.size(), e.model->layout().size(), "theta");
        EkfSettings ekf;
        ekf.drop_first = cfg.eval.drop_first;
        py::dict d;
        if (e.theta_true) {
          Rng rng(cfg.eval.test_seed, 5);
          const auto eps = dynamics_error(*e.model, theta, *e.theta_true, e.x0, cfg.eval.eps_samples, rng);
          d["eps"] = eps.estimate;
          d["eps_std_error"] = eps.std_error;
        }
        d["train_rmse"] = evaluate_dataset(*e.model, theta, e.data, ekf).rmse;
        return d;
      },
      py::arg("config"), py::arg("theta"), py::arg("seed") = py::none(),
      "Dynamics error against the truth and EKF prediction RMSE per trajectory.");

  m.def(
      "smooth_linear",
      [](const Matrix& A, const Matrix& C, double sigma_w, double sigma_v, const Matrix& y,
         const Vector& x0_mean, const Vector& x0_std, double rho_x) {
        auto p = linear_problem(A, C, sigma_w, sigma_v, y.cols());
        SmootherOptions opt;
        opt.rho_x = rho_x;
        opt.prior = StatePrior{x0_mean, x0_std};
        return smooth(p.model, p.model.nominal_theta(), p.noise, y, p.u,
                      Matrix::Zero(A.rows(), y.cols()), opt)
            .x;
      },
      py::arg("A"), py::arg("C"), py::arg("sigma_w"), py::arg("sigma_v"), py::arg("y"),
      py::arg("x0_mean"), py::arg("x0_std"), py::arg("rho_x") = 0.0,
      "MAP state trajectory of a linear-Gaussian model from the Gauss-Newton smoother.");

  m.def(
      "rts_linear",
      [](const Matrix& A, const Matrix& C, double sigma_w, double sigma_v, const Matrix& y,
         const Vector& x0_mean, const Vector& x0_std) {
        auto p = linear_problem(A, C, sigma_w, sigma_v, y.cols());
        const auto sys = LinearGaussianSystem::from_model(p.model, p.model.nominal_theta(), p.noise);
        const Matrix cov = x0_std.array().square().matrix().asDiagonal();
        return rts_smoother(sys, y, p.u, {x0_mean, cov}).mean;
      },
      py::arg("A"), py::arg("C"), py::arg("sigma_w"), py::arg("sigma_v"), py::arg("y"),
      py::arg("x0_mean"), py::arg("x0_std"), "Rauch-Tung-Striebel smoothed means.");
}
