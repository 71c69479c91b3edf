#include "ceem/ceem.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "ceem/csv.hpp"
#include "ceem/eval.hpp"
#include "ceem/parallel.hpp"

namespace ceem {

namespace {

struct Iterate {
  std::vector<Matrix> x;
  Vector theta;
  double J = 0.0;
};

}  // namespace

void CeemConfig::validate() const {
  if (!(rho_x >= 0.0) || !(rho_theta >= 0.0)) {
    throw ConfigError("ceem: trust-region weights must be nonnegative");
  }
  if (tol && !(*tol > 0.0)) throw ConfigError("ceem: tol must be positive");
  if (max_epochs < 1) throw ConfigError("ceem: max_epochs must be at least 1");
  smoother.validate();
  learner.validate();
}

std::string to_string(Termination t) {
  return t == Termination::tolerance ? "tol" : "max_epochs";
}

double batch_objective(const SystemModel& model, const Vector& theta,
                       const GaussianNoiseSpec& noise, const TrajectoryDataset& data,
                       const std::vector<Matrix>& states, const std::optional<StatePrior>& prior) {
  require_dim(static_cast<Index>(states.size()), static_cast<Index>(data.trajectories.size()),
              "state batch");
  double total = 0.0;
  for (size_t i = 0; i < states.size(); ++i) {
    const auto& tr = data.trajectories[i];
    total += joint_objective(model, theta, noise, tr.y, tr.u, states[i], prior).total;
  }
  return total;
}

FitReport ceem_fit(const TrajectoryDataset& data, const SystemModel& model,
                   const Vector& theta_init, const GaussianNoiseSpec& noise,
                   const CeemConfig& config,
                   const std::optional<std::vector<Matrix>>& warm_start,
                   const std::optional<TruthInfo>& truth) {
  config.validate();
  noise.validate_for_density();
  if (data.trajectories.empty()) throw ContractError("ceem_fit: dataset is empty");
  require_dim(theta_init.size(), model.param_dim(), "initial parameters");
  if (!theta_init.allFinite()) throw ContractError("ceem_fit: initial parameters must be finite");
  require_dim(noise.sigma_w.size(), model.state_dim(), "sigma_w");
  require_dim(noise.sigma_v.size(), model.obs_dim(), "sigma_v");

  const auto num_traj = static_cast<std::ptrdiff_t>(data.trajectories.size());
  double obs_count = 0.0;
  for (const auto& tr : data.trajectories) obs_count += static_cast<double>(tr.y.size());
  const double tol = config.tol.value_or(1e-6 * obs_count);

  std::vector<Matrix> states;
  if (warm_start) {
    require_dim(static_cast<Index>(warm_start->size()), num_traj, "initial state batch");
    states = *warm_start;
  } else {
    for (const auto& tr : data.trajectories) {
      states.push_back(config.init == StateInit::observation_lift
                           ? initial_states(model, tr.y, config.lift_center)
                           : Matrix::Zero(model.state_dim(), tr.length()));
    }
  }

  auto eps_of = [&](const Vector& theta) -> std::optional<double> {
    if (!truth) return std::nullopt;
    Rng rng(truth->seed, 0);
    return dynamics_error(model, theta, truth->theta_true, truth->x0_dist, truth->num_samples, rng)
        .estimate;
  };

  FitReport report;
  report.algorithm = "ceem";
  report.param_names = model.layout().coordinate_names();
  report.initial_theta = theta_init;
  report.initial_eps = eps_of(theta_init);
  const auto& prior = config.smoother.prior;

  SmootherOptions smoother = config.smoother;
  smoother.rho_x = config.rho_x;
  LearnerOptions learner = config.learner;
  learner.rho_theta = config.rho_theta;

  // One smoothing step followed by one learning step.
  auto pass = [&](const Iterate& from, int epoch) {
    Iterate out;
    out.x.resize(from.x.size());
    try {
      parallel_for(num_traj, [&](std::ptrdiff_t i) {
        const auto& tr = data.trajectories[static_cast<size_t>(i)];
        out.x[static_cast<size_t>(i)] =
            smooth(model, from.theta, noise, tr.y, tr.u, from.x[static_cast<size_t>(i)], smoother).x;
      });
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + " smoothing: " + e.what(),
                           e.time_index());
    }
    std::vector<StateTerm> terms;
    for (size_t i = 0; i < out.x.size(); ++i) {
      const auto& tr = data.trajectories[i];
      terms.push_back({&out.x[i], &tr.y, &tr.u, 1.0});
    }
    try {
      out.theta = learn(model, noise, terms, from.theta, learner).theta;
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + " learning: " + e.what(),
                           e.time_index());
    }
    out.J = batch_objective(model, out.theta, noise, data, out.x, prior);
    return out;
  };

  Iterate cur{std::move(states), theta_init, 0.0};
  cur.J = batch_objective(model, cur.theta, noise, data, cur.x, prior);
  report.initial_J = cur.J;

  Iterate base = cur, first;
  int plain_passes = 0;
  int epoch = 0;
  auto clock = std::chrono::steady_clock::now();
  auto record = [&](const Iterate& it) {
    const auto now = std::chrono::steady_clock::now();
    const double wall = std::chrono::duration<double>(now - clock).count();
    report.epochs.push_back({epoch, it.J, eps_of(it.theta), wall, it.theta});
    clock = std::chrono::steady_clock::now();
  };

  bool converged = false;
  while (!converged && epoch < config.max_epochs) {
    if (config.accelerate && plain_passes == 2) {
      // Squared extrapolation along the last two passes; accepted only if
      // the pass from the extrapolated point beats the current objective.
      plain_passes = 0;
      const Vector r = first.theta - base.theta;
      const Vector v = cur.theta - 2.0 * first.theta + base.theta;
      if (v.norm() > 0.0 && r.norm() > 0.0) {
        double alpha = std::min(-1.0, -r.norm() / v.norm());
        for (int attempt = 0; attempt < 3 && epoch < config.max_epochs; ++attempt) {
          ++epoch;
          Iterate ext;
          ext.theta = base.theta - 2.0 * alpha * r + alpha * alpha * v;
          for (size_t i = 0; i < cur.x.size(); ++i) {
            ext.x.push_back(base.x[i] - 2.0 * alpha * (first.x[i] - base.x[i]) +
                            alpha * alpha * (cur.x[i] - 2.0 * first.x[i] + base.x[i]));
          }
          std::optional<Iterate> cand;
          if (ext.theta.allFinite()) {
            try {
              cand = pass(ext, epoch);
            } catch (const NumericalError&) {
            }
          }
          if (cand && std::isfinite(cand->J) && cand->J >= cur.J) {
            const double gain = cand->J - cur.J;
            cur = std::move(*cand);
            record(cur);
            converged = gain <= tol;
            break;
          }
          record(cur);
          alpha = 0.5 * (alpha - 1.0);
        }
      }
      base = cur;
      continue;
    }
    ++epoch;
    Iterate next = pass(cur, epoch);
    record(next);
    converged = next.J - cur.J <= tol;
    cur = std::move(next);
    if (++plain_passes == 1) first = cur;
  }
  report.termination = converged ? Termination::tolerance : Termination::max_epochs;
  report.theta = cur.theta;
  report.states = std::move(cur.x);
  return report;
}

void write_fit_report(const FitReport& report, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());

  CsvTable history;
  history.header = {"epoch", "J", "eps", "wall_s"};
  const Index q = report.theta.size();
  for (Index i = 0; i < q; ++i) history.header.push_back("theta_" + std::to_string(i));
  auto add_row = [&](int epoch, double J, std::optional<double> eps, double wall,
                     const Vector& theta) {
    std::vector<double> row{static_cast<double>(epoch), J,
                            eps.value_or(std::numeric_limits<double>::quiet_NaN()), wall};
    for (Index i = 0; i < q; ++i) row.push_back(theta[i]);
    history.rows.push_back(std::move(row));
  };
  add_row(0, report.initial_J, report.initial_eps, 0.0, report.initial_theta);
  for (const auto& e : report.epochs) add_row(e.epoch, e.J, e.eps, e.wall_seconds, e.theta);
  write_csv(history, directory / "history.csv");

  nlohmann::json j;
  j["algorithm"] = report.algorithm;
  j["theta"] = std::vector<double>(report.theta.data(), report.theta.data() + q);
  j["param_names"] = report.param_names;
  j["termination"] = to_string(report.termination);
  j["epochs"] = report.epochs.size();
  if (!report.epochs.empty()) j["final_J"] = report.epochs.back().J;
  std::ofstream out(directory / "params.json");
  if (!out) throw IoError("cannot write params.json in " + directory.string());
  out << j.dump(2) << '\n';
}

Vector read_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing parameter file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    const auto values = j.at("theta").get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed parameter file " + path.string() + ": " + e.what());
  }
}

}  // namespace ceem
