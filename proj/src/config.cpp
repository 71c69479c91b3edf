#include "ceem/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ceem/csv.hpp"
#include "ceem/experiments.hpp"
#include "ceem/lorenz.hpp"
#include "ceem/lti.hpp"

namespace ceem {

namespace {

std::string where(const std::string& source, const YAML::Mark& mark) {
  if (mark.is_null()) return source;
  return source + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
}

class Section {
 public:
  Section(YAML::Node node, std::string name, const std::string& source,
          std::initializer_list<const char*> allowed)
      : node_(std::move(node)), name_(std::move(name)), source_(source) {
    if (!node_ || node_.IsNull()) return;
    if (!node_.IsMap()) fail(node_, "section '" + name_ + "' must be a mapping");
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      const bool known = std::any_of(allowed.begin(), allowed.end(),
                                     [&](const char* a) { return key == a; });
      if (!known) fail(kv.first, "unknown key '" + name_ + "." + key + "'");
    }
  }

  bool has(const char* key) const { return node_ && node_.IsMap() && node_[key]; }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!has(key)) return;
    out = convert<T>(node_[key], key);
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) const {
    if (!has(key)) return;
    out = convert<T>(node_[key], key);
  }

  template <typename T>
  T require(const char* key) const {
    if (!has(key)) fail(node_, "missing required key '" + name_ + "." + key + "'");
    return convert<T>(node_[key], key);
  }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    throw ConfigError(where(source_, at ? at.Mark() : YAML::Mark::null_mark()) + ": " + msg);
  }

 private:
  template <typename T>
  T convert(const YAML::Node& v, const char* key) const {
    const std::string full = name_ + "." + key;
    if constexpr (std::is_same_v<T, Vector>) {
      if (!v.IsSequence()) fail(v, "'" + full + "' must be a list of numbers");
      Vector out(static_cast<Index>(v.size()));
      for (size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = scalar<double>(v[i], full);
      return out;
    } else if constexpr (std::is_same_v<T, Matrix>) {
      if (!v.IsSequence() || v.size() == 0) fail(v, "'" + full + "' must be a list of rows");
      const size_t rows = v.size();
      const size_t cols = v[0].IsSequence() ? v[0].size() : 0;
      Matrix out(static_cast<Index>(rows), static_cast<Index>(cols));
      for (size_t r = 0; r < rows; ++r) {
        if (!v[r].IsSequence() || v[r].size() != cols) {
          fail(v[r], "'" + full + "' rows must be lists of equal length");
        }
        for (size_t c = 0; c < cols; ++c) {
          out(static_cast<Index>(r), static_cast<Index>(c)) = scalar<double>(v[r][c], full);
        }
      }
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<std::pair<Index, Index>>>) {
      if (!v.IsSequence()) fail(v, "'" + full + "' must be a list of [row, col] pairs");
      T out;
      for (const auto& e : v) {
        if (!e.IsSequence() || e.size() != 2) fail(e, "'" + full + "' entries must be [row, col]");
        out.emplace_back(scalar<Index>(e[0], full), scalar<Index>(e[1], full));
      }
      return out;
    } else {
      return scalar<T>(v, full);
    }
  }

  template <typename T>
  T scalar(const YAML::Node& v, const std::string& full) const {
    if (!v.IsScalar()) fail(v, "'" + full + "' must be a scalar");
    try {
      return v.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(v, "invalid value '" + v.Scalar() + "' for '" + full + "'");
    }
  }

  YAML::Node node_;
  std::string name_;
  const std::string& source_;
};

StateInit parse_init(const std::string& s) {
  if (s == "observation_lift") return StateInit::observation_lift;
  if (s == "zeros") return StateInit::zeros;
  throw ConfigError("ceem.init must be observation_lift or zeros, got '" + s + "'");
}

std::string to_string(StateInit s) {
  return s == StateInit::zeros ? "zeros" : "observation_lift";
}

void check_model_id(const std::string& id, const std::string& at) {
  if (id != "lorenz" && id != "coupled_lorenz" && id != "lti") {
    throw ConfigError(at + ": unknown model id '" + id + "' (expected lorenz, coupled_lorenz or lti)");
  }
}

YAML::Emitter& emit_vector(YAML::Emitter& out, const Vector& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Index i = 0; i < v.size(); ++i) out << v[i];
  return out << YAML::EndSeq;
}

YAML::Emitter& emit_matrix(YAML::Emitter& out, const Matrix& m) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Index r = 0; r < m.rows(); ++r) {
    out << YAML::Flow << YAML::BeginSeq;
    for (Index c = 0; c < m.cols(); ++c) out << m(r, c);
    out << YAML::EndSeq;
  }
  return out << YAML::EndSeq;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(where(source, e.mark) + ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source + ": top level must be a mapping");
  const Section top(root, "config", source,
                    {"model", "data", "noise", "ceem", "smoother", "learner", "pem", "eval",
                     "output"});
  if (!root["model"]) throw ConfigError(source + ": missing required section 'model'");

  ExperimentConfig c;

  const Section model(root["model"], "model", source,
                      {"id", "num_attractors", "obs_rows", "h_scale", "dt", "A", "B", "C", "D",
                       "free_entries", "theta_true", "theta_init", "init_fraction"});
  c.model.id = model.require<std::string>("id");
  check_model_id(c.model.id, where(source, root["model"]["id"].Mark()));
  if (c.model.id == "coupled_lorenz") c.model.num_attractors = 2;
  model.get("num_attractors", c.model.num_attractors);
  model.get("obs_rows", c.model.obs_rows);
  model.get("h_scale", c.model.h_scale);
  model.get("dt", c.model.dt);
  model.get("A", c.model.A);
  model.get("B", c.model.B);
  model.get("C", c.model.C);
  model.get("D", c.model.D);
  model.get("free_entries", c.model.free_entries);
  model.get("theta_true", c.model.theta_true);
  model.get("theta_init", c.model.theta_init);
  model.get("init_fraction", c.model.init_fraction);
  if (c.model.id == "lti") {
    if (!c.model.A) model.require<Matrix>("A");
    if (!c.model.C) model.require<Matrix>("C");
  }

  const Section data(root["data"], "data", source,
                     {"T", "num_trajectories", "sigma_w", "sigma_v", "seed", "input_std",
                      "x0_mean", "x0_std", "path"});
  data.get("T", c.data.T);
  data.get("num_trajectories", c.data.num_trajectories);
  data.get("sigma_w", c.data.sigma_w);
  data.get("sigma_v", c.data.sigma_v);
  data.get("seed", c.data.seed);
  data.get("input_std", c.data.input_std);
  data.get("x0_mean", c.data.x0_mean);
  data.get("x0_std", c.data.x0_std);
  data.get("path", c.data.path);

  const Section noise(root["noise"], "noise", source, {"sigma_w", "sigma_v"});
  noise.get("sigma_w", c.fit_noise.sigma_w);
  noise.get("sigma_v", c.fit_noise.sigma_v);

  const Section ceem(root["ceem"], "ceem", source,
                     {"rho_x", "rho_theta", "tol", "max_epochs", "init", "accelerate",
                      "center_lift"});
  ceem.get("rho_x", c.ceem.rho_x);
  ceem.get("rho_theta", c.ceem.rho_theta);
  ceem.get("tol", c.ceem.tol);
  ceem.get("max_epochs", c.ceem.max_epochs);
  if (ceem.has("init")) c.ceem.init = parse_init(ceem.require<std::string>("init"));
  ceem.get("accelerate", c.ceem.accelerate);
  ceem.get("center_lift", c.center_lift);

  auto& sm = c.ceem.smoother;
  const Section smoother(root["smoother"], "smoother", source,
                         {"max_iterations", "gradient_tolerance", "step_tolerance",
                          "initial_lambda", "lambda_up", "lambda_down", "lambda_max"});
  smoother.get("max_iterations", sm.max_iterations);
  smoother.get("gradient_tolerance", sm.gradient_tolerance);
  smoother.get("step_tolerance", sm.step_tolerance);
  smoother.get("initial_lambda", sm.initial_lambda);
  smoother.get("lambda_up", sm.lambda_up);
  smoother.get("lambda_down", sm.lambda_down);
  smoother.get("lambda_max", sm.lambda_max);

  auto& lo = c.ceem.learner;
  const Section learner(root["learner"], "learner", source,
                        {"strategy", "nm_max_iterations", "nm_relative_scale", "nm_min_scale",
                         "nm_tolerance", "adam_iterations", "adam_step", "adam_beta1",
                         "adam_beta2", "adam_epsilon", "lbfgs_max_iterations", "lbfgs_history",
                         "lbfgs_gradient_tolerance"});
  if (learner.has("strategy")) {
    try {
      lo.strategy = parse_strategy(learner.require<std::string>("strategy"));
    } catch (const std::exception& e) {
      learner.fail(root["learner"]["strategy"], e.what());
    }
  }
  learner.get("nm_max_iterations", lo.nm_max_iterations);
  learner.get("nm_relative_scale", lo.nm_relative_scale);
  learner.get("nm_min_scale", lo.nm_min_scale);
  learner.get("nm_tolerance", lo.nm_tolerance);
  learner.get("adam_iterations", lo.adam_iterations);
  learner.get("adam_step", lo.adam_step);
  learner.get("adam_beta1", lo.adam_beta1);
  learner.get("adam_beta2", lo.adam_beta2);
  learner.get("adam_epsilon", lo.adam_epsilon);
  learner.get("lbfgs_max_iterations", lo.lbfgs_max_iterations);
  learner.get("lbfgs_history", lo.lbfgs_history);
  learner.get("lbfgs_gradient_tolerance", lo.lbfgs_gradient_tolerance);

  const Section pem(root["pem"], "pem", source,
                    {"num_particles", "num_samples", "epochs", "resample_threshold",
                     "saem_burn_in", "saem_exponent", "buffer_horizon", "max_rejection_trials",
                     "seed"});
  pem.get("num_particles", c.pem.num_particles);
  pem.get("num_samples", c.pem.num_samples);
  pem.get("epochs", c.pem.epochs);
  pem.get("resample_threshold", c.pem.resample_threshold);
  pem.get("saem_burn_in", c.pem.saem_burn_in);
  pem.get("saem_exponent", c.pem.saem_exponent);
  pem.get("buffer_horizon", c.pem.buffer_horizon);
  pem.get("max_rejection_trials", c.pem.max_rejection_trials);
  pem.get("seed", c.pem.seed);

  const Section eval(root["eval"], "eval", source,
                     {"eps_samples", "drop_first", "eps", "rmse", "test_trajectories",
                      "test_seed"});
  eval.get("eps_samples", c.eval.eps_samples);
  eval.get("drop_first", c.eval.drop_first);
  eval.get("eps", c.eval.eps);
  eval.get("rmse", c.eval.rmse);
  eval.get("test_trajectories", c.eval.test_trajectories);
  eval.get("test_seed", c.eval.test_seed);

  const Section output(root["output"], "output", source,
                       {"directory", "dataset", "fit", "metrics"});
  output.get("directory", c.output.directory);
  output.get("dataset", c.output.dataset);
  output.get("fit", c.output.fit);
  output.get("metrics", c.output.metrics);

  try {
    c.ceem.validate();
    c.pem.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (c.data.T < 2) throw ConfigError(source + ": data.T must be at least 2");
  if (c.data.num_trajectories < 1) throw ConfigError(source + ": data.num_trajectories must be positive");
  if (!(c.data.sigma_w >= 0.0) || !(c.data.sigma_v >= 0.0)) {
    throw ConfigError(source + ": data noise std-devs must be nonnegative");
  }
  if (c.model.num_attractors < 1) throw ConfigError(source + ": model.num_attractors must be positive");
  if (!(c.model.dt > 0.0)) throw ConfigError(source + ": model.dt must be positive");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string emit_config(const ExperimentConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "id" << YAML::Value << c.model.id;
  out << YAML::Key << "num_attractors" << YAML::Value << c.model.num_attractors;
  out << YAML::Key << "obs_rows" << YAML::Value << c.model.obs_rows;
  out << YAML::Key << "h_scale" << YAML::Value << c.model.h_scale;
  out << YAML::Key << "dt" << YAML::Value << c.model.dt;
  const std::pair<const char*, const std::optional<Matrix>*> mats[] = {
      {"A", &c.model.A}, {"B", &c.model.B}, {"C", &c.model.C}, {"D", &c.model.D}};
  for (const auto& [name, m] : mats) {
    if (!*m) continue;
    out << YAML::Key << name << YAML::Value;
    emit_matrix(out, **m);
  }
  if (!c.model.free_entries.empty()) {
    out << YAML::Key << "free_entries" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& [r, col] : c.model.free_entries) {
      out << YAML::Flow << YAML::BeginSeq << r << col << YAML::EndSeq;
    }
    out << YAML::EndSeq;
  }
  if (c.model.theta_true) {
    out << YAML::Key << "theta_true" << YAML::Value;
    emit_vector(out, *c.model.theta_true);
  }
  if (c.model.theta_init) {
    out << YAML::Key << "theta_init" << YAML::Value;
    emit_vector(out, *c.model.theta_init);
  }
  out << YAML::Key << "init_fraction" << YAML::Value << c.model.init_fraction;
  out << YAML::EndMap;

  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "T" << YAML::Value << c.data.T;
  out << YAML::Key << "num_trajectories" << YAML::Value << c.data.num_trajectories;
  out << YAML::Key << "sigma_w" << YAML::Value << c.data.sigma_w;
  out << YAML::Key << "sigma_v" << YAML::Value << c.data.sigma_v;
  out << YAML::Key << "seed" << YAML::Value << c.data.seed;
  out << YAML::Key << "input_std" << YAML::Value << c.data.input_std;
  if (c.data.x0_mean) {
    out << YAML::Key << "x0_mean" << YAML::Value;
    emit_vector(out, *c.data.x0_mean);
  }
  if (c.data.x0_std) {
    out << YAML::Key << "x0_std" << YAML::Value;
    emit_vector(out, *c.data.x0_std);
  }
  if (c.data.path) out << YAML::Key << "path" << YAML::Value << *c.data.path;
  out << YAML::EndMap;

  if (c.fit_noise.sigma_w || c.fit_noise.sigma_v) {
    out << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
    if (c.fit_noise.sigma_w) out << YAML::Key << "sigma_w" << YAML::Value << *c.fit_noise.sigma_w;
    if (c.fit_noise.sigma_v) out << YAML::Key << "sigma_v" << YAML::Value << *c.fit_noise.sigma_v;
    out << YAML::EndMap;
  }

  out << YAML::Key << "ceem" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rho_x" << YAML::Value << c.ceem.rho_x;
  out << YAML::Key << "rho_theta" << YAML::Value << c.ceem.rho_theta;
  if (c.ceem.tol) out << YAML::Key << "tol" << YAML::Value << *c.ceem.tol;
  out << YAML::Key << "max_epochs" << YAML::Value << c.ceem.max_epochs;
  out << YAML::Key << "init" << YAML::Value << to_string(c.ceem.init);
  out << YAML::Key << "accelerate" << YAML::Value << c.ceem.accelerate;
  out << YAML::Key << "center_lift" << YAML::Value << c.center_lift;
  out << YAML::EndMap;

  const auto& sm = c.ceem.smoother;
  out << YAML::Key << "smoother" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "max_iterations" << YAML::Value << sm.max_iterations;
  out << YAML::Key << "gradient_tolerance" << YAML::Value << sm.gradient_tolerance;
  out << YAML::Key << "step_tolerance" << YAML::Value << sm.step_tolerance;
  out << YAML::Key << "initial_lambda" << YAML::Value << sm.initial_lambda;
  out << YAML::Key << "lambda_up" << YAML::Value << sm.lambda_up;
  out << YAML::Key << "lambda_down" << YAML::Value << sm.lambda_down;
  out << YAML::Key << "lambda_max" << YAML::Value << sm.lambda_max;
  out << YAML::EndMap;

  const auto& lo = c.ceem.learner;
  out << YAML::Key << "learner" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "strategy" << YAML::Value << to_string(lo.strategy);
  out << YAML::Key << "nm_max_iterations" << YAML::Value << lo.nm_max_iterations;
  out << YAML::Key << "nm_relative_scale" << YAML::Value << lo.nm_relative_scale;
  out << YAML::Key << "nm_min_scale" << YAML::Value << lo.nm_min_scale;
  out << YAML::Key << "nm_tolerance" << YAML::Value << lo.nm_tolerance;
  out << YAML::Key << "adam_iterations" << YAML::Value << lo.adam_iterations;
  out << YAML::Key << "adam_step" << YAML::Value << lo.adam_step;
  out << YAML::Key << "adam_beta1" << YAML::Value << lo.adam_beta1;
  out << YAML::Key << "adam_beta2" << YAML::Value << lo.adam_beta2;
  out << YAML::Key << "adam_epsilon" << YAML::Value << lo.adam_epsilon;
  out << YAML::Key << "lbfgs_max_iterations" << YAML::Value << lo.lbfgs_max_iterations;
  out << YAML::Key << "lbfgs_history" << YAML::Value << lo.lbfgs_history;
  out << YAML::Key << "lbfgs_gradient_tolerance" << YAML::Value << lo.lbfgs_gradient_tolerance;
  out << YAML::EndMap;

  out << YAML::Key << "pem" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "num_particles" << YAML::Value << c.pem.num_particles;
  out << YAML::Key << "num_samples" << YAML::Value << c.pem.num_samples;
  out << YAML::Key << "epochs" << YAML::Value << c.pem.epochs;
  out << YAML::Key << "resample_threshold" << YAML::Value << c.pem.resample_threshold;
  out << YAML::Key << "saem_burn_in" << YAML::Value << c.pem.saem_burn_in;
  out << YAML::Key << "saem_exponent" << YAML::Value << c.pem.saem_exponent;
  out << YAML::Key << "buffer_horizon" << YAML::Value << c.pem.buffer_horizon;
  out << YAML::Key << "max_rejection_trials" << YAML::Value << c.pem.max_rejection_trials;
  out << YAML::Key << "seed" << YAML::Value << c.pem.seed;
  out << YAML::EndMap;

  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "eps_samples" << YAML::Value << c.eval.eps_samples;
  out << YAML::Key << "drop_first" << YAML::Value << c.eval.drop_first;
  out << YAML::Key << "eps" << YAML::Value << c.eval.eps;
  out << YAML::Key << "rmse" << YAML::Value << c.eval.rmse;
  out << YAML::Key << "test_trajectories" << YAML::Value << c.eval.test_trajectories;
  out << YAML::Key << "test_seed" << YAML::Value << c.eval.test_seed;
  out << YAML::EndMap;

  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "directory" << YAML::Value << c.output.directory;
  out << YAML::Key << "dataset" << YAML::Value << c.output.dataset;
  out << YAML::Key << "fit" << YAML::Value << c.output.fit;
  out << YAML::Key << "metrics" << YAML::Value << c.output.metrics;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

namespace {

std::shared_ptr<const LtiModel> make_lti(const ModelSection& m) {
  const Matrix& A = *m.A;
  const Matrix& C = *m.C;
  if (A.rows() != A.cols()) throw ConfigError("model.A must be square");
  if (C.cols() != A.rows()) throw ConfigError("model.C must have as many columns as A has rows");
  for (const auto& [r, c] : m.free_entries) {
    if (r < 0 || c < 0 || r >= A.rows() || c >= A.cols()) {
      throw ConfigError("model.free_entries: entry (" + std::to_string(r) + ", " +
                        std::to_string(c) + ") lies outside A");
    }
  }
  if (!m.B) {
    if (m.D) throw ConfigError("model.D given without model.B");
    return std::make_shared<LtiModel>(A, C, m.free_entries);
  }
  const Matrix& B = *m.B;
  if (B.rows() != A.rows()) throw ConfigError("model.B must have as many rows as A");
  const Matrix D = m.D ? *m.D : Matrix::Zero(C.rows(), B.cols());
  if (D.rows() != C.rows() || D.cols() != B.cols()) {
    throw ConfigError("model.D must be (rows of C) x (columns of B)");
  }
  return std::make_shared<LtiModel>(A, B, C, D, m.free_entries);
}

InitialConditionSpec lti_initial(const DataSection& d, Index n) {
  InitialConditionSpec s{Vector::Zero(n), Vector::Ones(n)};
  if (d.x0_mean) s.mean = *d.x0_mean;
  if (d.x0_std) s.stddev = *d.x0_std;
  if (s.mean.size() != n || s.stddev.size() != n) {
    throw ConfigError("data.x0_mean and data.x0_std must have length " + std::to_string(n));
  }
  return s;
}

Matrix lti_inputs(const SystemModel& model, Index T, double input_std, std::uint64_t seed) {
  Matrix u(model.input_dim(), T);
  Rng rng(seed, 4);
  for (Index t = 0; t < T; ++t) {
    for (Index k = 0; k < u.rows(); ++k) u(k, t) = rng.normal(0.0, input_std);
  }
  return u;
}

TrajectoryDataset simulate_lti(const ExperimentConfig& c, const Experiment& e, Index count,
                               std::uint64_t seed) {
  TrajectoryDataset d;
  auto& man = d.manifest;
  man.model_id = "lti";
  man.n = e.model->state_dim();
  man.m = e.model->obs_dim();
  man.p = e.model->input_dim();
  man.T = c.data.T;
  man.dt = c.model.dt;
  man.num_trajectories = count;
  man.seed = seed;
  man.theta_true = e.theta_true;
  man.sigma_w = e.data_noise.sigma_w;
  man.sigma_v = e.data_noise.sigma_v;
  man.observation_matrix = e.model->linear_observation();
  man.generation = {{"input_std", format_double(c.data.input_std)}};
  Rng x0_rng(seed, 2);
  for (Index i = 0; i < count; ++i) {
    const auto ts = trajectory_seed(seed, i);
    const Vector x0 = sample_initial_condition(e.x0, x0_rng);
    const Matrix u = lti_inputs(*e.model, c.data.T, c.data.input_std, ts);
    d.trajectories.push_back(
        generate_trajectory(*e.model, *e.theta_true, x0, u, c.data.T, e.data_noise, ts));
  }
  d.validate();
  return d;
}

LorenzBenchmarkSpec lorenz_spec(const ExperimentConfig& c, Index count, std::uint64_t seed) {
  LorenzBenchmarkSpec s;
  s.num_attractors = c.model.num_attractors;
  s.obs_rows = c.model.obs_rows;
  s.h_scale = c.model.h_scale;
  s.T = c.data.T;
  s.dt = c.model.dt;
  s.sigma_w = c.data.sigma_w;
  s.sigma_v = c.data.sigma_v;
  s.num_trajectories = count;
  s.seed = seed;
  return s;
}

GaussianNoiseSpec fit_noise(const ExperimentConfig& c, Index n, Index m, const Vector& sw,
                            const Vector& sv) {
  GaussianNoiseSpec s{sw, sv};
  if (c.fit_noise.sigma_w) s.sigma_w = Vector::Constant(n, *c.fit_noise.sigma_w);
  if (c.fit_noise.sigma_v) s.sigma_v = Vector::Constant(m, *c.fit_noise.sigma_v);
  return s;
}

}  // namespace

Experiment build_experiment(const ExperimentConfig& c) {
  Experiment e;
  const bool lorenz = c.model.id == "lorenz" || c.model.id == "coupled_lorenz";
  if (c.model.id == "lorenz" && c.model.num_attractors != 1) {
    throw ConfigError("model id 'lorenz' has one attractor; use coupled_lorenz");
  }

  if (c.data.path) {
    e.data = read_dataset(*c.data.path);
    const auto& man = e.data.manifest;
    if (lorenz) {
      if (!man.observation_matrix) {
        throw ConfigError("dataset " + *c.data.path + " has no observation_matrix");
      }
      const Index K = man.n / 3;
      if (3 * K != man.n) throw ConfigError("dataset state dimension is not a multiple of 3");
      e.model = make_lorenz_model(K, *man.observation_matrix, man.dt);
      e.x0 = InitialConditionSpec::lorenz(K);
    } else {
      e.model = make_lti(c.model);
      e.x0 = lti_initial(c.data, e.model->state_dim());
    }
    if (man.n != e.model->state_dim() || man.m != e.model->obs_dim() ||
        man.p != e.model->input_dim()) {
      throw ConfigError("dataset " + *c.data.path + " does not match the configured model");
    }
    e.theta_true = man.theta_true ? man.theta_true : c.model.theta_true;
    e.data_noise = {man.sigma_w, man.sigma_v};
  } else if (lorenz) {
    auto b = make_lorenz_benchmark(lorenz_spec(c, c.data.num_trajectories, c.data.seed));
    if (c.model.theta_true) {
      throw ConfigError("model.theta_true is drawn by the benchmark for Lorenz models; remove it");
    }
    e.model = b.model;
    e.theta_true = b.theta_true;
    e.x0 = b.x0;
    e.data_noise = b.noise;
    e.data = std::move(b.data);
  } else {
    auto model = make_lti(c.model);
    e.model = model;
    e.theta_true = c.model.theta_true ? *c.model.theta_true : model->nominal_theta();
    require_dim(e.theta_true->size(), model->layout().size(), "model.theta_true");
    e.x0 = lti_initial(c.data, model->state_dim());
    e.data_noise = GaussianNoiseSpec::isotropic(model->state_dim(), c.data.sigma_w,
                                                model->obs_dim(), c.data.sigma_v);
    e.data = simulate_lti(c, e, c.data.num_trajectories, c.data.seed);
  }

  e.fit_noise = fit_noise(c, e.model->state_dim(), e.model->obs_dim(), e.data_noise.sigma_w,
                          e.data_noise.sigma_v);

  if (c.model.theta_init) {
    e.theta_init = *c.model.theta_init;
    if (e.theta_init.size() != e.model->layout().size()) {
      throw ConfigError("model.theta_init must have length " +
                        std::to_string(e.model->layout().size()));
    }
  } else if (e.theta_true) {
    Rng rng(c.data.seed, 3);
    e.theta_init = perturb_within(*e.theta_true, c.model.init_fraction, rng);
  } else {
    throw ConfigError("model.theta_init is required when the dataset carries no theta_true");
  }
  return e;
}

TrajectoryDataset simulate_test_set(const ExperimentConfig& c, const Experiment& e, Index count,
                                    std::uint64_t seed) {
  if (count < 1) throw ConfigError("test set needs at least one trajectory");
  if (!e.theta_true) throw ConfigError("simulating a test set requires theta_true");
  if (c.model.id == "lti") return simulate_lti(c, e, count, seed);
  TrajectoryDataset d;
  d.manifest = e.data.manifest;
  d.manifest.num_trajectories = count;
  d.manifest.seed = seed;
  Rng x0_rng(seed, 2);
  for (Index i = 0; i < count; ++i) {
    const Vector x0 = sample_initial_condition(e.x0, x0_rng);
    d.trajectories.push_back(generate_trajectory(*e.model, *e.theta_true, x0,
                                                 Matrix(0, d.manifest.T), d.manifest.T,
                                                 e.data_noise, trajectory_seed(seed, i)));
  }
  d.validate();
  return d;
}

CeemConfig resolved_ceem(const ExperimentConfig& c, const Experiment& e) {
  CeemConfig out = c.ceem;
  if (c.center_lift && !out.lift_center) out.lift_center = e.x0.mean;
  return out;
}

PemConfig resolved_pem(const ExperimentConfig& c, const Experiment& e) {
  PemConfig out = c.pem;
  out.initial = e.x0;
  out.learner = c.ceem.learner;
  return out;
}

}  // namespace ceem
