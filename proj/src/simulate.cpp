#include "ceem/simulate.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ceem/csv.hpp"

namespace ceem {

namespace fs = std::filesystem;
using nlohmann::json;

void TrajectoryDataset::validate() const {
  const auto& mf = manifest;
  if (static_cast<Index>(trajectories.size()) != mf.num_trajectories) {
    throw ContractError("dataset: manifest lists " + std::to_string(mf.num_trajectories) +
                        " trajectories, found " + std::to_string(trajectories.size()));
  }
  for (size_t i = 0; i < trajectories.size(); ++i) {
    const auto& tr = trajectories[i];
    const std::string where = "trajectory " + std::to_string(i);
    if (tr.y.rows() != mf.m || tr.u.rows() != mf.p) {
      throw ContractError(where + ": dimensions disagree with manifest");
    }
    if (tr.y.cols() != mf.T || tr.u.cols() != mf.T) {
      throw ContractError(where + ": length disagrees with manifest T=" + std::to_string(mf.T));
    }
    if (tr.x && (tr.x->rows() != mf.n || tr.x->cols() != mf.T)) {
      throw ContractError(where + ": state block disagrees with manifest");
    }
  }
}

InitialConditionSpec InitialConditionSpec::lorenz(Index num_attractors) {
  InitialConditionSpec spec;
  spec.mean.resize(3 * num_attractors);
  spec.stddev = Vector::Constant(3 * num_attractors, 2.5);
  for (Index k = 0; k < num_attractors; ++k) spec.mean.segment<3>(3 * k) << -6.0, -6.0, 24.0;
  return spec;
}

Vector sample_initial_condition(const InitialConditionSpec& spec, Rng& rng) {
  require_dim(spec.stddev.size(), spec.mean.size(), "initial-condition std-devs");
  Vector x(spec.mean.size());
  for (Index i = 0; i < x.size(); ++i) {
    if (spec.stddev[i] < 0.0) throw ConfigError("initial-condition std-dev must be nonnegative");
    x[i] = spec.stddev[i] == 0.0 ? spec.mean[i] : rng.normal(spec.mean[i], spec.stddev[i]);
  }
  return x;
}

std::uint64_t trajectory_seed(std::uint64_t dataset_seed, Index index) {
  CounterEngine eng(dataset_seed, 0xDA7A5E7ULL);
  eng.discard(static_cast<std::uint64_t>(index));
  return eng();
}

Trajectory generate_trajectory(const SystemModel& model, const Vector& theta, const Vector& x0,
                               const Matrix& inputs, Index T, const GaussianNoiseSpec& noise,
                               std::uint64_t seed) {
  if (T < 2) throw ContractError("generate_trajectory: T must be at least 2");
  const Index n = model.state_dim(), m = model.obs_dim(), p = model.input_dim();
  require_dim(x0.size(), n, "initial state");
  require_dim(theta.size(), model.param_dim(), "parameters");
  require_dim(noise.sigma_w.size(), n, "sigma_w");
  require_dim(noise.sigma_v.size(), m, "sigma_v");
  if (inputs.rows() != p || inputs.cols() != T) {
    throw ContractError("generate_trajectory: inputs must be p x T");
  }
  if ((noise.sigma_w.array() < 0).any() || (noise.sigma_v.array() < 0).any()) {
    throw ConfigError("generate_trajectory: noise std-devs must be nonnegative");
  }

  Rng rng(seed, 1);
  Trajectory tr;
  tr.seed = seed;
  tr.u = inputs;
  tr.y.resize(m, T);
  Matrix x(n, T);
  x.col(0) = x0;
  for (Index t = 0; t < T; ++t) {
    const Vector xt = x.col(t);
    const Vector ut = inputs.col(t);
    Vector yt = model.observe(xt, ut, t, theta);
    for (Index i = 0; i < m; ++i) yt[i] += noise.sigma_v[i] * rng.normal();
    tr.y.col(t) = yt;
    if (t + 1 < T) {
      Vector next = model.step(xt, ut, t, theta);
      for (Index i = 0; i < n; ++i) next[i] += noise.sigma_w[i] * rng.normal();
      if (!next.allFinite()) {
        throw NumericalError("trajectory diverged at t=" + std::to_string(t + 1), t + 1);
      }
      x.col(t + 1) = next;
    }
  }
  tr.x = std::move(x);
  return tr;
}

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vector(const json& j, const std::string& key) {
  if (!j.is_array()) throw IoError("manifest: '" + key + "' must be a list of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw IoError("manifest: '" + key + "' must be a list of numbers");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

const json& require_key(const json& j, const std::string& key) {
  if (!j.contains(key)) throw IoError("manifest: missing key '" + key + "'");
  return j.at(key);
}

}  // namespace

void write_dataset(const TrajectoryDataset& dataset, const fs::path& directory) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());

  const auto& mf = dataset.manifest;
  json j;
  j["model_id"] = mf.model_id;
  j["n"] = mf.n;
  j["m"] = mf.m;
  j["p"] = mf.p;
  j["T"] = mf.T;
  j["dt"] = mf.dt;
  j["num_trajectories"] = mf.num_trajectories;
  j["seed"] = mf.seed;
  if (mf.theta_true) j["theta_true"] = vector_json(*mf.theta_true);
  j["sigma_w"] = vector_json(mf.sigma_w);
  j["sigma_v"] = vector_json(mf.sigma_v);
  if (mf.observation_matrix) {
    json rows = json::array();
    for (Index r = 0; r < mf.observation_matrix->rows(); ++r) {
      rows.push_back(vector_json(mf.observation_matrix->row(r).transpose()));
    }
    j["observation_matrix"] = rows;
  }
  json gen = json::object();
  for (const auto& [k, v] : mf.generation) gen[k] = v;
  j["generation"] = gen;
  j["trajectory_seeds"] = json::array();
  for (const auto& tr : dataset.trajectories) j["trajectory_seeds"].push_back(tr.seed);

  std::ofstream out(directory / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + directory.string());
  out << j.dump(2) << '\n';

  for (size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const auto& tr = dataset.trajectories[i];
    CsvTable table;
    table.header.push_back("t");
    for (Index k = 0; k < mf.p; ++k) table.header.push_back("u_" + std::to_string(k));
    for (Index k = 0; k < mf.m; ++k) table.header.push_back("y_" + std::to_string(k));
    if (tr.x) {
      for (Index k = 0; k < mf.n; ++k) table.header.push_back("x_" + std::to_string(k));
    }
    for (Index t = 0; t < tr.length(); ++t) {
      std::vector<double> row;
      row.push_back(static_cast<double>(t));
      for (Index k = 0; k < mf.p; ++k) row.push_back(tr.u(k, t));
      for (Index k = 0; k < mf.m; ++k) row.push_back(tr.y(k, t));
      if (tr.x) {
        for (Index k = 0; k < mf.n; ++k) row.push_back((*tr.x)(k, t));
      }
      table.rows.push_back(std::move(row));
    }
    write_csv(table, directory / ("trajectory_" + std::to_string(i) + ".csv"));
  }
}

TrajectoryDataset read_dataset(const fs::path& directory) {
  const fs::path manifest_path = directory / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("missing manifest file " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  TrajectoryDataset ds;
  auto& mf = ds.manifest;
  try {
    mf.model_id = require_key(j, "model_id").get<std::string>();
    mf.n = require_key(j, "n").get<Index>();
    mf.m = require_key(j, "m").get<Index>();
    mf.p = require_key(j, "p").get<Index>();
    mf.T = require_key(j, "T").get<Index>();
    mf.dt = require_key(j, "dt").get<double>();
    mf.num_trajectories = require_key(j, "num_trajectories").get<Index>();
    mf.seed = require_key(j, "seed").get<std::uint64_t>();
    if (j.contains("theta_true")) mf.theta_true = json_vector(j["theta_true"], "theta_true");
    mf.sigma_w = json_vector(require_key(j, "sigma_w"), "sigma_w");
    mf.sigma_v = json_vector(require_key(j, "sigma_v"), "sigma_v");
    if (j.contains("observation_matrix")) {
      const auto& rows = j["observation_matrix"];
      Matrix C(static_cast<Index>(rows.size()), mf.n);
      for (size_t r = 0; r < rows.size(); ++r) {
        Vector row = json_vector(rows[r], "observation_matrix");
        if (row.size() != mf.n) throw IoError("manifest: observation_matrix rows must have n entries");
        C.row(static_cast<Index>(r)) = row.transpose();
      }
      mf.observation_matrix = std::move(C);
    }
    if (j.contains("generation")) {
      for (const auto& [k, v] : j["generation"].items()) {
        mf.generation.emplace_back(k, v.get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  std::vector<std::uint64_t> seeds;
  if (j.contains("trajectory_seeds")) seeds = j["trajectory_seeds"].get<std::vector<std::uint64_t>>();

  for (Index i = 0; i < mf.num_trajectories; ++i) {
    const fs::path path = directory / ("trajectory_" + std::to_string(i) + ".csv");
    const CsvTable table = read_csv(path);
    if (static_cast<Index>(table.rows.size()) != mf.T) {
      throw IoError(path.string() + ": manifest T=" + std::to_string(mf.T) + " but file has " +
                    std::to_string(table.rows.size()) + " rows");
    }
    Trajectory tr;
    tr.u.resize(mf.p, mf.T);
    tr.y.resize(mf.m, mf.T);
    auto fill = [&](Matrix& dst, const std::string& prefix, Index dim) {
      for (Index k = 0; k < dim; ++k) {
        const size_t col = table.column(prefix + std::to_string(k), path);
        for (Index t = 0; t < mf.T; ++t) dst(k, t) = table.rows[static_cast<size_t>(t)][col];
      }
    };
    fill(tr.u, "u_", mf.p);
    fill(tr.y, "y_", mf.m);
    if (table.has_column("x_0")) {
      Matrix x(mf.n, mf.T);
      fill(x, "x_", mf.n);
      tr.x = std::move(x);
    }
    tr.seed = static_cast<size_t>(i) < seeds.size() ? seeds[static_cast<size_t>(i)] : 0;
    ds.trajectories.push_back(std::move(tr));
  }
  ds.validate();
  return ds;
}

}  // namespace ceem
