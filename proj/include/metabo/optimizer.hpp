#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "metabo/acquisition.hpp"
#include "metabo/domain.hpp"
#include "metabo/meta.hpp"
#include "metabo/rff.hpp"
#include "metabo/rng.hpp"

namespace metabo {

enum class Algorithm { rm_gp_ucb, rm_gp_ts, gp_ucb };

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::rm_gp_ucb: return "rm-gp-ucb";
    case Algorithm::rm_gp_ts: return "rm-gp-ts";
    case Algorithm::gp_ucb: return "gp-ucb";
  }
  throw std::invalid_argument("algorithm_name: unknown algorithm");
}

inline Algorithm algorithm_from_name(const std::string& name) {
  if (name == "rm-gp-ucb") return Algorithm::rm_gp_ucb;
  if (name == "rm-gp-ts") return Algorithm::rm_gp_ts;
  if (name == "gp-ucb") return Algorithm::gp_ucb;
  throw std::invalid_argument("algorithm_from_name: unknown algorithm '" + name + "'");
}

// Everything a single run needs besides the domain, the objective, and the
// meta-tasks. The confidence block's gamma_running and num_meta fields are
// overwritten internally as the run progresses.
struct RunConfig {
  Algorithm algorithm = Algorithm::rm_gp_ucb;
  // Display name in exports; empty falls back to the algorithm name.
  std::string label;
  int horizon = 50;
  int init_points = 2;
  std::uint64_t seed = 0;

  KernelSpec target_kernel;
  ConfidenceParams confidence;

  double eta = 0.05;
  double epsilon = 0.7;
  double min_decay = 0.7;
  GapMode gap_mode = GapMode::mean;
  LossForm loss_form = LossForm::simplified;

  int rff_features = 120;
  bool resample_meta_each_iteration = false;

  std::optional<Eigen::VectorXd> fixed_weights;
  std::optional<double> fixed_nu;
  std::optional<double> fixed_beta;
};

// Function being optimized over the domain indices. With ground truth the
// observation is the true value plus fresh Gaussian noise; a lookup objective
// returns stored observations verbatim and reports no true values.
class Objective {
 public:
  static Objective ground_truth(Eigen::VectorXd f_values, double noise_std) {
    if (!(noise_std >= 0.0)) throw std::invalid_argument("Objective: noise_std must be >= 0");
    Objective o;
    o.values_ = std::move(f_values);
    o.has_truth_ = true;
    o.noise_std_ = noise_std;
    return o;
  }

  static Objective lookup(Eigen::VectorXd y_values) {
    Objective o;
    o.values_ = std::move(y_values);
    return o;
  }

  Eigen::Index size() const { return values_.size(); }
  bool has_truth() const { return has_truth_; }

  double true_value(Eigen::Index i) const {
    return has_truth_ ? values_[i] : std::numeric_limits<double>::quiet_NaN();
  }
  double true_max() const {
    return has_truth_ ? values_.maxCoeff() : std::numeric_limits<double>::quiet_NaN();
  }

  double observe(Eigen::Index i, Rng& noise) const {
    if (!has_truth_) return values_[i];
    return values_[i] + noise_std_ * noise.normal();
  }

 private:
  Objective() = default;

  Eigen::VectorXd values_;
  bool has_truth_ = false;
  double noise_std_ = 0.0;
};

struct TraceRow {
  int t = 0;
  std::size_t domain_index = 0;
  Eigen::VectorXd x;
  double y = 0.0;
  double f_true = std::numeric_limits<double>::quiet_NaN();
  double inst_regret = std::numeric_limits<double>::quiet_NaN();
  double cum_regret = std::numeric_limits<double>::quiet_NaN();
  double simple_regret = std::numeric_limits<double>::quiet_NaN();
  double nu = 0.0;
  double beta = 0.0;
  Eigen::VectorXd weights;
};

struct RegretTrace {
  Algorithm algorithm = Algorithm::rm_gp_ucb;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
  // Set when an observation came back non-finite and the run stopped early.
  bool incomplete = false;
  double wall_seconds = 0.0;
};

inline double simple_regret(const RegretTrace& trace) {
  if (trace.rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  return trace.rows.back().simple_regret;
}

inline double cumulative_regret(const RegretTrace& trace) {
  if (trace.rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  return trace.rows.back().cum_regret;
}

// Total information gain of a task's full observation set. Equals the
// sequential sum of per-point increments by the chain rule, but needs only
// one factorization: 1/2 logdet(I + K / sigma^2).
inline double total_information_gain(const KernelSpec& spec, const Dataset& data) {
  const Eigen::Index n = data.size();
  if (n == 0) return 0.0;
  Eigen::MatrixXd A = gram_matrix(spec, data.inputs()) / spec.noise_variance;
  A.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("total_information_gain: factorization failed");
  return llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// One full optimization run. Meta-task posteriors are read, never refit;
// their gap histories grow by one entry per iteration for the meta variants.
inline RegretTrace run(const Domain& domain, const Objective& objective,
                       std::vector<MetaTask>& tasks, const RunConfig& config) {
  if (config.horizon < 1) throw std::invalid_argument("run: horizon must be >= 1");
  if (config.init_points < 0) throw std::invalid_argument("run: init_points must be >= 0");
  if (objective.size() != domain.size())
    throw std::invalid_argument("run: objective/domain size mismatch");
  if (config.fixed_weights &&
      config.fixed_weights->size() != static_cast<Eigen::Index>(tasks.size()))
    throw std::invalid_argument("run: fixed_weights size mismatch");
  config.target_kernel.validate();

  const auto start = std::chrono::steady_clock::now();
  const auto finish = [&](RegretTrace trace) {
    trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return trace;
  };

  RegretTrace trace;
  trace.algorithm = config.algorithm;
  trace.seed = config.seed;

  Rng init_rng(derive_seed(config.seed, 10));
  Rng noise_rng(derive_seed(config.seed, 11));
  const std::uint64_t sampler_seed = derive_seed(config.seed, 12);

  const double noise_var = config.target_kernel.noise_variance;
  const int num_tasks = static_cast<int>(tasks.size());
  const bool meta_enabled = config.algorithm != Algorithm::gp_ucb;

  Dataset data;
  GpPosterior post = fit(config.target_kernel, data, SurrogateRole::target);
  double gamma = 0.0;

  for (int i = 0; i < config.init_points; ++i) {
    const Eigen::Index idx = static_cast<Eigen::Index>(init_rng.uniform_index(
        static_cast<std::size_t>(domain.size())));
    const double y = objective.observe(idx, noise_rng);
    if (!std::isfinite(y)) {
      trace.incomplete = true;
      return finish(trace);
    }
    gamma += information_gain_increment(post, domain.point(idx), noise_var);
    data.append(domain.point(idx), y);
    post = fit(config.target_kernel, data, SurrogateRole::target);
  }

  ConfidenceParams params = config.confidence;
  params.num_meta = num_tasks;
  params.max_meta_obs = 0;
  for (const MetaTask& task : tasks)
    params.max_meta_obs = std::max(params.max_meta_obs, static_cast<int>(task.data.size()));

  double tau_value = 0.0;
  if (meta_enabled && num_tasks > 0) {
    double gamma_n = 0.0;
    for (const MetaTask& task : tasks)
      gamma_n = std::max(gamma_n, total_information_gain(task.posterior.kernel(), task.data));
    tau_value = tau(params, gamma_n);
  }

  // Pre-draw one function sample per meta-task; they stay fixed for the whole
  // run unless resampling is requested.
  std::vector<RffSampler> meta_samplers;
  std::vector<SampledFunction> meta_samples;
  if (config.algorithm == Algorithm::rm_gp_ts) {
    meta_samplers.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i)
      meta_samplers.push_back(build_rff_sampler(tasks[i].posterior, config.rff_features, tau_value,
                                                derive_seed(sampler_seed, 100 + i)));
    meta_samples.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i)
      meta_samples.push_back(sample_function(meta_samplers[i], derive_seed(sampler_seed, 200 + i)));
  }

  MetaState state = MetaState::initial(num_tasks, config.eta, config.epsilon, config.min_decay,
                                       config.gap_mode, config.loss_form);

  const double f_max = objective.true_max();
  double best_f = -std::numeric_limits<double>::infinity();
  double cum = 0.0;

  for (int t = 1; t <= config.horizon; ++t) {
    params.gamma_running = gamma;
    const double beta = config.fixed_beta ? *config.fixed_beta : beta_t(params, t);

    if (meta_enabled)
      state = step_meta_state(state, tasks, post, beta, params.delta, config.fixed_weights,
                              config.fixed_nu);

    std::size_t chosen = 0;
    if (config.algorithm == Algorithm::gp_ucb) {
      double best_score = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < domain.size(); ++i) {
        const Prediction p = post.predict(domain.point(i));
        const double score = p.mean + beta * std::sqrt(p.variance);
        if (score > best_score) {
          best_score = score;
          chosen = static_cast<std::size_t>(i);
        }
      }
    } else if (config.algorithm == Algorithm::rm_gp_ucb) {
      chosen = ucb_select(domain, post, tasks, state, beta, tau_value);
    } else {
      if (config.resample_meta_each_iteration)
        for (std::size_t i = 0; i < tasks.size(); ++i)
          meta_samples[i] = sample_function(
              meta_samplers[i],
              derive_seed(sampler_seed, 200 + i + 1000 * static_cast<std::uint64_t>(t)));
      const RffSampler target_sampler = build_rff_sampler(
          post, config.rff_features, beta,
          derive_seed(sampler_seed, 300 + static_cast<std::uint64_t>(t)));
      chosen = ts_select(domain, target_sampler, meta_samples, state,
                         derive_seed(sampler_seed, 400 + static_cast<std::uint64_t>(t)));
    }

    const Eigen::VectorXd x = domain.point(static_cast<Eigen::Index>(chosen));
    gamma += information_gain_increment(post, x, noise_var);

    const double y = objective.observe(static_cast<Eigen::Index>(chosen), noise_rng);
    if (!std::isfinite(y)) {
      trace.incomplete = true;
      return finish(trace);
    }

    TraceRow row;
    row.t = t;
    row.domain_index = chosen;
    row.x = x;
    row.y = y;
    row.nu = meta_enabled ? state.nu : 0.0;
    row.beta = beta;
    if (meta_enabled) row.weights = state.weights;
    if (objective.has_truth()) {
      row.f_true = objective.true_value(static_cast<Eigen::Index>(chosen));
      row.inst_regret = f_max - row.f_true;
      cum += row.inst_regret;
      row.cum_regret = cum;
      best_f = std::max(best_f, row.f_true);
      row.simple_regret = f_max - best_f;
    }
    trace.rows.push_back(std::move(row));

    data.append(x, y);
    post = fit(config.target_kernel, data, SurrogateRole::target);
  }
  return finish(trace);
}

}  // namespace metabo
