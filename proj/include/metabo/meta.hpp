#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "metabo/gp.hpp"

namespace metabo {

// Aggregation over a task's per-observation deviations: max is the bound's
// literal form, mean is the default reporting form.
enum class GapMode { max, mean };

// Per-task loss fed to the weight update: simplified drops the noise terms
// and multiplies the gap by a single shared observation count.
enum class LossForm { simplified, full };

// One previously completed task. The surrogate is factorized here, once, and
// never refit; only gap_history grows during a run.
struct MetaTask {
  int id;
  Dataset data;
  GpPosterior posterior;
  std::vector<double> gap_history;

  MetaTask(int task_id, Dataset observations, const KernelSpec& spec)
      : id(task_id),
        data(std::move(observations)),
        posterior(fit(spec, data, SurrogateRole::meta)) {
    if (data.size() < 1) throw std::invalid_argument("MetaTask: needs at least one observation");
  }
};

struct MetaState {
  Eigen::VectorXd weights;
  double nu = 1.0;
  Eigen::VectorXd cumulative_losses;
  double eta = 0.05;
  double epsilon = 0.7;
  double min_decay = 0.7;
  GapMode gap_mode = GapMode::mean;
  LossForm loss_form = LossForm::simplified;
  // Completed update count; the first update must leave nu at 1.
  int updates_done = 0;

  static MetaState initial(int num_tasks, double eta, double epsilon, double min_decay,
                           GapMode gap_mode = GapMode::mean,
                           LossForm loss_form = LossForm::simplified) {
    if (!(eta > 0.0)) throw std::invalid_argument("MetaState: eta must be > 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("MetaState: epsilon must be > 0");
    if (!(min_decay > 0.0 && min_decay < 1.0))
      throw std::invalid_argument("MetaState: min_decay must lie in (0,1)");
    if (num_tasks < 0) throw std::invalid_argument("MetaState: negative task count");
    MetaState s;
    s.eta = eta;
    s.epsilon = epsilon;
    s.min_decay = min_decay;
    s.gap_mode = gap_mode;
    s.loss_form = loss_form;
    s.cumulative_losses = Eigen::VectorXd::Zero(num_tasks);
    if (num_tasks > 0) {
      s.weights = Eigen::VectorXd::Constant(num_tasks, 1.0 / num_tasks);
      s.nu = 1.0;
    } else {
      s.weights = Eigen::VectorXd();
      s.nu = 0.0;
    }
    return s;
  }
};

struct GapBound {
  int task_id = 0;
  double value = 0.0;
  double noise_correction = 0.0;
};

struct ConfidenceInterval {
  double upper = 0.0;
  double lower = 0.0;
};

inline ConfidenceInterval confidence_bounds(const GpPosterior& target_post,
                                            const Eigen::VectorXd& x, double beta_next) {
  const Prediction p = target_post.predict(x);
  const double width = beta_next * std::sqrt(p.variance);
  return {p.mean + width, p.mean - width};
}

// Upper bound on the function gap of one meta-task: a noise correction plus
// the aggregated distance from each meta observation to the target's
// confidence band.
inline GapBound estimate_gap_bound(const MetaTask& task, const GpPosterior& target_post,
                                   double beta_next, double delta, int total_meta_obs,
                                   GapMode mode) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("estimate_gap_bound: delta must lie in (0,1)");
  if (total_meta_obs < 1)
    throw std::invalid_argument("estimate_gap_bound: total_meta_obs must be >= 1");
  const double sigma2 = target_post.kernel().noise_variance;
  const double correction =
      std::sqrt(2.0 * sigma2 * std::log(8.0 * static_cast<double>(total_meta_obs) / delta));

  const Eigen::Index n = task.data.size();
  double aggregated = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const ConfidenceInterval ci = confidence_bounds(target_post, task.data.input(j), beta_next);
    const double y = task.data.output(j);
    const double deviation = std::max(std::abs(y - ci.upper), std::abs(y - ci.lower));
    if (mode == GapMode::max)
      aggregated = std::max(aggregated, deviation);
    else
      aggregated += deviation / static_cast<double>(n);
  }
  return {task.id, correction + aggregated, correction};
}

inline Eigen::VectorXd loss_vector(const std::vector<GapBound>& gaps,
                                   const std::vector<int>& task_sizes, double sigma2,
                                   double delta) {
  if (gaps.size() != task_sizes.size())
    throw std::invalid_argument("loss_vector: gaps/task_sizes length mismatch");
  Eigen::VectorXd l(static_cast<Eigen::Index>(gaps.size()));
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double n_i = static_cast<double>(task_sizes[i]);
    l[static_cast<Eigen::Index>(i)] =
        n_i * (2.0 * std::sqrt(2.0 * sigma2 * std::log(8.0 * n_i / delta)) + gaps[i].value);
  }
  return l;
}

inline Eigen::VectorXd loss_vector_simplified(const std::vector<GapBound>& gaps, int common_size) {
  Eigen::VectorXd l(static_cast<Eigen::Index>(gaps.size()));
  for (std::size_t i = 0; i < gaps.size(); ++i)
    l[static_cast<Eigen::Index>(i)] = static_cast<double>(common_size) * gaps[i].value;
  return l;
}

// Closed-form minimizer of the entropic-regularized cumulative loss on the
// simplex; the max-subtraction keeps the exponentials in range.
inline Eigen::VectorXd ftrl_update(const Eigen::VectorXd& cumulative_losses, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("ftrl_update: eta must be > 0");
  if (cumulative_losses.size() == 0) return Eigen::VectorXd();
  const double shift = cumulative_losses.minCoeff();
  Eigen::VectorXd w = (-eta * (cumulative_losses.array() - shift)).exp();
  return w / w.sum();
}

// nu decays by min(r, gap^-epsilon); a zero gap decays at the slowest
// permitted rate r.
inline double nu_update(const MetaState& state, double weighted_gap) {
  if (weighted_gap < 0.0) throw std::invalid_argument("nu_update: negative weighted gap");
  double factor = state.min_decay;
  if (weighted_gap > 0.0)
    factor = std::min(state.min_decay, std::pow(weighted_gap, -state.epsilon));
  return std::clamp(state.nu * factor, 0.0, 1.0);
}

// One meta-state update, invoked before each query selection. Weights come
// from losses accumulated through the previous iteration (uniform on the
// first call), gaps come from the current target posterior, and nu stays 1 on
// the first call. fixed_weights bypasses the weight update, fixed_nu the
// influence schedule.
inline MetaState step_meta_state(const MetaState& state, std::vector<MetaTask>& tasks,
                                 const GpPosterior& target_post, double beta_next, double delta,
                                 const std::optional<Eigen::VectorXd>& fixed_weights = std::nullopt,
                                 std::optional<double> fixed_nu = std::nullopt) {
  MetaState next = state;
  next.updates_done = state.updates_done + 1;

  const int num_tasks = static_cast<int>(tasks.size());
  if (num_tasks == 0) {
    next.nu = fixed_nu.value_or(0.0);
    return next;
  }
  if (state.cumulative_losses.size() != num_tasks)
    throw std::invalid_argument("step_meta_state: state sized for a different task count");

  if (fixed_weights) {
    if (fixed_weights->size() != num_tasks)
      throw std::invalid_argument("step_meta_state: fixed_weights size mismatch");
    next.weights = *fixed_weights;
  } else {
    next.weights = ftrl_update(state.cumulative_losses, state.eta);
  }

  int total_meta_obs = 0;
  for (const MetaTask& task : tasks) total_meta_obs += static_cast<int>(task.data.size());

  std::vector<GapBound> gaps;
  gaps.reserve(tasks.size());
  Eigen::VectorXd gap_values(num_tasks);
  std::vector<int> task_sizes(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    GapBound g = estimate_gap_bound(tasks[i], target_post, beta_next, delta, total_meta_obs,
                                    state.gap_mode);
    tasks[i].gap_history.push_back(g.value);
    gap_values[static_cast<Eigen::Index>(i)] = g.value;
    task_sizes[i] = static_cast<int>(tasks[i].data.size());
    gaps.push_back(std::move(g));
  }

  if (fixed_nu) {
    next.nu = std::clamp(*fixed_nu, 0.0, 1.0);
  } else if (state.updates_done == 0) {
    next.nu = state.nu;
  } else {
    next.nu = nu_update(state, next.weights.dot(gap_values));
  }

  if (state.loss_form == LossForm::simplified) {
    const int common = *std::max_element(task_sizes.begin(), task_sizes.end());
    next.cumulative_losses = state.cumulative_losses + loss_vector_simplified(gaps, common);
  } else {
    next.cumulative_losses =
        state.cumulative_losses +
        loss_vector(gaps, task_sizes, target_post.kernel().noise_variance, delta);
  }
  return next;
}

}  // namespace metabo
