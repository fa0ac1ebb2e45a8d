#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "metabo/domain.hpp"
#include "metabo/gp.hpp"
#include "metabo/meta.hpp"

namespace metabo {

// Inputs to the confidence-width schedules. gamma_running is the accumulated
// information-gain surrogate for the target surrogate and must never
// decrease within a run.
struct ConfidenceParams {
  double rkhs_bound = 1.0;
  double delta = 0.1;
  double sigma = 0.1;
  double gamma_running = 0.0;
  int num_meta = 0;
  int max_meta_obs = 0;
};

inline double beta_t(const ConfidenceParams& params, int t) {
  if (t < 1) throw std::invalid_argument("beta_t: t must be >= 1");
  if (!(params.delta > 0.0 && params.delta < 1.0))
    throw std::invalid_argument("beta_t: delta must lie in (0,1)");
  return params.rkhs_bound +
         params.sigma * std::sqrt(2.0 * (params.gamma_running + 1.0 + std::log(4.0 / params.delta)));
}

// Confidence width shared by all meta surrogates; computed once per run.
inline double tau(const ConfidenceParams& params, double gamma_n) {
  if (params.num_meta < 1) throw std::invalid_argument("tau: needs at least one meta-task");
  if (!(params.delta > 0.0 && params.delta < 1.0))
    throw std::invalid_argument("tau: delta must lie in (0,1)");
  return params.rkhs_bound +
         params.sigma *
             std::sqrt(2.0 * (gamma_n + 1.0 + std::log(4.0 * params.num_meta / params.delta)));
}

// nu-weighted blend of the meta upper-confidence scores and the target's
// own score. The nu = 0 and nu = 1 short circuits are exact up to zero sign,
// so selections cannot differ from the full expression.
inline double ucb_acquisition(const Eigen::VectorXd& x, const GpPosterior& target_post,
                              const std::vector<MetaTask>& tasks, const MetaState& state,
                              double beta, double tau_value) {
  double target_score = 0.0;
  if (state.nu < 1.0) {
    const Prediction p = target_post.predict(x);
    target_score = p.mean + beta * std::sqrt(p.variance);
    if (state.nu == 0.0) return target_score;
  }
  double meta_score = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Prediction q = tasks[i].posterior.predict(x);
    meta_score += state.weights[static_cast<Eigen::Index>(i)] *
                  (q.mean + tau_value * std::sqrt(q.variance));
  }
  if (state.nu == 1.0) return meta_score;
  return state.nu * meta_score + (1.0 - state.nu) * target_score;
}

// Scan argmax; ties keep the lowest index.
inline std::size_t ucb_select(const Domain& domain, const GpPosterior& target_post,
                              const std::vector<MetaTask>& tasks, const MetaState& state,
                              double beta, double tau_value) {
  std::size_t best = 0;
  double best_score = ucb_acquisition(domain.point(0), target_post, tasks, state, beta, tau_value);
  for (Eigen::Index i = 1; i < domain.size(); ++i) {
    const double score =
        ucb_acquisition(domain.point(i), target_post, tasks, state, beta, tau_value);
    if (score > best_score) {
      best_score = score;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

}  // namespace metabo
