#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "metabo/dataset.hpp"
#include "metabo/kernel.hpp"

namespace metabo {

// Selects the diagonal ridge added to the Gram matrix: the optimization
// target uses the regularization constant, meta surrogates use the
// observation-noise variance.
enum class SurrogateRole { target, meta };

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Process-wide fit counter so tests can assert that meta surrogates are
// factorized exactly once per task.
inline std::atomic<std::uint64_t>& fit_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

// Cholesky-backed GP posterior, immutable after construction. An empty
// dataset yields the prior.
class GpPosterior {
 public:
  GpPosterior(KernelSpec spec, Dataset data, SurrogateRole role)
      : spec_(spec), data_(std::move(data)) {
    spec_.validate();
    ridge_ = role == SurrogateRole::target ? spec_.regularization : spec_.noise_variance;
    const Eigen::Index n = data_.size();
    if (n == 0) return;

    Eigen::MatrixXd K = gram_matrix(spec_, data_.inputs());
    K.diagonal().array() += ridge_;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) {
      // One retry with extra jitter scaled to the signal variance.
      K.diagonal().array() += 1e-9 * spec_.signal_variance;
      llt.compute(K);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error(
            "GpPosterior: covariance not positive definite after jitter (n=" + std::to_string(n) +
            ", ridge=" + std::to_string(ridge_) + ")");
    }
    chol_lower_ = llt.matrixL();
    alpha_ = llt.solve(data_.outputs());
  }

  Prediction predict(const Eigen::VectorXd& x) const {
    if (data_.size() == 0) return {0.0, spec_.signal_variance};
    if (x.size() != data_.dimension())
      throw std::invalid_argument("GpPosterior::predict: query dimension mismatch");

    const Eigen::Index n = data_.size();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel_eval(spec_, data_.input(i), x);

    const double mean = k.dot(alpha_);
    const Eigen::VectorXd v = chol_lower_.triangularView<Eigen::Lower>().solve(k);
    double variance = spec_.signal_variance - v.squaredNorm();
    // Clamp away the floating-point leakage on both sides; downstream code
    // takes square roots.
    variance = std::clamp(variance, 1e-12, spec_.signal_variance);
    return {mean, variance};
  }

  const KernelSpec& kernel() const { return spec_; }
  const Dataset& data() const { return data_; }
  double ridge() const { return ridge_; }
  const Eigen::MatrixXd& cholesky_lower() const { return chol_lower_; }

 private:
  KernelSpec spec_;
  Dataset data_;
  double ridge_ = 0.0;
  Eigen::MatrixXd chol_lower_;
  Eigen::VectorXd alpha_;
};

inline GpPosterior fit(const KernelSpec& spec, const Dataset& data, SurrogateRole role) {
  ++fit_count();
  return GpPosterior(spec, data, role);
}

inline Prediction predict(const GpPosterior& post, const Eigen::VectorXd& x) {
  return post.predict(x);
}

// Log evidence of the outputs under the spec, with the noise variance on the
// diagonal. Only hyperparameter selection consumes this.
inline double log_marginal_likelihood(const KernelSpec& spec, const Dataset& data) {
  spec.validate();
  if (data.size() == 0) throw std::invalid_argument("log_marginal_likelihood: empty dataset");

  const Eigen::Index n = data.size();
  Eigen::MatrixXd K = gram_matrix(spec, data.inputs());
  K.diagonal().array() += spec.noise_variance;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) {
    K.diagonal().array() += 1e-9 * spec.signal_variance;
    llt.compute(K);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("log_marginal_likelihood: covariance not positive definite (n=" +
                               std::to_string(n) + ")");
  }
  const Eigen::VectorXd alpha = llt.solve(data.outputs());
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * data.outputs().dot(alpha) - 0.5 * log_det -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

// Grid-search MLE. Entries that fail to factorize are skipped; ties keep the
// earliest grid element.
inline KernelSpec fit_hyperparameters(const Dataset& data, const std::vector<KernelSpec>& grid) {
  if (grid.empty()) throw std::invalid_argument("fit_hyperparameters: empty grid");
  bool found = false;
  double best = 0.0;
  KernelSpec best_spec;
  for (const KernelSpec& spec : grid) {
    double value;
    try {
      value = log_marginal_likelihood(spec, data);
    } catch (const std::runtime_error&) {
      continue;
    }
    if (!found || value > best) {
      found = true;
      best = value;
      best_spec = spec;
    }
  }
  if (!found) throw std::runtime_error("fit_hyperparameters: every grid entry failed factorization");
  return best_spec;
}

// One summand of the online information-gain surrogate.
inline double information_gain_increment(double predictive_variance, double noise_variance) {
  return 0.5 * std::log1p(predictive_variance / noise_variance);
}

inline double information_gain_increment(const GpPosterior& post, const Eigen::VectorXd& x,
                                         double noise_variance) {
  return information_gain_increment(post.predict(x).variance, noise_variance);
}

}  // namespace metabo
