#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "metabo/domain.hpp"
#include "metabo/gp.hpp"
#include "metabo/meta.hpp"
#include "metabo/rng.hpp"

namespace metabo {

// Random-Fourier-feature approximation of a GP posterior, in weight space:
// f(x) = phi(x) . w with w ~ N(weight_mean, scale^2 sigma^2 Sigma) and
// Sigma = (Phi^T Phi + sigma^2 I)^-1. The feature map is renormalized per
// query so its squared norm equals the signal variance exactly.
class RffSampler {
 public:
  RffSampler(const GpPosterior& post, int num_features, double scale, std::uint64_t rng_seed)
      : num_features_(num_features), signal_std_(std::sqrt(post.kernel().signal_variance)) {
    if (num_features < 1) throw std::invalid_argument("RffSampler: num_features must be >= 1");
    const KernelSpec& spec = post.kernel();
    const Eigen::Index dim = post.data().dimension();
    if (dim < 1)
      throw std::invalid_argument("RffSampler: posterior carries no input dimension");

    Rng rng(rng_seed);
    spectral_.resize(num_features, dim);
    for (int i = 0; i < num_features; ++i)
      for (Eigen::Index d = 0; d < dim; ++d) spectral_(i, d) = rng.normal() / spec.lengthscale;
    phases_.resize(num_features);
    for (int i = 0; i < num_features; ++i)
      phases_[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);

    const Eigen::Index n = post.data().size();
    Eigen::MatrixXd Phi(n, num_features);
    for (Eigen::Index i = 0; i < n; ++i) Phi.row(i) = features(post.data().input(i)).transpose();

    const double sigma2 = spec.noise_variance;
    Eigen::MatrixXd A = Phi.transpose() * Phi;
    A.diagonal().array() += sigma2;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("RffSampler: weight-space covariance not positive definite");
    weight_mean_ = n > 0 ? Eigen::VectorXd(llt.solve(Phi.transpose() * post.data().outputs()))
                         : Eigen::VectorXd(Eigen::VectorXd::Zero(num_features));
    // sigma^2 A^-1 = (sigma L^-T)(sigma L^-T)^T; the factor is scaled once here.
    Eigen::MatrixXd upper_inv =
        llt.matrixU().solve(Eigen::MatrixXd::Identity(num_features, num_features));
    weight_cov_factor_ = scale * std::sqrt(sigma2) * upper_inv;
  }

  Eigen::VectorXd features(const Eigen::VectorXd& x) const {
    Eigen::VectorXd raw =
        (std::sqrt(2.0 / num_features_) * ((spectral_ * x + phases_).array().cos())).matrix();
    const double norm = raw.norm();
    if (norm < 1e-150) return raw;
    return raw * (signal_std_ / norm);
  }

  int num_features() const { return num_features_; }
  const Eigen::VectorXd& weight_mean() const { return weight_mean_; }
  const Eigen::MatrixXd& weight_cov_factor() const { return weight_cov_factor_; }

 private:
  int num_features_;
  double signal_std_;
  Eigen::MatrixXd spectral_;
  Eigen::VectorXd phases_;
  Eigen::VectorXd weight_mean_;
  Eigen::MatrixXd weight_cov_factor_;
};

// One draw from the sampler's weight posterior; evaluation stays valid only
// while the sampler it came from is alive.
struct SampledFunction {
  Eigen::VectorXd weights;
  const RffSampler* sampler = nullptr;

  double operator()(const Eigen::VectorXd& x) const { return sampler->features(x).dot(weights); }
};

inline RffSampler build_rff_sampler(const GpPosterior& post, int num_features, double scale,
                                    std::uint64_t rng_seed) {
  return RffSampler(post, num_features, scale, rng_seed);
}

inline SampledFunction sample_function(const RffSampler& sampler, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  const Eigen::VectorXd z = rng.normal_vector(sampler.num_features());
  return {sampler.weight_mean() + sampler.weight_cov_factor() * z, &sampler};
}

// Thompson-sampling selection: with probability nu maximize the weighted sum
// of the pre-drawn meta samples, otherwise maximize a fresh draw from the
// target sampler. Ties keep the lowest index.
inline std::size_t ts_select(const Domain& domain, const RffSampler& target_sampler,
                             const std::vector<SampledFunction>& meta_samples,
                             const MetaState& state, std::uint64_t rng_seed) {
  if (static_cast<Eigen::Index>(meta_samples.size()) != state.weights.size())
    throw std::invalid_argument("ts_select: one pre-drawn sample per meta-task required");

  Rng rng(rng_seed);
  const bool meta_branch = rng.uniform() < state.nu;

  SampledFunction fresh;
  if (!meta_branch) fresh = sample_function(target_sampler, derive_seed(rng_seed, 1));

  const auto score_at = [&](Eigen::Index i) {
    const Eigen::VectorXd x = domain.point(i);
    if (!meta_branch) return fresh(x);
    double s = 0.0;
    for (std::size_t k = 0; k < meta_samples.size(); ++k)
      s += state.weights[static_cast<Eigen::Index>(k)] * meta_samples[k](x);
    return s;
  };

  std::size_t best = 0;
  double best_score = score_at(0);
  for (Eigen::Index i = 1; i < domain.size(); ++i) {
    const double score = score_at(i);
    if (score > best_score) {
      best_score = score;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

}  // namespace metabo
