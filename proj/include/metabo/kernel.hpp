#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace metabo {

// Squared-exponential kernel hyperparameters plus the two diagonal terms the
// surrogates add: `regularization` is the ridge for the optimization target,
// `noise_variance` is the observation-noise variance and the ridge for meta
// surrogates.
struct KernelSpec {
  double lengthscale = 0.05;
  double signal_variance = 1.0;
  double noise_variance = 0.01;
  double regularization = 1.04;

  void validate() const {
    if (!(lengthscale > 0.0)) throw std::invalid_argument("KernelSpec: lengthscale must be > 0");
    if (!(signal_variance > 0.0)) throw std::invalid_argument("KernelSpec: signal_variance must be > 0");
    if (!(noise_variance > 0.0)) throw std::invalid_argument("KernelSpec: noise_variance must be > 0");
    if (!(regularization > 0.0)) throw std::invalid_argument("KernelSpec: regularization must be > 0");
  }
};

inline double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& x2) {
  if (x.size() != x2.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  const double sq = (x - x2).squaredNorm();
  return spec.signal_variance * std::exp(-sq / (2.0 * spec.lengthscale * spec.lengthscale));
}

// Symmetric Gram matrix over the rows of X.
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = spec.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double sq = (X.row(i) - X.row(j)).squaredNorm();
      const double v = spec.signal_variance * std::exp(-sq / (2.0 * spec.lengthscale * spec.lengthscale));
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

}  // namespace metabo
