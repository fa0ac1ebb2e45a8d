#pragma once

// Independent recomputation routes used by the tests. Nothing here may call
// into the library's solve paths: the GP oracle inverts the covariance
// explicitly with full-pivot LU and rebuilds the kernel inline, the FTRL
// oracle minimizes the regularized objective numerically on the simplex.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

namespace oracle {

struct DensePrediction {
  double mean;
  double variance;
};

inline double se_kernel(double lengthscale, double signal_variance, const Eigen::VectorXd& a,
                        const Eigen::VectorXd& b) {
  double sq = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) sq += (a[d] - b[d]) * (a[d] - b[d]);
  return signal_variance * std::exp(-0.5 * sq / (lengthscale * lengthscale));
}

inline DensePrediction dense_gp_predict(double lengthscale, double signal_variance, double ridge,
                                        const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& x) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      K(i, j) = se_kernel(lengthscale, signal_variance, X.row(i).transpose(), X.row(j).transpose());
    K(i, i) += ridge;
    k[i] = se_kernel(lengthscale, signal_variance, X.row(i).transpose(), x);
  }
  const Eigen::MatrixXd K_inv = Eigen::FullPivLU<Eigen::MatrixXd>(K).inverse();
  const double mean = k.dot(K_inv * y);
  const double variance = signal_variance - k.dot(K_inv * k);
  return {mean, variance};
}

// Projected gradient descent for
//   min_w  w . losses + (1/eta) sum_i w_i log w_i   s.t. w on the simplex.
// Euclidean simplex projection per step; diminishing step size. Slow and
// deliberately unrelated to the closed-form softmax being verified.
inline Eigen::VectorXd project_to_simplex(Eigen::VectorXd v) {
  const Eigen::Index m = v.size();
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    cumulative += u[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[i] - candidate > 0.0) theta = candidate;
  }
  for (Eigen::Index i = 0; i < m; ++i) v[i] = std::max(v[i] - theta, 0.0);
  return v;
}

// The objective is strongly convex with curvature 1/(eta*w_i); on the region
// w_i >= floor a fixed step of eta*floor contracts linearly. Instances must
// keep eta*(max loss - min loss) <= ~3.5 so the optimum stays above the floor.
inline Eigen::VectorXd ftrl_numeric_minimizer(const Eigen::VectorXd& cumulative_losses,
                                              double eta, int iterations = 80000) {
  const Eigen::Index m = cumulative_losses.size();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  const double floor = 1e-3;
  const double step = eta * floor;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd grad(m);
    for (Eigen::Index i = 0; i < m; ++i)
      grad[i] = cumulative_losses[i] + (std::log(std::max(w[i], floor)) + 1.0) / eta;
    w = project_to_simplex(w - step * grad);
  }
  return w;
}

}  // namespace oracle
