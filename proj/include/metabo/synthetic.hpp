#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "metabo/domain.hpp"
#include "metabo/meta.hpp"
#include "metabo/rng.hpp"

namespace metabo {

// Configuration of the synthetic benchmark family: a GP-drawn target on a
// uniform grid plus perturbed-copy meta-tasks.
struct SyntheticSpec {
  int grid_points = 300;
  int dimension = 1;
  double lower = 0.0;
  double upper = 1.0;
  KernelSpec kernel;
  std::vector<int> task_sizes = {20, 20, 20, 20};
  std::vector<double> task_gaps = {0.05, 0.05, 4.0, 4.0};
  std::uint64_t base_seed = 0;

  int num_tasks() const { return static_cast<int>(task_sizes.size()); }

  void validate() const {
    kernel.validate();
    if (grid_points < 2) throw std::invalid_argument("SyntheticSpec: grid_points must be >= 2");
    if (dimension < 1) throw std::invalid_argument("SyntheticSpec: dimension must be >= 1");
    if (!(upper > lower)) throw std::invalid_argument("SyntheticSpec: upper must exceed lower");
    if (std::pow(static_cast<double>(grid_points), dimension) > 2e6)
      throw std::invalid_argument("SyntheticSpec: grid too large to tabulate");
    if (task_sizes.size() != task_gaps.size())
      throw std::invalid_argument("SyntheticSpec: task_sizes/task_gaps length mismatch");
    for (int n : task_sizes)
      if (n < 1) throw std::invalid_argument("SyntheticSpec: task sizes must be >= 1");
    for (double d : task_gaps)
      if (!(d >= 0.0)) throw std::invalid_argument("SyntheticSpec: task gaps must be >= 0");
  }
};

// Uniform tensor grid over [lower, upper]^dimension, grid_points per axis.
inline Eigen::MatrixXd make_grid(const SyntheticSpec& spec) {
  spec.validate();
  Eigen::Index total = 1;
  for (int d = 0; d < spec.dimension; ++d) total *= spec.grid_points;
  Eigen::MatrixXd grid(total, spec.dimension);
  const double step = (spec.upper - spec.lower) / (spec.grid_points - 1);
  for (Eigen::Index row = 0; row < total; ++row) {
    Eigen::Index rest = row;
    for (int d = 0; d < spec.dimension; ++d) {
      grid(row, d) = spec.lower + step * static_cast<double>(rest % spec.grid_points);
      rest /= spec.grid_points;
    }
  }
  return grid;
}

// One exact draw from the GP prior, tabulated over the grid rows.
inline Eigen::VectorXd sample_target_function(const SyntheticSpec& spec,
                                              const Eigen::MatrixXd& grid, std::uint64_t seed) {
  Eigen::MatrixXd K = gram_matrix(spec.kernel, grid);
  K.diagonal().array() += 1e-9;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_target_function: prior covariance factorization failed");
  Rng rng(seed);
  return llt.matrixL() * rng.normal_vector(grid.rows());
}

inline Eigen::VectorXd sample_target_function(const SyntheticSpec& spec, std::uint64_t seed) {
  return sample_target_function(spec, make_grid(spec), seed);
}

struct SyntheticTask {
  MetaTask task;
  // max_j |f_i(x_j) - f(x_j)| over the task's own inputs; bounded by the
  // configured gap magnitude by construction.
  double true_gap = 0.0;
};

// Perturbed copy of the tabulated target: inputs drawn uniformly from the
// grid, one uniform offset in [-gap, gap] per point, Gaussian observation
// noise on top.
inline SyntheticTask make_meta_task(int id, const Eigen::MatrixXd& grid,
                                    const Eigen::VectorXd& f_values, double gap_magnitude,
                                    int size, const KernelSpec& kernel, std::uint64_t seed) {
  if (size < 1) throw std::invalid_argument("make_meta_task: size must be >= 1");
  if (!(gap_magnitude >= 0.0))
    throw std::invalid_argument("make_meta_task: gap magnitude must be >= 0");
  if (grid.rows() != f_values.size())
    throw std::invalid_argument("make_meta_task: grid/f_values length mismatch");

  Rng rng(seed);
  const double noise_std = std::sqrt(kernel.noise_variance);
  Dataset data;
  double true_gap = 0.0;
  for (int j = 0; j < size; ++j) {
    const Eigen::Index idx =
        static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(grid.rows())));
    const double offset = rng.uniform(-gap_magnitude, gap_magnitude);
    true_gap = std::max(true_gap, std::abs(offset));
    const double y = f_values[idx] + offset + noise_std * rng.normal();
    data.append(grid.row(idx).transpose(), y);
  }
  return {MetaTask(id, std::move(data), kernel), true_gap};
}

}  // namespace metabo
