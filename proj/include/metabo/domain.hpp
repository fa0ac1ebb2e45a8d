#pragma once

#include <stdexcept>

#include <Eigen/Core>

namespace metabo {

// Finite candidate grid. Acquisition maximization scans these points.
class Domain {
 public:
  explicit Domain(Eigen::MatrixXd points) : points_(std::move(points)) {
    if (points_.rows() == 0) throw std::invalid_argument("Domain: empty candidate grid");
    if (points_.cols() < 1) throw std::invalid_argument("Domain: points must have dimension >= 1");
    for (Eigen::Index i = 0; i < points_.rows(); ++i)
      for (Eigen::Index j = i + 1; j < points_.rows(); ++j)
        if ((points_.row(i) - points_.row(j)).cwiseAbs().maxCoeff() <= 1e-12)
          throw std::invalid_argument("Domain: duplicate candidate points");
  }

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dimension() const { return points_.cols(); }
  Eigen::VectorXd point(Eigen::Index i) const { return points_.row(i).transpose(); }
  const Eigen::MatrixXd& points() const { return points_; }

 private:
  Eigen::MatrixXd points_;
};

}  // namespace metabo
