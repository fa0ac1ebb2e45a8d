#pragma once

#include <stdexcept>

#include <Eigen/Core>

namespace metabo {

// Row-per-point observation storage. The input dimension is fixed by the
// first point appended (or by construction) and enforced afterwards.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd outputs)
      : inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
    if (inputs_.rows() != outputs_.size())
      throw std::invalid_argument("Dataset: inputs/outputs length mismatch");
    if (inputs_.rows() > 0 && inputs_.cols() < 1)
      throw std::invalid_argument("Dataset: input dimension must be >= 1");
  }

  Eigen::Index size() const { return inputs_.rows(); }
  Eigen::Index dimension() const { return inputs_.cols(); }

  void append(const Eigen::VectorXd& x, double y) {
    if (size() == 0) {
      inputs_.resize(1, x.size());
      inputs_.row(0) = x.transpose();
      outputs_.resize(1);
      outputs_[0] = y;
      return;
    }
    if (x.size() != dimension()) throw std::invalid_argument("Dataset: appended point has wrong dimension");
    inputs_.conservativeResize(inputs_.rows() + 1, Eigen::NoChange);
    inputs_.row(inputs_.rows() - 1) = x.transpose();
    outputs_.conservativeResize(outputs_.size() + 1);
    outputs_[outputs_.size() - 1] = y;
  }

  Eigen::VectorXd input(Eigen::Index i) const { return inputs_.row(i).transpose(); }
  double output(Eigen::Index i) const { return outputs_[i]; }

  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& outputs() const { return outputs_; }

 private:
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd outputs_;
};

}  // namespace metabo
