#pragma once

#include <Eigen/Core>

#include <cmath>

namespace cadkit {

struct AdamOptions {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. The caller supplies the step size of each update, which lets it
/// apply any schedule on top of `options.learning_rate`.
class Adam {
public:
  Adam(Eigen::Index dim, AdamOptions options = {})
      : options_(options), m_(Eigen::VectorXd::Zero(dim)), v_(Eigen::VectorXd::Zero(dim)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double learning_rate) {
    ++t_;
    m_ = options_.beta1 * m_ + (1 - options_.beta1) * grad;
    v_ = options_.beta2 * v_ + (1 - options_.beta2) * grad.cwiseAbs2();
    const double c1 = 1 - std::pow(options_.beta1, t_);
    const double c2 = 1 - std::pow(options_.beta2, t_);
    params.array() -= learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + options_.epsilon);
  }

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) { step(params, grad, options_.learning_rate); }

  int iterations() const { return t_; }

private:
  AdamOptions options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

}  // namespace cadkit
