#pragma once

#include <cmath>
#include <span>

#include <Eigen/Dense>

namespace icg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates for one parameter tensor.
struct AdamMoments {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;

  void ensure(Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() != rows || m.cols() != cols) {
      m = Eigen::MatrixXd::Zero(rows, cols);
      v = Eigen::MatrixXd::Zero(rows, cols);
    }
  }
};

/// Adam with bias correction. Call begin_step() once per iteration, then
/// update() for every parameter tensor.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void begin_step() {
    ++t_;
    c1_ = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    c2_ = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  }

  template <typename Param, typename Grad>
  void update(Eigen::MatrixBase<Param>& param, const Eigen::MatrixBase<Grad>& grad,
              AdamMoments& moments) const {
    moments.ensure(param.rows(), param.cols());
    for (Eigen::Index j = 0; j < param.cols(); ++j) {
      for (Eigen::Index i = 0; i < param.rows(); ++i) {
        step_entry(param(i, j), grad(i, j), moments.m(i, j), moments.v(i, j));
      }
    }
  }

  /// Updates only the listed rows; other rows and their moments stay put.
  template <typename Param, typename Grad>
  void update_rows(Eigen::MatrixBase<Param>& param, const Eigen::MatrixBase<Grad>& grad,
                   AdamMoments& moments, std::span<const Eigen::Index> rows) const {
    moments.ensure(param.rows(), param.cols());
    for (Eigen::Index i : rows) {
      for (Eigen::Index j = 0; j < param.cols(); ++j) {
        step_entry(param(i, j), grad(i, j), moments.m(i, j), moments.v(i, j));
      }
    }
  }

  long step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  void step_entry(double& p, double g, double& m, double& v) const {
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
    p -= config_.lr * (m / c1_) / (std::sqrt(v / c2_) + config_.eps);
  }

  AdamConfig config_;
  long t_ = 0;
  double c1_ = 1.0;
  double c2_ = 1.0;
};

}  // namespace icg
