#pragma once
#include <vector>

#include "odeinv/tensor.hpp"

namespace odeinv {

enum class OptKind { sgd, adam };

/// First-order optimizer over a fixed ordered set of leaves. Adam keeps
/// per-leaf moment accumulators; the step counter starts at 1 on the first
/// update (bias correction uses it directly).
struct Optimizer {
  OptKind kind = OptKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<Eigen::MatrixXd> m1, m2;

  static Optimizer sgd(double lr) {
    Optimizer o;
    o.kind = OptKind::sgd;
    o.lr = lr;
    return o;
  }
  static Optimizer adam(double lr) {
    Optimizer o;
    o.kind = OptKind::adam;
    o.lr = lr;
    return o;
  }

  void step(const std::vector<Tensor*>& leaves, const std::vector<Tensor>& grads);
};

}  // namespace odeinv
