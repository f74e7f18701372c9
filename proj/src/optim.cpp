#include "odeinv/optim.hpp"

#include <cmath>

namespace odeinv {

void Optimizer::step(const std::vector<Tensor*>& leaves, const std::vector<Tensor>& grads) {
  if (leaves.size() != grads.size()) throw NumericError("optimizer_step: leaf/grad count mismatch");
  for (size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i]->m.rows() != grads[i].m.rows() || leaves[i]->m.cols() != grads[i].m.cols())
      throw NumericError("optimizer_step: gradient shape mismatch");
  }
  if (kind == OptKind::sgd) {
    ++step_count;
    for (size_t i = 0; i < leaves.size(); ++i) leaves[i]->m -= lr * grads[i].m;
    return;
  }
  if (m1.empty()) {
    m1.resize(leaves.size());
    m2.resize(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
      m1[i].setZero(leaves[i]->m.rows(), leaves[i]->m.cols());
      m2[i].setZero(leaves[i]->m.rows(), leaves[i]->m.cols());
    }
  }
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t i = 0; i < leaves.size(); ++i) {
    m1[i] = beta1 * m1[i] + (1.0 - beta1) * grads[i].m;
    m2[i] = beta2 * m2[i] + (1.0 - beta2) * grads[i].m.cwiseProduct(grads[i].m);
    leaves[i]->m.array() -=
        lr * (m1[i].array() / bc1) / ((m2[i].array() / bc2).sqrt() + eps);
  }
}

}  // namespace odeinv
