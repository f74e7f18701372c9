#pragma once
#include <Eigen/Dense>
#include <string>

#include "odeinv/errors.hpp"

namespace odeinv {

/// Dense real tensor in 64-bit precision.
///
/// Values live in one column-major matrix. Rows index channels (features);
/// columns enumerate samples in batch-major order with `time` steps per
/// sample, so column `b*time + t` holds timestep t of sample b. Plain
/// matrices and vectors use time == 1; scalars are 1x1.
struct Tensor {
  Eigen::MatrixXd m;
  int batch = 1;
  int time = 1;

  Tensor() = default;
  Tensor(Eigen::MatrixXd mat, int batch_, int time_)
      : m(std::move(mat)), batch(batch_), time(time_) {
    if (m.cols() != static_cast<Eigen::Index>(batch) * time)
      throw NumericError("Tensor: cols != batch*time");
  }
  explicit Tensor(Eigen::MatrixXd mat)
      : m(std::move(mat)), batch(static_cast<int>(m.cols())), time(1) {}

  static Tensor zeros(int rows, int batch, int time) {
    return Tensor(Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(batch) * time), batch, time);
  }
  static Tensor zeros_like(const Tensor& t) { return zeros(t.rows(), t.batch, t.time); }
  static Tensor scalar(double v) {
    Tensor t;
    t.m = Eigen::MatrixXd::Constant(1, 1, v);
    return t;
  }

  int rows() const { return static_cast<int>(m.rows()); }
  long size() const { return static_cast<long>(m.size()); }
  bool is_scalar() const { return m.rows() == 1 && m.cols() == 1; }
  double value() const { return m(0, 0); }

  bool same_shape(const Tensor& o) const {
    return m.rows() == o.m.rows() && m.cols() == o.m.cols() && batch == o.batch && time == o.time;
  }
  bool all_finite() const { return m.allFinite(); }

  /// Contiguous (rows x time) block of sample b.
  auto slab(int b) { return m.middleCols(static_cast<Eigen::Index>(b) * time, time); }
  auto slab(int b) const { return m.middleCols(static_cast<Eigen::Index>(b) * time, time); }
};

inline void require_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) throw NumericError(where + ": non-finite values");
}

inline void require_finite(const Eigen::MatrixXd& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError(where + ": non-finite values");
}

}  // namespace odeinv
