#include "odeinv/kernels.hpp"

namespace odeinv {
namespace kernels {

namespace {

using StridedMap = Eigen::Map<Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;

// Columns {b*stride + col0 : b in [0,B)} of a (rows x B*stride) matrix.
StridedMap strided_cols(Eigen::MatrixXd& m, int rows, int count, int stride, int col0) {
  return StridedMap(m.data() + static_cast<long>(col0) * rows, rows, count,
                    Eigen::OuterStride<>(static_cast<long>(stride) * rows));
}
ConstStridedMap strided_cols(const Eigen::MatrixXd& m, int rows, int count, int stride, int col0) {
  return ConstStridedMap(m.data() + static_cast<long>(col0) * rows, rows, count,
                         Eigen::OuterStride<>(static_cast<long>(stride) * rows));
}

}  // namespace

Tensor channel_linear(const Eigen::MatrixXd& w, const Eigen::MatrixXd& bias, const Tensor& x) {
  if (w.cols() != x.m.rows()) throw NumericError("channel_linear: weight/input mismatch");
  if (bias.rows() != w.rows() || bias.cols() != 1)
    throw NumericError("channel_linear: bias shape");
  Tensor out;
  out.batch = x.batch;
  out.time = x.time;
  out.m.noalias() = w * x.m;
  out.m.colwise() += bias.col(0);
  return out;
}

Tensor spectral_conv(const SpectralBasis& basis, const Eigen::MatrixXd& rre,
                     const Eigen::MatrixXd& rim, const Tensor& x, Eigen::MatrixXd* save_spec) {
  const int c = x.rows();
  const int b = x.batch;
  const int m = basis.modes;
  if (x.time != basis.n) throw NumericError("spectral_conv: basis length mismatch");
  if (rre.rows() != c || rre.cols() != static_cast<long>(c) * m || !rim.rows() ||
      rim.rows() != rre.rows() || rim.cols() != rre.cols())
    throw NumericError("spectral_conv: weight shape");

  // Per-sample spectra, layout (C x B*2m) with [Re | Im] blocks per sample.
  Eigen::MatrixXd spec(c, static_cast<long>(b) * 2 * m);
  for (int i = 0; i < b; ++i)
    spec.middleCols(static_cast<long>(i) * 2 * m, 2 * m).noalias() = x.slab(i) * basis.fwd;

  Eigen::MatrixXd mixed(c, static_cast<long>(b) * 2 * m);
  for (int k = 0; k < m; ++k) {
    auto rre_k = rre.middleCols(static_cast<long>(k) * c, c);
    auto rim_k = rim.middleCols(static_cast<long>(k) * c, c);
    auto xre = strided_cols(spec, c, b, 2 * m, k);
    auto xim = strided_cols(spec, c, b, 2 * m, m + k);
    auto yre = strided_cols(mixed, c, b, 2 * m, k);
    auto yim = strided_cols(mixed, c, b, 2 * m, m + k);
    yre.noalias() = rre_k * xre;
    yre.noalias() -= rim_k * xim;
    yim.noalias() = rre_k * xim;
    yim.noalias() += rim_k * xre;
  }

  Tensor out = Tensor::zeros(c, b, basis.n);
  for (int i = 0; i < b; ++i)
    out.slab(i).noalias() = mixed.middleCols(static_cast<long>(i) * 2 * m, 2 * m) * basis.inv;

  if (save_spec) *save_spec = std::move(spec);
  return out;
}

Tensor batch_norm_train(const Tensor& x, BnState& st, double eps, double momentum,
                        Eigen::MatrixXd* save_xhat, Eigen::MatrixXd* save_istd) {
  const int b = x.batch;
  const int c = x.rows();
  const int t = x.time;
  if (st.running_mean.rows() != c || st.running_mean.cols() != t)
    throw NumericError("batch_norm: state shape mismatch");

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(c, t);
  for (int i = 0; i < b; ++i) mean += x.slab(i);
  mean /= b;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(c, t);
  for (int i = 0; i < b; ++i) var += (x.slab(i) - mean).array().square().matrix();
  var /= b;

  st.running_mean = (1.0 - momentum) * st.running_mean + momentum * mean;
  st.running_var = (1.0 - momentum) * st.running_var + momentum * var;

  Eigen::MatrixXd istd = (var.array() + eps).rsqrt();
  Tensor out = Tensor::zeros(c, b, t);
  for (int i = 0; i < b; ++i)
    out.slab(i) = ((x.slab(i) - mean).array() * istd.array()).matrix();

  if (save_xhat) *save_xhat = out.m;
  if (save_istd) *save_istd = std::move(istd);
  return out;
}

Tensor batch_norm_eval(const Tensor& x, const BnState& st, double eps) {
  const int c = x.rows();
  const int t = x.time;
  if (st.running_mean.rows() != c || st.running_mean.cols() != t)
    throw NumericError("batch_norm: state shape mismatch");
  Eigen::ArrayXXd istd = (st.running_var.array() + eps).rsqrt();
  Tensor out = Tensor::zeros(c, x.batch, t);
  for (int i = 0; i < x.batch; ++i)
    out.slab(i) = ((x.slab(i) - st.running_mean).array() * istd).matrix();
  return out;
}

Tensor film(const Tensor& h, const Tensor& alpha, const Tensor& beta) {
  if (alpha.rows() != h.rows() || alpha.batch != h.batch || alpha.time != 1 ||
      !alpha.same_shape(beta))
    throw NumericError("film: conditioning shape mismatch");
  Tensor out = Tensor::zeros(h.rows(), h.batch, h.time);
  for (int i = 0; i < h.batch; ++i) {
    out.slab(i) = (h.slab(i).array().colwise() * (1.0 + alpha.m.col(i).array())).colwise() +
                  beta.m.col(i).array();
  }
  return out;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, Eigen::MatrixXd* save_attn) {
  if (!q.same_shape(k) || !q.same_shape(v)) throw NumericError("attend: shape mismatch");
  const int d = q.rows();
  const int b = q.batch;
  const int t = q.time;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Eigen::MatrixXd attn(t, static_cast<long>(b) * t);  // block per sample, rows = queries
  Tensor out = Tensor::zeros(d, b, t);
  for (int i = 0; i < b; ++i) {
    auto a = attn.middleCols(static_cast<long>(i) * t, t);
    a.noalias() = q.slab(i).transpose() * k.slab(i);
    a *= scale;
    for (int r = 0; r < t; ++r) {
      auto row = a.row(r).array();
      row -= row.maxCoeff();
      row = row.exp();
      row /= row.sum();
    }
    out.slab(i).noalias() = v.slab(i) * a.transpose();
  }
  if (save_attn) *save_attn = std::move(attn);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  out.m = out.m.cwiseMax(0.0);
  return out;
}

Tensor mean_pool_time(const Tensor& x) {
  Tensor out = Tensor::zeros(x.rows(), x.batch, 1);
  for (int i = 0; i < x.batch; ++i) out.m.col(i) = x.slab(i).rowwise().mean();
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.batch != b.batch || a.time != b.time) throw NumericError("concat_rows: layout mismatch");
  Tensor out = Tensor::zeros(a.rows() + b.rows(), a.batch, a.time);
  out.m.topRows(a.rows()) = a.m;
  out.m.bottomRows(b.rows()) = b.m;
  return out;
}

double l1_value(const Tensor& pred, const Eigen::MatrixXd& target,
                const std::vector<uint8_t>& time_mask, double denom) {
  if (pred.m.rows() != target.rows() || pred.m.cols() != target.cols())
    throw NumericError("l1: shape mismatch");
  double acc = 0.0;
  if (time_mask.empty()) {
    acc = (pred.m - target).cwiseAbs().sum();
  } else {
    for (int b = 0; b < pred.batch; ++b) {
      auto diff = pred.slab(b) - target.middleCols(static_cast<long>(b) * pred.time, pred.time);
      for (int t = 0; t < pred.time; ++t)
        if (time_mask[t]) acc += diff.col(t).cwiseAbs().sum();
    }
  }
  return acc / denom;
}

}  // namespace kernels
}  // namespace odeinv
