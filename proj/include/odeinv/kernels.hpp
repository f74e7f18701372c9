#pragma once
#include <Eigen/Dense>

#include "odeinv/fft.hpp"
#include "odeinv/tensor.hpp"

namespace odeinv {

/// Running batch-norm statistics for one normalization site, one entry per
/// (channel, time) feature. Normalization is over the batch axis.
struct BnState {
  Eigen::MatrixXd running_mean;  // C x T
  Eigen::MatrixXd running_var;   // C x T

  static BnState make(int channels, int time) {
    BnState st;
    st.running_mean = Eigen::MatrixXd::Zero(channels, time);
    st.running_var = Eigen::MatrixXd::Ones(channels, time);
    return st;
  }
};

/// Forward compute shared by the recorded (tape) path and the plain
/// evaluation path, so the two cannot diverge.
namespace kernels {

/// y = W x + bias, applied over the channel axis for every (batch, time) column.
Tensor channel_linear(const Eigen::MatrixXd& w, const Eigen::MatrixXd& bias, const Tensor& x);

/// Truncated-spectrum convolution: DFT along time, complex channel mixing on
/// the lowest `basis.modes` modes, inverse transform. Content above the kept
/// modes is zeroed by construction. rre/rim hold mode-major blocks, i.e.
/// columns [k*C, (k+1)*C) form the CxC mixing matrix of mode k.
Tensor spectral_conv(const SpectralBasis& basis, const Eigen::MatrixXd& rre,
                     const Eigen::MatrixXd& rim, const Tensor& x,
                     Eigen::MatrixXd* save_spec = nullptr);

Tensor batch_norm_train(const Tensor& x, BnState& st, double eps, double momentum,
                        Eigen::MatrixXd* save_xhat, Eigen::MatrixXd* save_istd);
Tensor batch_norm_eval(const Tensor& x, const BnState& st, double eps);

/// h .* (1 + alpha) + beta with alpha, beta one column per sample, broadcast
/// over time.
Tensor film(const Tensor& h, const Tensor& alpha, const Tensor& beta);

/// Scaled dot-product attention over the time axis within each sample;
/// queries from q, keys/values from k and v. Optionally exposes the
/// row-stochastic attention matrix (T x B*T, block per sample).
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v,
              Eigen::MatrixXd* save_attn = nullptr);

Tensor relu(const Tensor& x);
Tensor mean_pool_time(const Tensor& x);
Tensor concat_rows(const Tensor& a, const Tensor& b);

/// Sum of |pred - target| over the columns selected by time_mask (empty mask
/// means all), divided by denom.
double l1_value(const Tensor& pred, const Eigen::MatrixXd& target,
                const std::vector<uint8_t>& time_mask, double denom);

}  // namespace kernels

}  // namespace odeinv
