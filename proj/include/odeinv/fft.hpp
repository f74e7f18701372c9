#pragma once
#include <Eigen/Dense>

#include "odeinv/tensor.hpp"

namespace odeinv {

/// One-sided spectrum of real signals. Column `b*nfreq + k` holds complex
/// coefficient k of sample b; rows are channels, nfreq == floor(n/2)+1.
struct Spectrum {
  Eigen::MatrixXcd m;
  int batch = 1;
  int nfreq = 1;

  static Spectrum zeros(int rows, int batch, int nfreq) {
    Spectrum s;
    s.m = Eigen::MatrixXcd::Zero(rows, static_cast<Eigen::Index>(batch) * nfreq);
    s.batch = batch;
    s.nfreq = nfreq;
    return s;
  }
  auto slab(int b) { return m.middleCols(static_cast<Eigen::Index>(b) * nfreq, nfreq); }
  auto slab(int b) const { return m.middleCols(static_cast<Eigen::Index>(b) * nfreq, nfreq); }
};

/// Unnormalized forward transform along the time axis: X_k = sum_t x_t e^{-2pi i k t / n}.
/// The DC coefficient equals the sum of the inputs.
Spectrum rfft(const Tensor& x);

/// Inverse of rfft with 1/n normalization: irfft(rfft(x), n) == x.
/// `s` must carry floor(n/2)+1 coefficients per signal.
Tensor irfft(const Spectrum& s, int n);

/// Real DFT bases restricted to the lowest `modes` frequencies.
/// fwd (n x 2m): columns [cos(theta_kt) | -sin(theta_kt)] so that
///   signal^T * fwd = [Re X_k | Im X_k].
/// inv (2m x n): rows [(c_k/n) cos | -(c_k/n) sin] with c_k = 1 for DC and
/// Nyquist, 2 otherwise, so that [Re|Im] * inv reconstructs the signal from
/// the kept modes (exactly irfft of the mode-truncated spectrum).
struct SpectralBasis {
  Eigen::MatrixXd fwd;
  Eigen::MatrixXd inv;
  int n = 0;
  int modes = 0;
};

SpectralBasis make_spectral_basis(int n, int modes);

}  // namespace odeinv
