#include "odeinv/fft.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace odeinv {

namespace {

// Shared per-thread FFT engine; plans are cached per length internally.
Eigen::FFT<double>& engine() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

}  // namespace

Spectrum rfft(const Tensor& x) {
  const int n = x.time;
  if (n < 1) throw NumericError("rfft: empty time axis");
  const int nf = n / 2 + 1;
  const int rows = x.rows();
  Spectrum out = Spectrum::zeros(rows, x.batch, nf);

  // The complex transform handles any n; kissfft's real path needs even n.
  std::vector<std::complex<double>> in(n), sp(n);
  for (int b = 0; b < x.batch; ++b) {
    auto xb = x.slab(b);
    auto sb = out.slab(b);
    for (int r = 0; r < rows; ++r) {
      for (int t = 0; t < n; ++t) in[t] = std::complex<double>(xb(r, t), 0.0);
      engine().fwd(sp, in);
      for (int k = 0; k < nf; ++k) sb(r, k) = sp[k];
    }
  }
  return out;
}

Tensor irfft(const Spectrum& s, int n) {
  if (n < 1) throw NumericError("irfft: empty time axis");
  const int nf = n / 2 + 1;
  if (s.nfreq != nf) throw NumericError("irfft: spectrum length does not match n");
  const int rows = static_cast<int>(s.m.rows());
  Tensor out = Tensor::zeros(rows, s.batch, n);

  std::vector<std::complex<double>> sp(n), rec(n);
  for (int b = 0; b < s.batch; ++b) {
    auto sb = s.slab(b);
    auto ob = out.slab(b);
    for (int r = 0; r < rows; ++r) {
      sp[0] = sb(r, 0);
      for (int k = 1; k < nf; ++k) sp[k] = sb(r, k);
      // Hermitian extension of the one-sided spectrum.
      for (int k = nf; k < n; ++k) sp[k] = std::conj(sb(r, n - k));
      engine().inv(rec, sp);
      for (int t = 0; t < n; ++t) ob(r, t) = rec[t].real();
    }
  }
  return out;
}

SpectralBasis make_spectral_basis(int n, int modes) {
  const int nf = n / 2 + 1;
  if (modes < 1 || modes > nf) throw NumericError("spectral basis: modes out of range");
  SpectralBasis basis;
  basis.n = n;
  basis.modes = modes;
  basis.fwd.resize(n, 2 * modes);
  basis.inv.resize(2 * modes, n);
  const double two_pi = 6.283185307179586476925286766559;
  for (int k = 0; k < modes; ++k) {
    const double ck = (k == 0 || 2 * k == n) ? 1.0 : 2.0;
    for (int t = 0; t < n; ++t) {
      const double theta = two_pi * k * t / n;
      basis.fwd(t, k) = std::cos(theta);
      basis.fwd(t, modes + k) = -std::sin(theta);
      basis.inv(k, t) = ck / n * std::cos(theta);
      basis.inv(modes + k, t) = -ck / n * std::sin(theta);
    }
  }
  return basis;
}

}  // namespace odeinv
