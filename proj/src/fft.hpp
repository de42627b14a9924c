#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace mtt {

// Thin stateful wrapper over Eigen's real FFT (kissfft backend). Forward is
// unscaled, inverse applies 1/n, half-spectrum layout (n/2 + 1 bins). Plans
// are cached inside the Eigen object, so reuse one instance per transform size.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) { impl_.SetFlag(Eigen::FFT<double>::HalfSpectrum); }

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  void forward(const std::vector<double>& time, std::vector<std::complex<double>>& freq) {
    impl_.fwd(freq, time);
  }

  // freq must hold bins() entries with Hermitian-consistent DC/Nyquist
  // (imaginary parts zero); kissfft uses them verbatim.
  void inverse(const std::vector<std::complex<double>>& freq, std::vector<double>& time) {
    impl_.inv(time, freq, n_);
  }

 private:
  int n_;
  Eigen::FFT<double> impl_;
};

}  // namespace mtt
