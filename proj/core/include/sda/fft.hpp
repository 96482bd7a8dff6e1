#pragma once

#include <complex>
#include <vector>

namespace sda {

/// Unnormalized 2-D DFT of a row-major ny x nx complex array (FFTW backed).
/// `inverse` uses the +i exponent; callers divide by ny*nx themselves.
void fft2(std::vector<std::complex<double>>& data, int ny, int nx, bool inverse);

}  // namespace sda
