#include "sda/fft.hpp"

#include <fftw3.h>

#include <mutex>

#include "sda/error.hpp"

namespace sda {
namespace {
// FFTW planning is not thread-safe; execution with distinct arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

void fft2(std::vector<std::complex<double>>& data, int ny, int nx, bool inverse) {
  if (data.size() != static_cast<std::size_t>(ny) * nx) throw ShapeError("fft2: size mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(ny, nx, buf, buf, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                            FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw NumericalError("fftw plan creation failed");
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace sda
