#pragma once

// Thin RAII layer over FFTW's complex N-d transform.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include "ddeld/errors.hpp"
#include "ddeld/tensor.hpp"

namespace ddeld::fft {

// FFTW's planner is not re-entrant.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

enum class Direction : int { forward = FFTW_FORWARD, backward = FFTW_BACKWARD };

// Unnormalized in-place transform of a row-major complex array.
inline void transform(std::vector<std::complex<double>>& data, const Extents& dims, Direction dir) {
  if (data.size() != checked_product(dims)) throw ShapeMismatchError("fft buffer does not match its extents");
  std::vector<int> n(dims.begin(), dims.end());
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());

  auto destroy = [](fftw_plan p) {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  };
  std::unique_ptr<std::remove_pointer_t<fftw_plan>, decltype(destroy)> plan(nullptr, destroy);
  {
    std::lock_guard lock(planner_mutex());
    plan.reset(fftw_plan_dft(static_cast<int>(n.size()), n.data(), buf, buf, static_cast<int>(dir), FFTW_ESTIMATE));
  }
  if (!plan) throw Error("fftw failed to create a plan");
  fftw_execute(plan.get());
}

// Signed frequency index of bin k in a length-n transform; the Nyquist bin of
// an even length maps to +n/2.
inline double signed_frequency(std::size_t k, std::size_t n) {
  return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

}  // namespace ddeld::fft
