#pragma once

// Window-size selection: Courant number, characteristic length, the
// bandwidth bound on the number of cells and the ~10 L_c heuristic.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ddeld/errors.hpp"
#include "ddeld/fft.hpp"
#include "ddeld/generators.hpp"

namespace ddeld {

inline double courant(double c, double dt, double dx) {
  if (!(dx > 0.0)) throw DomainError("courant: dx must be positive");
  return c * dt / dx;
}

enum class Physics { advection, diffusion, burgers };

inline Physics physics_for(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::advection: return Physics::advection;
    case DatasetKind::heat: return Physics::diffusion;
    case DatasetKind::burgers: return Physics::burgers;
    case DatasetKind::external: break;
  }
  throw DomainError("no physics is associated with external datasets");
}

// Distance information travels in one dataset step. For Burgers the
// convective speed comes from the data (`u_max`).
inline double char_length(Physics kind, const GridPde& pde, std::optional<double> u_max = std::nullopt) {
  const double dt = pde.dt;
  if (!(dt > 0.0)) throw DomainError("char_length: dt must be positive");
  const double diffusivity = pde.alpha > 0.0 ? pde.alpha : pde.nu;
  switch (kind) {
    case Physics::advection:
      if (pde.c.empty()) throw DomainError("char_length: advection needs a transport speed");
      return pde.max_speed() * dt;
    case Physics::diffusion:
      return std::sqrt(diffusivity * dt);
    case Physics::burgers:
      if (!u_max) throw DomainError("char_length: burgers needs u_max from data");
      return std::max(std::abs(*u_max) * dt, std::sqrt(pde.nu * dt));
  }
  throw DomainError("char_length: unknown physics");
}

// Minimum cell count that retains the frequency content of a field with
// bandwidth B sampled at N points per unit length: ceil((N + 1) / (2B)).
inline std::size_t min_window_theorem2(std::size_t points_per_unit, double bandwidth) {
  if (!(bandwidth > 0.0)) throw DomainError("bandwidth must be positive");
  if (points_per_unit < 1) throw DomainError("need at least one point per unit length");
  const double v = std::ceil((static_cast<double>(points_per_unit) + 1.0) / (2.0 * bandwidth) - 1e-12);
  return static_cast<std::size_t>(std::max(1.0, v));
}

// Smallest B (cycles per unit length) such that the DFT bins with |f| <= B
// carry at least `energy_fraction` of the spectral energy.
inline double bandwidth_estimate(std::span<const double> signal, double dx, double energy_fraction = 0.99) {
  if (signal.size() < 4) throw DomainError("bandwidth_estimate needs at least 4 samples");
  if (!(dx > 0.0)) throw DomainError("bandwidth_estimate: dx must be positive");
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0)) throw DomainError("energy_fraction must be in (0, 1]");
  if (std::all_of(signal.begin(), signal.end(), [](double v) { return v == 0.0; })) {
    throw DegenerateSignal("bandwidth of an all-zero signal is undefined");
  }
  const std::size_t n = signal.size();
  std::vector<std::complex<double>> buf(signal.begin(), signal.end());
  fft::transform(buf, {n}, fft::Direction::forward);

  // Energy per non-negative frequency, folding in the mirrored negative bin.
  std::vector<double> energy(n / 2 + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = std::abs(fft::signed_frequency(k, n));
    energy[static_cast<std::size_t>(f)] += std::norm(buf[k]);
  }
  double total = 0.0;
  for (double e : energy) total += e;
  const double target = energy_fraction * total * (1.0 - 1e-12);
  double acc = 0.0;
  for (std::size_t k = 0; k < energy.size(); ++k) {
    acc += energy[k];
    if (acc >= target) return static_cast<double>(k) / (static_cast<double>(n) * dx);
  }
  return static_cast<double>(n / 2) / (static_cast<double>(n) * dx);
}

struct SizingReport {
  double l_c = 0.0;
  double courant = 0.0;
  std::optional<double> bandwidth;
  std::size_t min_window_cells = 1;
  std::size_t recommended_cells = 3;
  std::string rationale;
};

struct ProbeSignal {
  std::vector<double> samples;
  double dx = 1.0;
  double energy_fraction = 0.99;
};

inline std::size_t points_per_unit(double dx) {
  return static_cast<std::size_t>(std::max(1.0, std::round(1.0 / dx)));
}

inline std::size_t round_up_odd(std::size_t v) { return v % 2 == 1 ? v : v + 1; }

// Advisory window size: the larger of the 10 L_c heuristic and, when a probe
// signal is given, the bandwidth bound; rounded up to an odd count >= 3.
inline SizingReport recommend_window(const GridPde& pde, std::optional<Physics> kind,
                                     const std::optional<ProbeSignal>& probe = std::nullopt,
                                     std::optional<double> u_max = std::nullopt) {
  SizingReport rep;
  std::ostringstream why;
  bool have_lc = false;
  if (kind) {
    try {
      rep.l_c = char_length(*kind, pde, u_max);
      have_lc = true;
    } catch (const DomainError& e) {
      if (!probe) throw;
      why << "no characteristic length (" << e.what() << "); ";
    }
  }
  if (!have_lc && !probe) throw DomainError("recommend_window needs PDE coefficients or a probe signal");
  if (!(pde.dx > 0.0)) throw DomainError("recommend_window: dx must be positive");

  if (kind == Physics::advection) {
    rep.courant = courant(pde.max_speed(), pde.dt, pde.dx);
  } else if (kind == Physics::burgers && u_max) {
    rep.courant = courant(std::abs(*u_max), pde.dt, pde.dx);
  }

  const double ratio = rep.l_c / pde.dx;
  std::size_t target = std::max<std::size_t>(3, static_cast<std::size_t>(std::llround(10.0 * ratio)));
  if (have_lc) why << "10*L_c/dx = " << 10.0 * ratio;

  if (probe) {
    rep.bandwidth = bandwidth_estimate(probe->samples, probe->dx, probe->energy_fraction);
    rep.min_window_cells = min_window_theorem2(points_per_unit(probe->dx), *rep.bandwidth);
    why << (have_lc ? "; " : "") << "bandwidth " << *rep.bandwidth << " -> at least " << rep.min_window_cells
        << " cells";
    target = std::max(target, rep.min_window_cells);
  }
  rep.recommended_cells = round_up_odd(target);
  why << "; recommended " << rep.recommended_cells << " (odd, >= 3)";
  rep.rationale = why.str();
  return rep;
}

inline std::string to_key_value(const SizingReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "l_c=" << r.l_c << "\n";
  os << "courant=" << r.courant << "\n";
  os << "bandwidth=";
  if (r.bandwidth) {
    os << *r.bandwidth;
  } else {
    os << "none";
  }
  os << "\n";
  os << "min_window_cells=" << r.min_window_cells << "\n";
  os << "recommended_cells=" << r.recommended_cells << "\n";
  os << "rationale=" << r.rationale << "\n";
  return os.str();
}

}  // namespace ddeld
