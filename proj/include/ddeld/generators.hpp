#pragma once

// Synthetic datasets: exact periodic transport, finite-difference viscous
// Burgers and constant-coefficient heat diffusion.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ddeld/errors.hpp"
#include "ddeld/fft.hpp"
#include "ddeld/tensor.hpp"

namespace ddeld {

enum class Boundary : std::uint8_t { periodic, zero_extension, insulated };

inline std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::periodic: return "periodic";
    case Boundary::zero_extension: return "zero-extension";
    case Boundary::insulated: return "insulated";
  }
  return "?";
}

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "zero-extension" || s == "zero_extension") return Boundary::zero_extension;
  if (s == "insulated") return Boundary::insulated;
  throw DomainError("unknown boundary '" + s + "'");
}

enum class DatasetKind : std::uint8_t { advection = 0, burgers = 1, heat = 2, external = 3 };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::advection: return "advection";
    case DatasetKind::burgers: return "burgers";
    case DatasetKind::heat: return "heat";
    case DatasetKind::external: return "external";
  }
  return "?";
}

inline DatasetKind kind_from_string(const std::string& s) {
  if (s == "advection") return DatasetKind::advection;
  if (s == "burgers") return DatasetKind::burgers;
  if (s == "heat") return DatasetKind::heat;
  if (s == "external") return DatasetKind::external;
  throw DomainError("unknown dataset kind '" + s + "'");
}

struct GridPde {
  double dx = 1.0;        // element length
  double dt = 1.0;        // dataset timestep
  std::vector<double> c;  // transport speed per spatial dim
  double nu = 0.0;        // viscosity
  double alpha = 0.0;     // diffusivity
  Boundary boundary = Boundary::periodic;

  void validate() const {
    if (!(dx > 0.0) || !(dt > 0.0)) throw DomainError("dx and dt must be positive");
    if (!(nu >= 0.0) || !(alpha >= 0.0)) throw DomainError("nu and alpha must be non-negative");
    for (double ci : c) {
      if (!std::isfinite(ci)) throw DomainError("transport speed must be finite");
    }
  }

  double max_speed() const {
    double m = 0.0;
    for (double ci : c) m = std::max(m, std::abs(ci));
    return m;
  }

  friend bool operator==(const GridPde&, const GridPde&) = default;
};

// Seeded generator with portable uniform/normal draws (the std
// distributions are implementation-defined).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  std::uint64_t next() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

inline double cell_center(std::size_t i, double dx) { return (static_cast<double>(i) + 0.5) * dx; }

// sin(2 pi f sum_i x_i) at cell centers; a diagonal plane wave for d >= 2.
inline BatchTensor sin_field(double freq, const Shape& grid, double dx) {
  if (!(freq > 0.0)) throw DomainError("frequency must be positive");
  BatchTensor out(grid);
  const std::size_t nc = grid.channels();
  std::size_t flat = 0;
  for (std::size_t b = 0; b < grid.batch(); ++b) {
    detail::for_each_index(grid.spatial(), [&](const Extents& x) {
      double s = 0.0;
      for (std::size_t xi : x) s += cell_center(xi, dx);
      const double v = std::sin(2.0 * std::numbers::pi * freq * s);
      for (std::size_t c = 0; c < nc; ++c) out.data()[flat++] = v;
    });
  }
  return out;
}

struct BumpSpec {
  std::size_t count = 3;
  double amp_min = 0.5;
  double amp_max = 1.5;
  // Widths as fractions of the shortest domain side.
  double width_min = 0.05;
  double width_max = 0.15;
};

struct Bump {
  std::vector<double> center;
  double width;
  double amplitude;
};

// Bump parameters for every (batch, channel) pair, in that order.
inline std::vector<std::vector<Bump>> sample_bumps(std::uint64_t seed, const Shape& grid, double dx,
                                                   const BumpSpec& spec) {
  if (spec.count == 0) throw DomainError("need at least one bump");
  Rng rng(seed);
  double shortest = 0.0;
  for (std::size_t i = 0; i < grid.rank(); ++i) {
    const double len = static_cast<double>(grid.spatial(i)) * dx;
    shortest = i == 0 ? len : std::min(shortest, len);
  }
  std::vector<std::vector<Bump>> out(grid.batch() * grid.channels());
  for (auto& set : out) {
    for (std::size_t k = 0; k < spec.count; ++k) {
      Bump bump;
      for (std::size_t i = 0; i < grid.rank(); ++i) {
        bump.center.push_back(rng.uniform(0.0, static_cast<double>(grid.spatial(i)) * dx));
      }
      bump.width = rng.uniform(spec.width_min, spec.width_max) * shortest;
      bump.amplitude = rng.uniform(spec.amp_min, spec.amp_max);
      set.push_back(std::move(bump));
    }
  }
  return out;
}

// Sum of Gaussian bumps with periodic (minimum image) distance, so the field
// is continuous across the domain seam.
inline BatchTensor gaussian_bump_field(std::uint64_t seed, const Shape& grid, double dx, const BumpSpec& spec) {
  const auto bumps = sample_bumps(seed, grid, dx, spec);
  BatchTensor out(grid);
  const std::size_t nc = grid.channels();
  for (std::size_t b = 0; b < grid.batch(); ++b) {
    detail::for_each_index(grid.spatial(), [&](const Extents& x) {
      for (std::size_t c = 0; c < nc; ++c) {
        double v = 0.0;
        for (const Bump& bump : bumps[b * nc + c]) {
          double r2 = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i) {
            const double len = static_cast<double>(grid.spatial(i)) * dx;
            double dist = std::abs(cell_center(x[i], dx) - bump.center[i]);
            dist = std::min(dist, len - dist);
            r2 += dist * dist;
          }
          v += bump.amplitude * std::exp(-r2 / (2.0 * bump.width * bump.width));
        }
        out.at(b, x, c) = v;
      }
    });
  }
  return out;
}

inline BatchTensor gaussian_bump_field(std::uint64_t seed, const Shape& grid, double dx, std::size_t n_bumps) {
  BumpSpec spec;
  spec.count = n_bumps;
  return gaussian_bump_field(seed, grid, dx, spec);
}

// Random periodic field whose spectrum is supported in [-bandwidth, bandwidth]
// cycles per unit length. In 1D every admissible mode is present with a
// normal amplitude and uniform phase; in higher dimensions `modes` random
// admissible wave vectors are drawn.
inline BatchTensor bandlimited_field(std::uint64_t seed, const Shape& grid, double dx, double bandwidth,
                                     std::size_t modes = 16) {
  if (!(bandwidth > 0.0)) throw DomainError("bandwidth must be positive");
  Rng rng(seed);
  const std::size_t d = grid.rank();
  std::vector<double> len(d);
  std::vector<long> kmax(d);
  for (std::size_t i = 0; i < d; ++i) {
    len[i] = static_cast<double>(grid.spatial(i)) * dx;
    kmax[i] = static_cast<long>(std::floor(bandwidth * len[i] + 1e-9));
    kmax[i] = std::min<long>(kmax[i], static_cast<long>(grid.spatial(i) - 1) / 2);
  }
  if (std::all_of(kmax.begin(), kmax.end(), [](long k) { return k == 0; })) {
    throw DomainError("bandwidth admits no nonzero mode on this grid");
  }

  struct Mode {
    std::vector<long> k;
    double amp;
    double phase;
  };
  BatchTensor out(grid);
  const std::size_t nc = grid.channels();
  for (std::size_t b = 0; b < grid.batch(); ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      std::vector<Mode> set;
      if (d == 1) {
        for (long k = 1; k <= kmax[0]; ++k) set.push_back({{k}, rng.normal(), rng.uniform(0.0, 2.0 * std::numbers::pi)});
      } else {
        while (set.size() < modes) {
          std::vector<long> k(d);
          bool nonzero = false;
          for (std::size_t i = 0; i < d; ++i) {
            k[i] = static_cast<long>(rng.index(static_cast<std::size_t>(2 * kmax[i] + 1))) - kmax[i];
            nonzero = nonzero || k[i] != 0;
          }
          if (!nonzero) continue;
          set.push_back({k, rng.normal(), rng.uniform(0.0, 2.0 * std::numbers::pi)});
        }
      }
      detail::for_each_index(grid.spatial(), [&](const Extents& x) {
        double v = 0.0;
        for (const Mode& m : set) {
          double arg = m.phase;
          for (std::size_t i = 0; i < d; ++i) {
            arg += 2.0 * std::numbers::pi * static_cast<double>(m.k[i]) * cell_center(x[i], dx) / len[i];
          }
          v += m.amp * std::sin(arg);
        }
        out.at(b, x, c) = v;
      });
    }
  }
  return out;
}

namespace detail {

// Rolls every (batch, channel) slice by an integer number of cells per dim
// (periodic), moving data in the +shift direction.
inline BatchTensor roll(const BatchTensor& u, const std::vector<long>& shift) {
  const Shape& s = u.shape();
  BatchTensor out(s);
  Extents dst(s.rank());
  for (std::size_t b = 0; b < s.batch(); ++b) {
    for_each_index(s.spatial(), [&](const Extents& x) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const long n = static_cast<long>(s.spatial(i));
        dst[i] = static_cast<std::size_t>(((static_cast<long>(x[i]) + shift[i]) % n + n) % n);
      }
      for (std::size_t c = 0; c < s.channels(); ++c) out.at(b, dst, c) = u.at(b, x, c);
    });
  }
  return out;
}

}  // namespace detail

// u0(x - c t) on a periodic domain. Whole-cell shifts are applied as exact
// rolls; anything else uses Fourier (band-limited) interpolation.
inline BatchTensor advect_exact(const BatchTensor& u0, const GridPde& pde, double t) {
  if (pde.boundary != Boundary::periodic) {
    throw UnsupportedBoundary("exact transport needs a periodic boundary, got " + to_string(pde.boundary));
  }
  pde.validate();
  const Shape& s = u0.shape();
  const std::size_t d = s.rank();
  if (pde.c.size() != d) throw RankError("transport speed needs one component per spatial dim");

  std::vector<double> cells(d);
  bool whole = true;
  bool zero = true;
  std::vector<long> roll_by(d);
  for (std::size_t i = 0; i < d; ++i) {
    cells[i] = pde.c[i] * t / pde.dx;
    const double nearest = std::round(cells[i]);
    whole = whole && std::abs(cells[i] - nearest) <= 1e-12 * std::max(1.0, std::abs(cells[i]));
    const long n = static_cast<long>(s.spatial(i));
    roll_by[i] = static_cast<long>(std::fmod(nearest, static_cast<double>(n)));
    zero = zero && roll_by[i] == 0;
  }
  if (whole) return zero ? u0 : detail::roll(u0, roll_by);

  const Extents& ext = s.spatial();
  const std::size_t cells_per_slice = s.cells();
  std::vector<std::complex<double>> phase(cells_per_slice);
  {
    std::size_t flat = 0;
    detail::for_each_index(ext, [&](const Extents& k) {
      double arg = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        arg += fft::signed_frequency(k[i], ext[i]) * cells[i] / static_cast<double>(ext[i]);
      }
      phase[flat++] = std::polar(1.0 / static_cast<double>(cells_per_slice), -2.0 * std::numbers::pi * arg);
    });
  }

  BatchTensor out(s);
  std::vector<std::complex<double>> buf(cells_per_slice);
  const std::size_t nc = s.channels();
  for (std::size_t b = 0; b < s.batch(); ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t base = b * cells_per_slice * nc + c;
      for (std::size_t j = 0; j < cells_per_slice; ++j) buf[j] = u0.data()[base + j * nc];
      fft::transform(buf, ext, fft::Direction::forward);
      for (std::size_t j = 0; j < cells_per_slice; ++j) buf[j] *= phase[j];
      fft::transform(buf, ext, fft::Direction::backward);
      for (std::size_t j = 0; j < cells_per_slice; ++j) out.data()[base + j * nc] = buf[j].real();
    }
  }
  return out;
}

namespace detail {

// Value one cell away along `axis` (step -1 or +1). Outside the domain the
// boundary decides: wrap, mirror the cell itself (zero flux) or 0.
inline double neighbour(const BatchTensor& u, std::size_t b, Extents& x, std::size_t c, std::size_t axis, int step,
                        Boundary boundary) {
  const std::size_t n = u.shape().spatial(axis);
  const std::size_t orig = x[axis];
  double v;
  if (step < 0 && orig == 0) {
    if (boundary == Boundary::periodic) {
      x[axis] = n - 1;
      v = u.at(b, x, c);
    } else {
      v = boundary == Boundary::insulated ? u.at(b, x, c) : 0.0;
    }
  } else if (step > 0 && orig + 1 == n) {
    if (boundary == Boundary::periodic) {
      x[axis] = 0;
      v = u.at(b, x, c);
    } else {
      v = boundary == Boundary::insulated ? u.at(b, x, c) : 0.0;
    }
  } else {
    x[axis] = step < 0 ? orig - 1 : orig + 1;
    v = u.at(b, x, c);
  }
  x[axis] = orig;
  return v;
}

inline std::size_t substeps_for(double ratio, const char* what) {
  if (!std::isfinite(ratio)) throw StabilityError(std::string(what) + ": non-finite stability number");
  const double n = std::max(1.0, std::ceil(ratio - 1e-12));
  if (n > 1e7) throw StabilityError(std::string(what) + ": stable substep would underflow (" + std::to_string(n) + " substeps)");
  return static_cast<std::size_t>(n);
}

}  // namespace detail

// One dataset step of 2D viscous Burgers for a 2-channel velocity field:
// first-order upwind convection plus central-difference diffusion, periodic,
// sub-stepped so that (|u|+|v|) dt_sub/dx <= 0.5 and nu dt_sub/dx^2 <= 0.125.
// Together the two bounds keep every update a convex combination.
inline BatchTensor burgers_step(const BatchTensor& u, const GridPde& pde) {
  pde.validate();
  const Shape& s = u.shape();
  if (s.rank() != 2 || s.channels() != 2) throw RankError("burgers_step needs a 2-channel 2D field, got " + s.str());
  if (pde.boundary != Boundary::periodic) throw UnsupportedBoundary("burgers_step supports periodic boundaries only");

  // Each component obeys a discrete maximum principle under the convex
  // update, so max|u| + max|v| bounds the speed for every substep.
  double umax = 0.0, vmax = 0.0;
  for (std::size_t j = 0; j < u.size(); j += 2) {
    umax = std::max(umax, std::abs(u.data()[j]));
    vmax = std::max(vmax, std::abs(u.data()[j + 1]));
  }
  const double speed = umax + vmax;
  const double conv = speed * pde.dt / pde.dx / 0.5;
  const double diff = pde.nu * pde.dt / (pde.dx * pde.dx) / 0.125;
  const std::size_t n = std::max(detail::substeps_for(conv, "burgers convection"),
                                 detail::substeps_for(diff, "burgers diffusion"));
  const double h = pde.dt / static_cast<double>(n);
  if (!(h > 0.0)) throw StabilityError("burgers substep underflow");
  const double a = h / pde.dx;
  const double r = pde.nu * h / (pde.dx * pde.dx);

  BatchTensor cur = u;
  BatchTensor next(s);
  for (std::size_t step = 0; step < n; ++step) {
    for (std::size_t b = 0; b < s.batch(); ++b) {
      detail::for_each_index(s.spatial(), [&](const Extents& xc) {
        Extents x = xc;
        const double vel[2] = {cur.at(b, x, 0), cur.at(b, x, 1)};
        for (std::size_t c = 0; c < 2; ++c) {
          const double here = cur.at(b, x, c);
          double update = 0.0;
          for (std::size_t axis = 0; axis < 2; ++axis) {
            const double lo = detail::neighbour(cur, b, x, c, axis, -1, Boundary::periodic);
            const double hi = detail::neighbour(cur, b, x, c, axis, +1, Boundary::periodic);
            const double grad = vel[axis] > 0.0 ? here - lo : hi - here;
            update += -a * vel[axis] * grad + r * (hi - 2.0 * here + lo);
          }
          next.at(b, x, c) = here + update;
        }
      });
    }
    std::swap(cur, next);
  }
  return cur;
}

// One dataset step of explicit central-difference diffusion for a scalar
// field, sub-stepped so alpha dt_sub/dx^2 <= 1/(2d).
inline BatchTensor heat_step(const BatchTensor& temperature, const GridPde& pde) {
  pde.validate();
  const Shape& s = temperature.shape();
  if (s.channels() != 1) throw RankError("heat_step needs a scalar field, got " + s.str());
  const std::size_t d = s.rank();
  const double limit = 1.0 / (2.0 * static_cast<double>(d));
  const std::size_t n = detail::substeps_for(pde.alpha * pde.dt / (pde.dx * pde.dx) / limit, "heat diffusion");
  const double h = pde.dt / static_cast<double>(n);
  if (!(h > 0.0)) throw StabilityError("heat substep underflow");
  const double r = pde.alpha * h / (pde.dx * pde.dx);
  if (r == 0.0) return temperature;

  BatchTensor cur = temperature;
  BatchTensor next(s);
  for (std::size_t step = 0; step < n; ++step) {
    for (std::size_t b = 0; b < s.batch(); ++b) {
      detail::for_each_index(s.spatial(), [&](const Extents& xc) {
        Extents x = xc;
        const double here = cur.at(b, x, 0);
        double lap = 0.0;
        for (std::size_t axis = 0; axis < d; ++axis) {
          lap += detail::neighbour(cur, b, x, 0, axis, -1, pde.boundary) - 2.0 * here +
                 detail::neighbour(cur, b, x, 0, axis, +1, pde.boundary);
        }
        next.at(b, x, 0) = here + r * lap;
      });
    }
    std::swap(cur, next);
  }
  return cur;
}

struct IcSpec {
  enum class Type { sine, bumps, bandlimited, constant };
  Type type = Type::sine;
  double freq = 1.0;  // sine frequency, or bandwidth for bandlimited
  BumpSpec bumps;
  std::size_t modes = 16;
  double value = 0.0;  // constant fields
};

inline std::string to_string(IcSpec::Type t) {
  switch (t) {
    case IcSpec::Type::sine: return "sine";
    case IcSpec::Type::bumps: return "bumps";
    case IcSpec::Type::bandlimited: return "bandlimited";
    case IcSpec::Type::constant: return "constant";
  }
  return "?";
}

inline IcSpec::Type ic_type_from_string(const std::string& s) {
  if (s == "sine") return IcSpec::Type::sine;
  if (s == "bumps") return IcSpec::Type::bumps;
  if (s == "bandlimited") return IcSpec::Type::bandlimited;
  if (s == "constant") return IcSpec::Type::constant;
  throw DomainError("unknown initial condition '" + s + "'");
}

inline BatchTensor initial_condition(const IcSpec& ic, const Shape& grid, double dx, std::uint64_t seed) {
  switch (ic.type) {
    case IcSpec::Type::sine: return sin_field(ic.freq, grid, dx);
    case IcSpec::Type::bumps: return gaussian_bump_field(seed, grid, dx, ic.bumps);
    case IcSpec::Type::bandlimited: return bandlimited_field(seed, grid, dx, ic.freq, ic.modes);
    case IcSpec::Type::constant: return BatchTensor(grid, std::vector<double>(grid.total(), ic.value));
  }
  throw DomainError("unknown initial condition");
}

struct Dataset {
  DatasetKind kind = DatasetKind::external;
  std::vector<BatchTensor> frames;  // u^0 .. u^T
  GridPde pde;
  std::optional<BatchTensor> coeff_field;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> meta;

  std::size_t steps() const { return frames.empty() ? 0 : frames.size() - 1; }
  const Shape& shape() const { return frames.at(0).shape(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetParams {
  DatasetKind kind = DatasetKind::advection;
  GridPde pde;
  Shape shape;
  IcSpec ic;
  std::size_t steps = 10;
  std::uint64_t seed = 0;
};

inline Dataset generate_dataset(const DatasetParams& p) {
  p.pde.validate();
  Dataset ds;
  ds.kind = p.kind;
  ds.pde = p.pde;
  ds.seed = p.seed;
  ds.meta["ic"] = to_string(p.ic.type);
  if (p.ic.type == IcSpec::Type::sine || p.ic.type == IcSpec::Type::bandlimited) {
    std::ostringstream f;
    f.precision(17);
    f << p.ic.freq;
    ds.meta["freq"] = f.str();
  }

  BatchTensor u0 = initial_condition(p.ic, p.shape, p.pde.dx, p.seed);
  ds.frames.reserve(p.steps + 1);
  ds.frames.push_back(u0);
  switch (p.kind) {
    case DatasetKind::advection:
      for (std::size_t t = 1; t <= p.steps; ++t) {
        ds.frames.push_back(advect_exact(u0, p.pde, static_cast<double>(t) * p.pde.dt));
      }
      break;
    case DatasetKind::burgers:
      for (std::size_t t = 1; t <= p.steps; ++t) ds.frames.push_back(burgers_step(ds.frames.back(), p.pde));
      break;
    case DatasetKind::heat:
      for (std::size_t t = 1; t <= p.steps; ++t) ds.frames.push_back(heat_step(ds.frames.back(), p.pde));
      break;
    case DatasetKind::external:
      throw DomainError("external datasets are read from disk, not generated");
  }
  return ds;
}

}  // namespace ddeld
