#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddeld/generators.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ddeld;

namespace {

GridPde periodic_pde(double dx, double dt, std::vector<double> c) {
  GridPde p;
  p.dx = dx;
  p.dt = dt;
  p.c = std::move(c);
  return p;
}

double kinetic_energy(const BatchTensor& u) {
  double e = 0.0;
  for (double v : u.data()) e += v * v;
  return e;
}

std::size_t dominant_bin(const std::vector<double>& x) {
  const auto spec = oracle::dft(x);
  std::size_t best = 1;
  for (std::size_t k = 1; k <= x.size() / 2; ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  }
  return best;
}

}  // namespace

TEST(SinField, BoundedAndPeriodicSeam) {
  const Shape s(1, {64}, 1);
  const BatchTensor u = sin_field(2.0, s, 1.0 / 32.0);  // 2 units, 4 periods
  for (double v : u.data()) EXPECT_LE(std::abs(v), 1.0);
  // Continuation past the last cell equals the first cell.
  const double next = std::sin(2.0 * std::numbers::pi * 2.0 * cell_center(64, 1.0 / 32.0));
  EXPECT_NEAR(next, u.at(0, {0}), 1e-12);
  EXPECT_THROW(sin_field(0.0, s, 0.1), DomainError);
}

TEST(SinField, DominantBinScalesWithFrequency) {
  const Shape s(1, {256}, 1);
  const double dx = 1.0 / 32.0;  // 8 units long
  const BatchTensor lo = sin_field(0.5, s, dx);
  const BatchTensor hi = sin_field(4.0, s, dx);
  const std::size_t klo = dominant_bin(lo.values());
  const std::size_t khi = dominant_bin(hi.values());
  EXPECT_EQ(klo, 4u);
  EXPECT_EQ(khi, 8 * klo);
}

TEST(SinField, DiagonalPlaneWave) {
  const BatchTensor u = sin_field(1.0, Shape(1, {8, 8}, 1), 0.125);
  EXPECT_NEAR(u.at(0, {2, 5}), std::sin(2.0 * std::numbers::pi * (2.5 * 0.125 + 5.5 * 0.125)), 1e-15);
}

TEST(Bumps, DeterministicAndDegenerate) {
  const Shape s(2, {32, 32}, 1);
  EXPECT_EQ(gaussian_bump_field(5, s, 1.0 / 32, 3), gaussian_bump_field(5, s, 1.0 / 32, 3));
  EXPECT_NE(gaussian_bump_field(5, s, 1.0 / 32, 3), gaussian_bump_field(6, s, 1.0 / 32, 3));
  BumpSpec zero;
  zero.amp_min = zero.amp_max = 0.0;
  EXPECT_EQ(gaussian_bump_field(5, s, 1.0 / 32, zero).sum(), 0.0);
  EXPECT_THROW(gaussian_bump_field(5, s, 1.0 / 32, 0), DomainError);
}

TEST(Bumps, MaximumNearStrongestBump) {
  const Shape s(1, {64, 64}, 1);
  const double dx = 1.0 / 64;
  BumpSpec spec;
  spec.count = 1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto bumps = sample_bumps(seed, s, dx, spec);
    const BatchTensor u = gaussian_bump_field(seed, s, dx, spec);
    std::size_t best = 0;
    for (std::size_t i = 1; i < u.size(); ++i) {
      if (u.data()[i] > u.data()[best]) best = i;
    }
    const Extents at = oracle::unflat(best, {64, 64});
    for (std::size_t i = 0; i < 2; ++i) {
      double dist = std::abs(cell_center(at[i], dx) - bumps[0][0].center[i]);
      dist = std::min(dist, 1.0 - dist);
      EXPECT_LE(dist, dx) << "seed " << seed;
    }
  }
}

TEST(Advect, ZeroSpeedAndFullPeriod) {
  const Shape s(2, {40}, 1);
  const BatchTensor u0 = testutil::random_tensor(s, 1);
  EXPECT_EQ(advect_exact(u0, periodic_pde(0.025, 0.1, {0.0}), 3.0), u0);
  // 0.7 * t / dx = 40 cells: one full period.
  const BatchTensor once = advect_exact(u0, periodic_pde(0.025, 0.1, {0.7}), 40 * 0.025 / 0.7);
  EXPECT_LE(testutil::max_abs_diff(once, u0), 1e-12);
}

TEST(Advect, SinePhaseShiftOracle) {
  const double dx = 1.0 / 32, f = 2.0, c = 0.37, t = 1.3;
  const Shape s(1, {96}, 1);
  const BatchTensor got = advect_exact(sin_field(f, s, dx), periodic_pde(dx, 0.1, {c}), t);
  double err = 0.0;
  for (std::size_t i = 0; i < 96; ++i) {
    const double want = std::sin(2.0 * std::numbers::pi * f * cell_center(i, dx) - 2.0 * std::numbers::pi * f * c * t);
    err = std::max(err, std::abs(got.at(0, {i}) - want));
  }
  EXPECT_LE(err, 1e-10);
}

TEST(Advect, TwoDimensionalPhaseShift) {
  const double dx = 1.0 / 16, f = 1.0, t = 0.9;
  const BatchTensor got = advect_exact(sin_field(f, Shape(1, {16, 32}, 1), dx), periodic_pde(dx, 0.1, {0.3, -0.45}), t);
  double err = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 32; ++j) {
      const double arg = cell_center(i, dx) - 0.3 * t + cell_center(j, dx) + 0.45 * t;
      err = std::max(err, std::abs(got.at(0, {i, j}) - std::sin(2.0 * std::numbers::pi * f * arg)));
    }
  }
  EXPECT_LE(err, 1e-10);
}

TEST(Advect, IntegerShiftIsExactRoll) {
  const BatchTensor u0 = testutil::random_tensor(Shape(1, {10}, 1), 3);
  const BatchTensor u = advect_exact(u0, periodic_pde(0.1, 0.1, {0.3}), 1.0);  // 3 cells
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(u.at(0, {i}), u0.at(0, {(i + 7) % 10}));
}

TEST(Advect, ConservesSumAndRejectsNonPeriodic) {
  const BatchTensor u0 = testutil::random_tensor(Shape(3, {48}, 1), 4);
  const BatchTensor u = advect_exact(u0, periodic_pde(1.0 / 48, 0.1, {0.123}), 0.77);
  EXPECT_NEAR(u.sum(), u0.sum(), 1e-12);
  GridPde bad = periodic_pde(0.1, 0.1, {1.0});
  bad.boundary = Boundary::insulated;
  EXPECT_THROW(advect_exact(u0, bad, 1.0), UnsupportedBoundary);
}

TEST(Burgers, FixedPointsAndShape) {
  GridPde p = periodic_pde(1.0 / 32, 0.1, {0.0, 0.0});
  p.nu = 0.01;
  const BatchTensor zero(Shape(1, {16, 16}, 2));
  EXPECT_EQ(burgers_step(zero, p), zero);
  const BatchTensor flat(Shape(1, {16, 16}, 2), std::vector<double>(512, 0.7));
  EXPECT_LE(testutil::max_abs_diff(burgers_step(flat, p), flat), 1e-14);
  EXPECT_THROW(burgers_step(BatchTensor(Shape(1, {16}, 2)), p), RankError);
}

TEST(Burgers, EnergyNonIncreasing) {
  GridPde p = periodic_pde(1.0 / 32, 0.1, {0.0, 0.0});
  p.nu = 0.01;
  BatchTensor u = gaussian_bump_field(9, Shape(1, {32, 32}, 2), p.dx, 3);
  double e = kinetic_energy(u);
  for (int step = 0; step < 100; ++step) {
    u = burgers_step(u, p);
    const double next = kinetic_energy(u);
    ASSERT_LE(next, e * (1.0 + 1e-12)) << "step " << step;
    e = next;
  }
}

TEST(Heat, UniformInsulatedIsStationary) {
  GridPde p = periodic_pde(0.1, 0.5, {0.0, 0.0});
  p.alpha = 0.01;
  p.boundary = Boundary::insulated;
  const BatchTensor t(Shape(1, {12, 12}, 1), std::vector<double>(144, 3.25));
  EXPECT_EQ(heat_step(t, p), t);
}

TEST(Heat, ConservationAndMaximumPrinciple) {
  GridPde p = periodic_pde(0.1, 0.5, {0.0, 0.0});
  p.alpha = 0.02;
  p.boundary = Boundary::insulated;
  BatchTensor t = testutil::random_tensor(Shape(2, {20, 15}, 1), 5);
  for (int step = 0; step < 20; ++step) {
    const BatchTensor next = heat_step(t, p);
    EXPECT_NEAR(next.sum(), t.sum(), 1e-10);
    const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
    for (double v : next.data()) {
      EXPECT_LE(v, *hi + 1e-12);
      EXPECT_GE(v, *lo - 1e-12);
    }
    t = next;
  }
}

TEST(Heat, PointSourceMatchesKernelWidth) {
  GridPde p = periodic_pde(1.0, 1.0, {0.0, 0.0});
  p.alpha = 0.1;
  p.boundary = Boundary::zero_extension;
  BatchTensor t(Shape(1, {101, 101}, 1));
  t.at(0, {50, 50}) = 1.0;
  for (int step = 0; step < 50; ++step) t = heat_step(t, p);
  double mass = 0.0, second = 0.0;
  for (std::size_t i = 0; i < 101; ++i) {
    for (std::size_t j = 0; j < 101; ++j) {
      const double v = t.at(0, {i, j});
      const double x = static_cast<double>(i) - 50.0;
      mass += v;
      second += v * x * x;
    }
  }
  const double width = std::sqrt(second / mass);
  const double expect = std::sqrt(2.0 * 0.1 * 50.0);
  EXPECT_NEAR(width, expect, 0.05 * expect);
}

TEST(Heat, ZeroExtensionLosesHeatAtWalls) {
  GridPde p = periodic_pde(0.1, 0.5, {0.0});
  p.alpha = 0.02;
  p.boundary = Boundary::zero_extension;
  const BatchTensor t(Shape(1, {10}, 1), std::vector<double>(10, 1.0));
  EXPECT_LT(heat_step(t, p).sum(), t.sum());
}

TEST(Heat, NoDiffusivityIsIdentity) {
  GridPde p = periodic_pde(0.1, 0.5, {0.0});
  const BatchTensor t = testutil::random_tensor(Shape(1, {10}, 1), 6);
  EXPECT_EQ(heat_step(t, p), t);
}

TEST(Generate, AdvectionFramesAreExactShifts) {
  DatasetParams dp;
  dp.kind = DatasetKind::advection;
  dp.pde = periodic_pde(1.0 / 32, 0.1, {0.25});
  dp.shape = Shape(2, {64}, 1);
  dp.ic.type = IcSpec::Type::sine;
  dp.ic.freq = 2.0;
  dp.steps = 10;
  const Dataset ds = generate_dataset(dp);
  ASSERT_EQ(ds.frames.size(), 11u);
  EXPECT_EQ(ds.frames[0], sin_field(2.0, dp.shape, dp.pde.dx));
  for (std::size_t t = 0; t <= 10; ++t) {
    EXPECT_EQ(ds.frames[t], advect_exact(ds.frames[0], dp.pde, static_cast<double>(t) * 0.1));
  }
  EXPECT_EQ(generate_dataset(dp), ds);
}

TEST(Generate, BurgersHundredOneFrames) {
  DatasetParams dp;
  dp.kind = DatasetKind::burgers;
  dp.pde = periodic_pde(1.0 / 16, 0.1, {0.0, 0.0});
  dp.pde.nu = 0.01;
  dp.shape = Shape(1, {16, 16}, 2);
  dp.ic.type = IcSpec::Type::bumps;
  dp.steps = 100;
  dp.seed = 3;
  const Dataset ds = generate_dataset(dp);
  EXPECT_EQ(ds.frames.size(), 101u);
  for (const auto& f : ds.frames) EXPECT_TRUE(f.all_finite());
  EXPECT_EQ(generate_dataset(dp), ds);
}

TEST(Bandlimited, SpectrumWithinBand) {
  const Shape s(1, {128}, 1);
  const double dx = 1.0 / 16;  // 8 units
  const BatchTensor u = bandlimited_field(3, s, dx, 2.0);
  const auto spec = oracle::dft(u.values());
  for (std::size_t k = 0; k <= 64; ++k) {
    const double freq = static_cast<double>(k) / 8.0;
    if (freq > 2.0) {
      EXPECT_LE(std::abs(spec[k]), 1e-9) << k;
    }
  }
  EXPECT_GT(std::abs(spec[16]) + std::abs(spec[15]) + std::abs(spec[14]), 0.0);
}
