#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ddeld/generators.hpp"
#include "ddeld/sizing.hpp"
#include "oracles.hpp"

using namespace ddeld;

namespace {

std::vector<double> sines(const std::vector<double>& freqs, std::size_t n, double dx) {
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (double f : freqs) x[i] += std::sin(2.0 * std::numbers::pi * f * cell_center(i, dx));
  }
  return x;
}

// Smallest |k| / (n dx) whose cumulative folded DFT energy reaches the
// fraction, computed from the brute-force transform.
double bandwidth_oracle(const std::vector<double>& x, double dx, double fraction) {
  const auto spec = oracle::dft(x);
  const std::size_t n = x.size();
  std::vector<double> folded(n / 2 + 1, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = std::min(k, n - k);
    folded[m] += std::norm(spec[k]);
    total += std::norm(spec[k]);
  }
  double acc = 0.0;
  for (std::size_t m = 0; m < folded.size(); ++m) {
    acc += folded[m];
    if (acc >= fraction * total * (1.0 - 1e-12)) return static_cast<double>(m) / (static_cast<double>(n) * dx);
  }
  return static_cast<double>(n / 2) / (static_cast<double>(n) * dx);
}

GridPde pde_with(double dx, double dt) {
  GridPde p;
  p.dx = dx;
  p.dt = dt;
  return p;
}

}  // namespace

TEST(Courant, Examples) {
  EXPECT_EQ(courant(0.0, 0.1, 0.05), 0.0);
  EXPECT_DOUBLE_EQ(courant(1.0, 0.1, 0.05), 2.0);
  EXPECT_DOUBLE_EQ(courant(0.3, 0.2, 0.1), 2.0 * courant(0.3, 0.1, 0.1));
  EXPECT_THROW(courant(1.0, 0.1, 0.0), DomainError);
  EXPECT_THROW(courant(1.0, 0.1, -1.0), DomainError);
}

TEST(CharLength, Examples) {
  GridPde heat = pde_with(0.1, 1.0);
  heat.alpha = 0.01;
  EXPECT_DOUBLE_EQ(char_length(Physics::diffusion, heat), 0.1);

  GridPde momentum = pde_with(0.1, 4.0);
  momentum.nu = 0.01;
  EXPECT_DOUBLE_EQ(char_length(Physics::diffusion, momentum), 0.2);

  GridPde still = pde_with(0.1, 1.0);
  still.c = {0.0};
  EXPECT_EQ(char_length(Physics::advection, still), 0.0);

  GridPde b = pde_with(0.1, 0.1);
  b.nu = 0.01;
  EXPECT_DOUBLE_EQ(char_length(Physics::burgers, b, 2.0), 0.2);
  EXPECT_DOUBLE_EQ(char_length(Physics::burgers, b, 0.1), std::sqrt(0.001));
}

TEST(CharLength, MissingCoefficients) {
  EXPECT_THROW(char_length(Physics::advection, pde_with(0.1, 1.0)), DomainError);
  EXPECT_THROW(char_length(Physics::burgers, pde_with(0.1, 1.0)), DomainError);
}

TEST(MinWindow, Examples) {
  EXPECT_EQ(min_window_theorem2(100, 5.0), 11u);
  EXPECT_EQ(min_window_theorem2(1, 1.0), 1u);
  EXPECT_EQ(min_window_theorem2(24, 0.5), 25u);
  EXPECT_EQ(min_window_theorem2(24, 4.0), 4u);
  EXPECT_THROW(min_window_theorem2(10, 0.0), DomainError);
  EXPECT_THROW(min_window_theorem2(10, -2.0), DomainError);
}

TEST(MinWindow, Monotonicity) {
  for (std::size_t n = 1; n <= 200; ++n) {
    for (double b = 1.0; b <= 64.0; b *= 2.0) {
      EXPECT_GE(min_window_theorem2(n, b / 2.0), min_window_theorem2(n, b));
      EXPECT_GE(min_window_theorem2(n + 1, b), min_window_theorem2(n, b));
      const auto closed = static_cast<std::size_t>(std::ceil((static_cast<double>(n) + 1.0) / (2.0 * b)));
      EXPECT_EQ(min_window_theorem2(n, b), closed);
    }
  }
}

TEST(Bandwidth, PureSine) {
  const double dx = 1.0 / 32;  // 256 samples = 8 units, bin width 1/8
  for (double f : {0.5, 1.0, 2.0, 4.0}) {
    for (double frac : {0.5, 0.99, 1.0}) {
      EXPECT_NEAR(bandwidth_estimate(sines({f}, 256, dx), dx, frac), f, 0.125) << f << " " << frac;
    }
  }
}

TEST(Bandwidth, TwoSines) {
  const double dx = 1.0 / 32;
  EXPECT_DOUBLE_EQ(bandwidth_estimate(sines({2.0, 6.0}, 256, dx), dx, 0.99), 6.0);
  EXPECT_DOUBLE_EQ(bandwidth_estimate(sines({2.0, 6.0}, 256, dx), dx, 0.4), 2.0);
}

TEST(Bandwidth, WhiteNoiseApproachesNyquist) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n01;
  std::vector<double> x(512);
  for (auto& v : x) v = n01(gen);
  const double dx = 0.01;
  const double nyquist = 0.5 / dx;
  const double b50 = bandwidth_estimate(x, dx, 0.5);
  const double b90 = bandwidth_estimate(x, dx, 0.9);
  const double b999 = bandwidth_estimate(x, dx, 0.999);
  EXPECT_LT(b50, b90);
  EXPECT_LT(b90, b999);
  EXPECT_GT(b999, 0.95 * nyquist);
  EXPECT_LE(bandwidth_estimate(x, dx, 1.0), nyquist);
}

TEST(Bandwidth, MatchesBruteForceDft) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(40 + trial * 3);
    for (auto& v : x) v = n01(gen);
    for (double frac : {0.3, 0.8, 0.99}) {
      EXPECT_DOUBLE_EQ(bandwidth_estimate(x, 0.1, frac), bandwidth_oracle(x, 0.1, frac));
    }
  }
}

TEST(Bandwidth, Errors) {
  EXPECT_THROW(bandwidth_estimate(std::vector<double>(16, 0.0), 0.1), DegenerateSignal);
  EXPECT_THROW(bandwidth_estimate(std::vector<double>(3, 1.0), 0.1), DomainError);
  EXPECT_THROW(bandwidth_estimate(std::vector<double>(8, 1.0), 0.1, 0.0), DomainError);
}

TEST(Recommend, TenCharacteristicLengths) {
  GridPde p = pde_with(0.05, 0.1);
  p.c = {0.5};  // L_c = 0.05 = dx
  const SizingReport r = recommend_window(p, Physics::advection);
  EXPECT_EQ(r.recommended_cells, 11u);
  EXPECT_DOUBLE_EQ(r.courant, 1.0);
  EXPECT_FALSE(r.bandwidth.has_value());
}

TEST(Recommend, StaticSystemFloor) {
  GridPde p = pde_with(0.05, 0.1);
  p.c = {0.0};
  EXPECT_EQ(recommend_window(p, Physics::advection).recommended_cells, 3u);
}

TEST(Recommend, ProbeDominates) {
  GridPde p = pde_with(1.0 / 24, 0.1);
  p.c = {0.0};
  ProbeSignal probe;
  probe.dx = 1.0 / 24;
  probe.samples = sines({0.5}, 24 * 16, probe.dx);
  const SizingReport r = recommend_window(p, Physics::advection, probe);
  EXPECT_EQ(r.min_window_cells, 25u);
  EXPECT_GE(r.recommended_cells, r.min_window_cells);
  EXPECT_EQ(r.recommended_cells % 2, 1u);
}

TEST(Recommend, NeedsCoefficientsOrProbe) {
  EXPECT_THROW(recommend_window(pde_with(0.1, 0.1), Physics::advection), DomainError);
  EXPECT_THROW(recommend_window(pde_with(0.1, 0.1), std::nullopt), DomainError);
  ProbeSignal probe;
  probe.dx = 0.1;
  probe.samples = sines({1.0}, 64, 0.1);
  const SizingReport r = recommend_window(pde_with(0.1, 0.1), std::nullopt, probe);
  EXPECT_GE(r.recommended_cells, 3u);
}

TEST(Recommend, AlwaysOddAtLeastThree) {
  for (double c = 0.0; c < 3.0; c += 0.037) {
    GridPde p = pde_with(0.1, 0.1);
    p.c = {c};
    const auto r = recommend_window(p, Physics::advection);
    EXPECT_EQ(r.recommended_cells % 2, 1u);
    EXPECT_GE(r.recommended_cells, 3u);
    EXPECT_GE(r.recommended_cells, static_cast<std::size_t>(std::llround(10.0 * r.l_c / p.dx)));
  }
}

TEST(Recommend, KeyValueBlock) {
  GridPde p = pde_with(0.05, 0.1);
  p.c = {0.5};
  const std::string kv = to_key_value(recommend_window(p, Physics::advection));
  EXPECT_NE(kv.find("recommended_cells=11\n"), std::string::npos);
  EXPECT_NE(kv.find("bandwidth=none\n"), std::string::npos);
  EXPECT_NE(kv.find("courant=1\n"), std::string::npos);
}
