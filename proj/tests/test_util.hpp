#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ddeld/tensor.hpp"

namespace testutil {

inline ddeld::BatchTensor random_tensor(const ddeld::Shape& s, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ddeld::BatchTensor t(s);
  for (auto& v : t.data()) v = u(gen);
  return t;
}

inline double max_abs_diff(const ddeld::BatchTensor& a, const ddeld::BatchTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace testutil
