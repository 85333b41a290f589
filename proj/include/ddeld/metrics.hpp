#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "ddeld/errors.hpp"
#include "ddeld/tensor.hpp"

namespace ddeld {

namespace detail {
inline void require_same_shape(const BatchTensor& pred, const BatchTensor& truth) {
  if (!(pred.shape() == truth.shape())) {
    throw ShapeMismatchError("prediction " + pred.shape().str() + " vs truth " + truth.shape().str());
  }
}
}  // namespace detail

// ||pred - truth||_2 / ||truth||_2
inline double rel_l2(const BatchTensor& pred, const BatchTensor& truth) {
  detail::require_same_shape(pred, truth);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = pred.data()[i] - truth.data()[i];
    num += e * e;
    den += truth.data()[i] * truth.data()[i];
  }
  if (den == 0.0) throw DegenerateTruth("relative L2 against an all-zero truth");
  return std::sqrt(num / den);
}

struct PaperL2 {
  double value = 0.0;
  std::size_t excluded = 0;  // cells with zero truth, skipped
};

// Sum over cells of |pred_i - u_i| / |u_i|, skipping cells where u_i == 0.
inline PaperL2 paper_l2(const BatchTensor& pred, const BatchTensor& truth) {
  detail::require_same_shape(pred, truth);
  PaperL2 out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double u = truth.data()[i];
    if (u == 0.0) {
      ++out.excluded;
      continue;
    }
    out.value += std::abs(pred.data()[i] - u) / std::abs(u);
  }
  return out;
}

// 1 - SS_res / SS_tot
inline double r2(const BatchTensor& pred, const BatchTensor& truth) {
  detail::require_same_shape(pred, truth);
  double mean = 0.0;
  for (double v : truth.data()) mean += v;
  mean /= static_cast<double>(truth.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = pred.data()[i] - truth.data()[i];
    const double m = mean - truth.data()[i];
    res += e * e;
    tot += m * m;
  }
  if (tot == 0.0) throw DegenerateTruth("r2 of a zero-variance truth is undefined");
  return 1.0 - res / tot;
}

struct MetricsRecord {
  double rel_l2 = 0.0;
  double paper_l2 = 0.0;
  std::size_t paper_l2_excluded = 0;
  double r2 = 0.0;
};

// All metrics at once; degenerate truths yield NaN for the affected entry.
inline MetricsRecord evaluate(const BatchTensor& pred, const BatchTensor& truth) {
  MetricsRecord m;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    m.rel_l2 = rel_l2(pred, truth);
  } catch (const DegenerateTruth&) {
    m.rel_l2 = nan;
  }
  const PaperL2 p = paper_l2(pred, truth);
  m.paper_l2 = p.value;
  m.paper_l2_excluded = p.excluded;
  try {
    m.r2 = r2(pred, truth);
  } catch (const DegenerateTruth&) {
    m.r2 = nan;
  }
  return m;
}

}  // namespace ddeld
