#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "ddeld/tensor.hpp"

namespace ddeld {

// Maps a batch of windows (m, W_1..W_d, N_c) to the next-step value at each
// window center, returned as (m, 1..1, N_c).
class Predictor {
public:
  virtual ~Predictor() = default;

  virtual BatchTensor predict_batch(const BatchTensor& windows) const = 0;

  // Largest offset from the center, in cells, the prediction may depend on.
  virtual std::size_t radius() const = 0;

  // True when predict_batch may be called from several threads at once.
  virtual bool concurrency_safe() const { return true; }

  virtual std::string name() const = 0;
};

// Shape of a center-value batch for `windows`.
inline Shape center_shape(const Shape& windows) {
  return Shape(windows.batch(), Extents(windows.rank(), 1), windows.channels());
}

// Returns the window center, i.e. predicts "no change".
class IdentityPredictor final : public Predictor {
public:
  BatchTensor predict_batch(const BatchTensor& windows) const override {
    const Shape& s = windows.shape();
    BatchTensor out(center_shape(s));
    Extents mid(s.rank());
    for (std::size_t i = 0; i < s.rank(); ++i) mid[i] = s.spatial(i) / 2;
    for (std::size_t b = 0; b < s.batch(); ++b) {
      for (std::size_t c = 0; c < s.channels(); ++c) {
        out.data()[b * s.channels() + c] = windows.at(b, std::span<const std::size_t>(mid), c);
      }
    }
    return out;
  }
  std::size_t radius() const override { return 0; }
  std::string name() const override { return "identity"; }
};

// Wraps a callable; handy for tests and ad-hoc experiments.
class FunctionPredictor final : public Predictor {
public:
  using Fn = std::function<BatchTensor(const BatchTensor&)>;

  FunctionPredictor(Fn fn, std::size_t radius, bool concurrency_safe = true, std::string name = "function")
      : fn_(std::move(fn)), radius_(radius), safe_(concurrency_safe), name_(std::move(name)) {}

  BatchTensor predict_batch(const BatchTensor& windows) const override { return fn_(windows); }
  std::size_t radius() const override { return radius_; }
  bool concurrency_safe() const override { return safe_; }
  std::string name() const override { return name_; }

private:
  Fn fn_;
  std::size_t radius_;
  bool safe_;
  std::string name_;
};

}  // namespace ddeld
