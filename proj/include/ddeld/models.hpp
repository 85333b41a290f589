#pragma once

// Window predictors (upwind and diffusion stencils, a ridge-fitted linear
// stencil) and the non-local global linear baseline.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ddeld/binary_io.hpp"
#include "ddeld/errors.hpp"
#include "ddeld/generators.hpp"
#include "ddeld/predictor.hpp"
#include "ddeld/tensor.hpp"
#include "ddeld/windowing.hpp"

namespace ddeld {

namespace detail {

// Weighted sum of window cells at fixed offsets from the center, applied to
// every window and channel independently.
struct Tap {
  std::vector<long> offset;
  double weight;
};

inline BatchTensor apply_taps(const BatchTensor& windows, const std::vector<Tap>& taps) {
  const Shape& s = windows.shape();
  const std::size_t d = s.rank();
  BatchTensor out(center_shape(s));
  std::vector<std::size_t> flat(taps.size());
  for (std::size_t t = 0; t < taps.size(); ++t) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < d; ++i) {
      off = off * s.spatial(i) + static_cast<std::size_t>(static_cast<long>(s.spatial(i) / 2) + taps[t].offset[i]);
    }
    flat[t] = off;
  }
  const std::size_t nc = s.channels();
  const std::size_t stride = s.cells() * nc;
  for (std::size_t m = 0; m < s.batch(); ++m) {
    const double* win = windows.data().data() + m * stride;
    for (std::size_t c = 0; c < nc; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < taps.size(); ++t) acc += taps[t].weight * win[flat[t] * nc + c];
      out.data()[m * nc + c] = acc;
    }
  }
  return out;
}

}  // namespace detail

// First-order upwind transport of the window center over one dataset step.
// The Courant number per dim is split into whole cells n and a fraction f;
// the update interpolates between the cells n and n+1 upstream, which is the
// classic upwind scheme for |C| < 1 and exact transport for integer C.
class UpwindStencil final : public Predictor {
public:
  UpwindStencil(const GridPde& pde, const WindowSpec& w) {
    pde.validate();
    const std::size_t d = w.rank();
    if (pde.c.size() != d) throw RankError("transport speed needs one component per window dim");
    std::vector<std::vector<std::pair<long, double>>> per_dim(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double cn = pde.c[i] * pde.dt / pde.dx;
      const double whole = std::floor(std::abs(cn));
      const double frac = std::abs(cn) - whole;
      const long sign = cn < 0.0 ? -1 : 1;
      const auto reach = static_cast<std::size_t>(std::ceil(std::abs(cn) - 1e-12));
      if (reach > w.center(i)) {
        throw WindowTooSmall("Courant number " + std::to_string(cn) + " in dim " + std::to_string(i) +
                             " reaches beyond window half-width " + std::to_string(w.center(i)));
      }
      radius_ = std::max(radius_, reach);
      const long n = static_cast<long>(whole);
      per_dim[i].push_back({-sign * n, 1.0 - frac});
      if (frac > 1e-12) per_dim[i].push_back({-sign * (n + 1), frac});
    }
    // Tensor product of the per-dimension taps.
    taps_.push_back({{}, 1.0});
    for (std::size_t i = 0; i < d; ++i) {
      std::vector<detail::Tap> next;
      for (const auto& t : taps_) {
        for (const auto& [off, wgt] : per_dim[i]) {
          detail::Tap n = t;
          n.offset.push_back(off);
          n.weight *= wgt;
          next.push_back(std::move(n));
        }
      }
      taps_ = std::move(next);
    }
  }

  BatchTensor predict_batch(const BatchTensor& windows) const override { return detail::apply_taps(windows, taps_); }
  std::size_t radius() const override { return radius_; }
  std::string name() const override { return "upwind"; }

private:
  std::vector<detail::Tap> taps_;
  std::size_t radius_ = 0;
};

// One explicit central-difference diffusion update at the window center.
class DiffusionStencil final : public Predictor {
public:
  DiffusionStencil(const GridPde& pde, const WindowSpec& w) : rank_(w.rank()) {
    pde.validate();
    ratio_ = pde.alpha * pde.dt / (pde.dx * pde.dx);
    if (ratio_ > 1.0 / (2.0 * static_cast<double>(rank_)) + 1e-15) {
      throw StabilityError("diffusion number " + std::to_string(ratio_) + " exceeds 1/(2d)");
    }
  }

  BatchTensor predict_batch(const BatchTensor& windows) const override {
    const Shape& s = windows.shape();
    if (s.rank() != rank_) throw PredictorContractError("diffusion stencil built for a different rank");
    BatchTensor out(center_shape(s));
    const std::size_t nc = s.channels();
    const std::size_t stride = s.cells() * nc;
    std::size_t center = 0;
    std::vector<std::size_t> step(rank_);
    for (std::size_t i = 0; i < rank_; ++i) center = center * s.spatial(i) + s.spatial(i) / 2;
    for (std::size_t i = 0; i < rank_; ++i) {
      std::size_t st = nc;
      for (std::size_t j = i + 1; j < rank_; ++j) st *= s.spatial(j);
      step[i] = st;
    }
    for (std::size_t m = 0; m < s.batch(); ++m) {
      const double* win = windows.data().data() + m * stride + center * nc;
      for (std::size_t c = 0; c < nc; ++c) {
        const double here = win[c];
        double lap = 0.0;
        for (std::size_t i = 0; i < rank_; ++i) lap += *(win + c - step[i]) - 2.0 * here + *(win + c + step[i]);
        out.data()[m * nc + c] = ratio_ == 0.0 ? here : here + ratio_ * lap;
      }
    }
    return out;
  }
  std::size_t radius() const override { return 1; }
  std::string name() const override { return "diffusion"; }

private:
  std::size_t rank_;
  double ratio_ = 0.0;
};

// Single linear layer over the window: out_c = sum_j w_cj * x_j + b_c where
// x runs over every (cell, channel) of the window in buffer order.
class LearnedStencil final : public Predictor {
public:
  LearnedStencil() = default;
  LearnedStencil(WindowSpec window, std::size_t channels, double lambda, std::vector<double> weights,
                 std::vector<double> bias)
      : window_(std::move(window)),
        channels_(channels),
        lambda_(lambda),
        weights_(std::move(weights)),
        bias_(std::move(bias)) {
    if (weights_.size() != channels_ * features() || bias_.size() != channels_) {
      throw ShapeMismatchError("stencil coefficients do not match window and channel count");
    }
  }

  const WindowSpec& window() const noexcept { return window_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t features() const { return window_.cells() * channels_; }
  double lambda() const noexcept { return lambda_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

  // Relative residual of the normal equations at fit time.
  double normal_residual = 0.0;

  BatchTensor predict_batch(const BatchTensor& windows) const override {
    const Shape& s = windows.shape();
    if (s.spatial() != window_.sizes() || s.channels() != channels_) {
      throw PredictorContractError("learned stencil expects windows " + to_string(window_.sizes()) + " x " +
                                   std::to_string(channels_) + ", got " + s.str());
    }
    const std::size_t p = features();
    BatchTensor out(center_shape(s));
    for (std::size_t m = 0; m < s.batch(); ++m) {
      const double* x = windows.data().data() + m * p;
      for (std::size_t c = 0; c < channels_; ++c) {
        const double* w = weights_.data() + c * p;
        double acc = 0.0;
        for (std::size_t j = 0; j < p; ++j) acc += w[j] * x[j];
        out.data()[m * channels_ + c] = acc + bias_[c];
      }
    }
    return out;
  }
  std::size_t radius() const override {
    std::size_t r = 0;
    for (std::size_t i = 0; i < window_.rank(); ++i) r = std::max(r, window_.center(i));
    return r;
  }
  std::string name() const override { return "learned"; }

  friend bool operator==(const LearnedStencil& a, const LearnedStencil& b) {
    return a.window_ == b.window_ && a.channels_ == b.channels_ && a.lambda_ == b.lambda_ &&
           a.weights_ == b.weights_ && a.bias_ == b.bias_;
  }

private:
  WindowSpec window_;
  std::size_t channels_ = 0;
  double lambda_ = 0.0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

struct FitOptions {
  double lambda = 1e-8;
  std::size_t sample_budget = 4096;
  std::uint64_t seed = 0;
};

struct RidgeSolution {
  Eigen::MatrixXd weights;  // features x outputs
  Eigen::VectorXd bias;     // outputs
  double normal_residual = 0.0;
};

// Ridge regression with an unpenalized intercept:
// (Xc^T Xc + lambda I) W = Xc^T Yc on column-centered data, b = mean_y - W^T mean_x.
inline RidgeSolution ridge_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda) {
  if (x.rows() != y.rows() || x.rows() == 0) throw ShapeMismatchError("ridge: design and target row counts differ");
  if (!(lambda >= 0.0)) throw DomainError("ridge strength must be non-negative");
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const Eigen::RowVectorXd my = y.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mx;
  const Eigen::MatrixXd yc = y.rowwise() - my;

  Eigen::MatrixXd a = xc.transpose() * xc;
  a.diagonal().array() += lambda;
  const Eigen::MatrixXd rhs = xc.transpose() * yc;

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw SingularSystem("normal equations are singular or nearly so (rcond " + std::to_string(llt.rcond()) +
                         "); use a ridge strength > 0");
  }
  Eigen::MatrixXd w = llt.solve(rhs);
  for (int refine = 0; refine < 2; ++refine) w += llt.solve(rhs - a * w);

  RidgeSolution sol;
  const double rhs_norm = rhs.norm();
  const double res = (a * w - rhs).norm();
  sol.normal_residual = rhs_norm > 0.0 ? res / rhs_norm : res;
  sol.bias = (my - mx * w).transpose();
  sol.weights = std::move(w);
  return sol;
}

namespace detail {

// Indices of `budget` draws without replacement from 0..total-1 (all of them
// when the budget covers everything), in draw order.
inline std::vector<std::size_t> sample_indices(std::size_t total, std::size_t budget, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (budget >= total) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < budget; ++i) std::swap(idx[i], idx[i + rng.index(total - i)]);
  idx.resize(budget);
  return idx;
}

inline std::vector<std::size_t> all_pairs_if_empty(const Dataset& ds, std::vector<std::size_t> pairs) {
  if (ds.frames.size() < 2) throw DomainError("fitting needs at least two frames");
  if (pairs.empty()) {
    pairs.resize(ds.steps());
    std::iota(pairs.begin(), pairs.end(), std::size_t{0});
  }
  for (std::size_t p : pairs) {
    if (p + 1 >= ds.frames.size()) throw DomainError("frame pair " + std::to_string(p) + " out of range");
  }
  return pairs;
}

// Copies the zero-extended window centered at `x` into `dst`.
inline void gather_window(const BatchTensor& frame, std::size_t b, const Extents& x, const WindowSpec& w,
                          double* dst) {
  const Shape& s = frame.shape();
  const std::size_t d = s.rank();
  const std::size_t nc = s.channels();
  Extents src(d);
  for_each_index(w.sizes(), [&](const Extents& o) {
    bool inside = true;
    for (std::size_t i = 0; i < d; ++i) {
      const auto pos = static_cast<long>(x[i]) + static_cast<long>(o[i]) - static_cast<long>(w.center(i));
      if (pos < 0 || pos >= static_cast<long>(s.spatial(i))) {
        inside = false;
        break;
      }
      src[i] = static_cast<std::size_t>(pos);
    }
    for (std::size_t c = 0; c < nc; ++c) *dst++ = inside ? frame.at(b, src, c) : 0.0;
  });
}

inline Extents unflatten(std::size_t flat, const Extents& ext) {
  Extents x(ext.size());
  for (std::size_t i = ext.size(); i-- > 0;) {
    x[i] = flat % ext[i];
    flat /= ext[i];
  }
  return x;
}

}  // namespace detail

// Fits a LearnedStencil on (window at x in frame t -> value at x in frame t+1)
// pairs drawn uniformly from the given frame pairs (all pairs when empty).
inline LearnedStencil fit_stencil(const Dataset& ds, const WindowSpec& w, const FitOptions& opt,
                                  std::vector<std::size_t> pairs = {}) {
  pairs = detail::all_pairs_if_empty(ds, std::move(pairs));
  const Shape& s = ds.shape();
  if (s.rank() != w.rank()) throw RankError("window rank does not match dataset rank");
  const std::size_t cells = s.cells();
  const std::size_t per_pair = s.batch() * cells;
  const std::size_t nc = s.channels();
  const std::size_t p = w.cells() * nc;

  const auto picks = detail::sample_indices(pairs.size() * per_pair, opt.sample_budget, opt.seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(picks.size()), static_cast<Eigen::Index>(p));
  Eigen::MatrixXd y(static_cast<Eigen::Index>(picks.size()), static_cast<Eigen::Index>(nc));
  std::vector<double> row(p);
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const std::size_t pair = pairs[picks[r] / per_pair];
    const std::size_t b = (picks[r] % per_pair) / cells;
    const Extents cell = detail::unflatten(picks[r] % cells, s.spatial());
    detail::gather_window(ds.frames[pair], b, cell, w, row.data());
    for (std::size_t j = 0; j < p; ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = row[j];
    for (std::size_t c = 0; c < nc; ++c) {
      y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = ds.frames[pair + 1].at(b, cell, c);
    }
  }

  const RidgeSolution sol = ridge_fit(x, y, opt.lambda);
  std::vector<double> weights(nc * p);
  std::vector<double> bias(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t j = 0; j < p; ++j) {
      weights[c * p + j] = sol.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
    }
    bias[c] = sol.bias(static_cast<Eigen::Index>(c));
  }
  LearnedStencil st(w, nc, opt.lambda, std::move(weights), std::move(bias));
  st.normal_residual = sol.normal_residual;
  return st;
}

// Whole-frame next-step model.
class FrameModel {
public:
  virtual ~FrameModel() = default;
  virtual BatchTensor predict_frame(const BatchTensor& frame) const = 0;
  virtual std::string name() const = 0;
};

// A window predictor lifted to full frames through prediction integration.
class WindowedModel final : public FrameModel {
public:
  WindowedModel(WindowSpec w, std::shared_ptr<const Predictor> predictor, unsigned threads = 1)
      : window_(std::move(w)), predictor_(std::move(predictor)), threads_(threads) {}

  BatchTensor predict_frame(const BatchTensor& frame) const override {
    IntegrationOptions opts;
    opts.threads = threads_;
    return integrate_predictions(frame, window_, *predictor_, opts);
  }
  std::string name() const override { return predictor_->name(); }
  const Predictor& predictor() const { return *predictor_; }
  const WindowSpec& window() const { return window_; }

private:
  WindowSpec window_;
  std::shared_ptr<const Predictor> predictor_;
  unsigned threads_;
};

// Ridge regression from the whole flattened frame to the whole next frame.
// Solved in the primal when there are at least as many samples as features,
// otherwise in the dual (kernel) form.
class GlobalLinear final : public FrameModel {
public:
  GlobalLinear(Shape frame, Eigen::RowVectorXd mean_x, Eigen::RowVectorXd mean_y, Eigen::MatrixXd weights)
      : frame_(std::move(frame)), mean_x_(std::move(mean_x)), mean_y_(std::move(mean_y)), weights_(std::move(weights)) {}

  GlobalLinear(Shape frame, Eigen::RowVectorXd mean_x, Eigen::RowVectorXd mean_y, Eigen::MatrixXd support,
               Eigen::MatrixXd dual)
      : frame_(std::move(frame)),
        mean_x_(std::move(mean_x)),
        mean_y_(std::move(mean_y)),
        support_(std::move(support)),
        dual_(std::move(dual)) {}

  BatchTensor predict_frame(const BatchTensor& frame) const override {
    const Shape& s = frame.shape();
    if (s.spatial() != frame_.spatial() || s.channels() != frame_.channels()) {
      throw ShapeMismatchError("global model fitted on " + frame_.str() + ", got " + s.str());
    }
    const auto p = static_cast<Eigen::Index>(s.cells() * s.channels());
    BatchTensor out(s);
    for (std::size_t b = 0; b < s.batch(); ++b) {
      Eigen::Map<const Eigen::RowVectorXd> x(frame.data().data() + static_cast<Eigen::Index>(b) * p, p);
      const Eigen::RowVectorXd xc = x - mean_x_;
      Eigen::RowVectorXd yhat =
          weights_.size() ? Eigen::RowVectorXd(xc * weights_) : Eigen::RowVectorXd((support_ * xc.transpose()).transpose() * dual_);
      yhat += mean_y_;
      std::copy(yhat.data(), yhat.data() + p, out.data().data() + static_cast<Eigen::Index>(b) * p);
    }
    return out;
  }
  std::string name() const override { return "global"; }

private:
  Shape frame_;
  Eigen::RowVectorXd mean_x_;
  Eigen::RowVectorXd mean_y_;
  Eigen::MatrixXd weights_;
  Eigen::MatrixXd support_;
  Eigen::MatrixXd dual_;
};

inline GlobalLinear fit_global_linear(const Dataset& ds, const FitOptions& opt, std::vector<std::size_t> pairs = {}) {
  pairs = detail::all_pairs_if_empty(ds, std::move(pairs));
  const Shape& s = ds.shape();
  const std::size_t p = s.cells() * s.channels();
  const auto picks = detail::sample_indices(pairs.size() * s.batch(), opt.sample_budget, opt.seed);
  const auto m = static_cast<Eigen::Index>(picks.size());
  const auto pp = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd x(m, pp), y(m, pp);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t pair = pairs[picks[static_cast<std::size_t>(r)] / s.batch()];
    const std::size_t b = picks[static_cast<std::size_t>(r)] % s.batch();
    x.row(r) = Eigen::Map<const Eigen::RowVectorXd>(ds.frames[pair].data().data() + b * p, pp);
    y.row(r) = Eigen::Map<const Eigen::RowVectorXd>(ds.frames[pair + 1].data().data() + b * p, pp);
  }
  if (m > pp) {
    RidgeSolution sol = ridge_fit(x, y, opt.lambda);
    const Eigen::RowVectorXd mx = x.colwise().mean();
    const Eigen::RowVectorXd my = sol.bias.transpose() + mx * sol.weights;
    return GlobalLinear(s, mx, my, std::move(sol.weights));
  }
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const Eigen::RowVectorXd my = y.colwise().mean();
  Eigen::MatrixXd xc = x.rowwise() - mx;
  const Eigen::MatrixXd yc = y.rowwise() - my;
  Eigen::MatrixXd gram = xc * xc.transpose();
  gram.diagonal().array() += opt.lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw SingularSystem("global model Gram matrix is singular; use a ridge strength > 0");
  }
  Eigen::MatrixXd dual = llt.solve(yc);
  return GlobalLinear(s, mx, my, std::move(xc), std::move(dual));
}

// --- LearnedStencil file format --------------------------------------------
//   "DDST" | version u32 = 1 | d u8 | W_1..W_d u32 | N_c u32 | lambda f64 |
//   weights f64 (N_c x prod W x N_c) | biases f64 (N_c)

inline constexpr std::uint32_t kStencilVersion = 1;

inline std::vector<std::uint8_t> encode_stencil(const LearnedStencil& st) {
  io::ByteWriter w;
  w.raw("DDST");
  w.u32(kStencilVersion);
  w.u8(static_cast<std::uint8_t>(st.window().rank()));
  for (std::size_t s : st.window().sizes()) w.u32(static_cast<std::uint32_t>(s));
  w.u32(static_cast<std::uint32_t>(st.channels()));
  w.f64(st.lambda());
  for (double v : st.weights()) w.f64(v);
  for (double v : st.bias()) w.f64(v);
  return w.bytes();
}

inline LearnedStencil decode_stencil(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (r.raw(4) != "DDST") throw FormatError("bad magic, not a stencil file");
  const std::uint32_t version = r.u32();
  if (version != kStencilVersion) throw FormatError("unsupported stencil version " + std::to_string(version));
  const std::uint8_t d = r.u8();
  if (d < 1 || d > kMaxSpatialRank) throw FormatError("stencil rank out of range");
  Extents sizes(d);
  for (auto& s : sizes) s = r.u32();
  const std::size_t nc = r.u32();
  const double lambda = r.f64();
  WindowSpec w = [&] {
    try {
      return WindowSpec(sizes);
    } catch (const Error& e) {
      throw FormatError(std::string("bad stencil window: ") + e.what());
    }
  }();
  if (nc == 0) throw FormatError("stencil has zero channels");
  const std::size_t count = nc * w.cells() * nc;
  if (r.remaining() != (count + nc) * 8) throw FormatError("stencil payload size does not match its header");
  std::vector<double> weights(count), bias(nc);
  for (auto& v : weights) v = r.f64();
  for (auto& v : bias) v = r.f64();
  return LearnedStencil(std::move(w), nc, lambda, std::move(weights), std::move(bias));
}

inline void write_stencil(const std::string& path, const LearnedStencil& st) { io::write_file(path, encode_stencil(st)); }

inline LearnedStencil read_stencil(const std::string& path) { return decode_stencil(io::read_file(path)); }

}  // namespace ddeld
