#pragma once

// Dense batched N-d grid field and the split/stack/pad/slice primitives the
// windowing algorithms are composed from.
//
// Layout is row-major over (batch, N_1, ..., N_d, channels): batch varies
// slowest, channels fastest. Axis numbering in split/stack follows the same
// order, so axis 0 is the batch, axes 1..d are spatial and axis d+1 is the
// channel axis.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ddeld/errors.hpp"

namespace ddeld {

inline constexpr std::size_t kMaxSpatialRank = 3;

using Extents = std::vector<std::size_t>;

inline std::string to_string(const Extents& e) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < e.size(); ++i) os << (i ? "," : "") << e[i];
  os << ')';
  return os.str();
}

inline std::size_t checked_product(std::span<const std::size_t> values) {
  std::size_t total = 1;
  for (std::size_t v : values) {
    if (v != 0 && total > std::numeric_limits<std::size_t>::max() / v) {
      throw DomainError("element count overflows the index range");
    }
    total *= v;
  }
  return total;
}

class Shape {
public:
  Shape() = default;

  Shape(std::size_t batch, Extents spatial, std::size_t channels)
      : batch_(batch), spatial_(std::move(spatial)), channels_(channels) {
    if (spatial_.empty() || spatial_.size() > kMaxSpatialRank) {
      throw RankError("spatial rank must be in 1..3, got " + std::to_string(spatial_.size()));
    }
    if (batch_ == 0 || channels_ == 0 ||
        std::any_of(spatial_.begin(), spatial_.end(), [](std::size_t n) { return n == 0; })) {
      throw DomainError("all extents must be positive: " + to_string(dims()));
    }
    total_ = checked_product(dims());
  }

  // Builds a shape from the full (batch, spatial..., channels) extent list.
  static Shape from_dims(const Extents& dims) {
    if (dims.size() < 3) throw RankError("need at least batch, one spatial and channel extent");
    return Shape(dims.front(), Extents(dims.begin() + 1, dims.end() - 1), dims.back());
  }

  std::size_t batch() const noexcept { return batch_; }
  const Extents& spatial() const noexcept { return spatial_; }
  std::size_t spatial(std::size_t i) const { return spatial_.at(i); }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t rank() const noexcept { return spatial_.size(); }
  std::size_t total() const noexcept { return total_; }
  std::size_t cells() const noexcept { return total_ / (batch_ * channels_); }

  Extents dims() const {
    Extents d;
    d.reserve(spatial_.size() + 2);
    d.push_back(batch_);
    d.insert(d.end(), spatial_.begin(), spatial_.end());
    d.push_back(channels_);
    return d;
  }

  std::string str() const { return to_string(dims()); }

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.batch_ == b.batch_ && a.spatial_ == b.spatial_ && a.channels_ == b.channels_;
  }

private:
  std::size_t batch_ = 0;
  Extents spatial_;
  std::size_t channels_ = 0;
  std::size_t total_ = 0;
};

class BatchTensor {
public:
  BatchTensor() = default;

  explicit BatchTensor(Shape shape) : shape_(std::move(shape)), data_(shape_.total(), 0.0) {}

  BatchTensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.total()) {
      throw ShapeMismatchError("buffer holds " + std::to_string(data_.size()) + " values, shape " +
                               shape_.str() + " needs " + std::to_string(shape_.total()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  // Buffer offset of element (b, idx, c).
  std::size_t offset(std::size_t b, std::span<const std::size_t> idx, std::size_t c) const {
    std::size_t off = b;
    for (std::size_t i = 0; i < shape_.rank(); ++i) off = off * shape_.spatial(i) + idx[i];
    return off * shape_.channels() + c;
  }

  double& at(std::size_t b, std::initializer_list<std::size_t> idx, std::size_t c = 0) {
    return data_[offset(b, {idx.begin(), idx.size()}, c)];
  }
  double at(std::size_t b, std::initializer_list<std::size_t> idx, std::size_t c = 0) const {
    return data_[offset(b, {idx.begin(), idx.size()}, c)];
  }
  double& at(std::size_t b, std::span<const std::size_t> idx, std::size_t c = 0) {
    return data_[offset(b, idx, c)];
  }
  double at(std::size_t b, std::span<const std::size_t> idx, std::size_t c = 0) const {
    return data_[offset(b, idx, c)];
  }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v - v == 0.0; });
  }

  friend bool operator==(const BatchTensor& a, const BatchTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  Shape shape_;
  std::vector<double> data_;
};

// Counts block copies performed by split (pieces produced) and stack (pieces
// consumed). Used to check that decomposition cost scales with the block
// counts, not with anything hidden.
inline std::atomic<std::uint64_t>& block_op_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}
inline std::uint64_t block_op_count() { return block_op_counter().load(); }
inline void reset_block_op_count() { block_op_counter().store(0); }

namespace detail {

struct AxisView {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

inline AxisView axis_view(const Extents& dims, std::size_t axis) {
  if (axis >= dims.size()) {
    throw RankError("axis " + std::to_string(axis) + " out of range for " + to_string(dims));
  }
  AxisView v{1, dims[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= dims[i];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) v.inner *= dims[i];
  return v;
}

// Visits every spatial multi-index of `extents` in row-major order.
template <typename F>
void for_each_index(const Extents& extents, F&& f) {
  const std::size_t d = extents.size();
  Extents idx(d, 0);
  const std::size_t n = checked_product(extents);
  for (std::size_t flat = 0; flat < n; ++flat) {
    f(std::as_const(idx));
    for (std::size_t k = d; k-- > 0;) {
      if (++idx[k] < extents[k]) break;
      idx[k] = 0;
    }
  }
}

}  // namespace detail

// Splits `t` into `parts` equal consecutive pieces along `axis`.
inline std::vector<BatchTensor> split(const BatchTensor& t, std::size_t parts, std::size_t axis) {
  const Extents dims = t.shape().dims();
  const auto v = detail::axis_view(dims, axis);
  if (parts == 0 || v.extent % parts != 0) {
    throw DivisibilityError("cannot split axis " + std::to_string(axis) + " of extent " +
                            std::to_string(v.extent) + " into " + std::to_string(parts) + " parts");
  }
  if (parts == 1) {
    block_op_counter() += 1;
    return {t};
  }
  const std::size_t sub = v.extent / parts;
  Extents piece_dims = dims;
  piece_dims[axis] = sub;
  const Shape piece_shape = Shape::from_dims(piece_dims);
  const std::size_t run = sub * v.inner;

  std::vector<BatchTensor> out;
  out.reserve(parts);
  const double* src = t.data().data();
  for (std::size_t k = 0; k < parts; ++k) {
    BatchTensor piece(piece_shape);
    double* dst = piece.data().data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      const double* from = src + (o * v.extent + k * sub) * v.inner;
      std::copy(from, from + run, dst + o * run);
    }
    out.push_back(std::move(piece));
  }
  block_op_counter() += parts;
  return out;
}

// Concatenates equally shaped tensors along `axis`, in sequence order.
inline BatchTensor stack(std::span<const BatchTensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatchError("stack of an empty sequence");
  const Shape& first = parts.front().shape();
  for (const auto& p : parts) {
    if (!(p.shape() == first)) {
      throw ShapeMismatchError("stack needs identical shapes, got " + first.str() + " and " + p.shape().str());
    }
  }
  block_op_counter() += parts.size();
  if (parts.size() == 1) return parts.front();

  const Extents dims = first.dims();
  const auto v = detail::axis_view(dims, axis);
  Extents out_dims = dims;
  out_dims[axis] = v.extent * parts.size();
  BatchTensor out(Shape::from_dims(out_dims));

  const std::size_t run = v.extent * v.inner;
  const std::size_t out_run = run * parts.size();
  double* dst = out.data().data();
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].data().data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy(src + o * run, src + (o + 1) * run, dst + o * out_run + k * run);
    }
  }
  return out;
}

inline BatchTensor stack(const std::vector<BatchTensor>& parts, std::size_t axis) {
  return stack(std::span<const BatchTensor>(parts), axis);
}

namespace detail {

// Copies the spatial box [src_start, src_start + len) of `src` into `dst` at
// dst_start. Batch and channel axes are carried whole.
inline void copy_box(const BatchTensor& src, const Extents& src_start, BatchTensor& dst,
                     const Extents& dst_start, const Extents& len) {
  const std::size_t d = len.size();
  const std::size_t nc = src.shape().channels();
  const std::size_t run = len[d - 1] * nc;
  if (run == 0) return;
  Extents outer(len.begin(), len.end() - 1);
  if (outer.empty()) outer.push_back(1);
  Extents s(d), t(d);
  for (std::size_t b = 0; b < src.shape().batch(); ++b) {
    for_each_index(outer, [&](const Extents& idx) {
      for (std::size_t i = 0; i + 1 < d; ++i) {
        s[i] = src_start[i] + idx[i];
        t[i] = dst_start[i] + idx[i];
      }
      s[d - 1] = src_start[d - 1];
      t[d - 1] = dst_start[d - 1];
      const double* from = src.data().data() + src.offset(b, s, 0);
      std::copy(from, from + run, dst.data().data() + dst.offset(b, t, 0));
    });
  }
}

}  // namespace detail

// Zero padding of the spatial axes only.
inline BatchTensor pad_zeros(const BatchTensor& t, const Extents& before, const Extents& after) {
  const std::size_t d = t.shape().rank();
  if (before.size() != d || after.size() != d) {
    throw RankError("padding counts must have one entry per spatial dimension");
  }
  Extents ext(d);
  for (std::size_t i = 0; i < d; ++i) ext[i] = t.shape().spatial(i) + before[i] + after[i];
  BatchTensor out(Shape(t.shape().batch(), ext, t.shape().channels()));
  detail::copy_box(t, Extents(d, 0), out, before, t.shape().spatial());
  return out;
}

// Copy of the spatial hyper-rectangle starting at `start` with extents `len`.
inline BatchTensor slice(const BatchTensor& t, const Extents& start, const Extents& len) {
  const std::size_t d = t.shape().rank();
  if (start.size() != d || len.size() != d) {
    throw RankError("slice needs one start and one length per spatial dimension");
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (len[i] == 0 || start[i] + len[i] > t.shape().spatial(i)) {
      throw SliceBoundsError("slice [" + std::to_string(start[i]) + ", " + std::to_string(start[i] + len[i]) +
                             ") out of range in spatial dim " + std::to_string(i) + " of extent " +
                             std::to_string(t.shape().spatial(i)));
    }
  }
  BatchTensor out(Shape(t.shape().batch(), len, t.shape().channels()));
  detail::copy_box(t, start, out, Extents(d, 0), len);
  return out;
}

// Zeros everywhere except a single 1.0 at (batch 0, pos, channel 0).
inline BatchTensor impulse(const Shape& shape, const Extents& pos) {
  if (pos.size() != shape.rank()) throw RankError("impulse position rank mismatch");
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (pos[i] >= shape.spatial(i)) {
      throw SliceBoundsError("impulse position " + std::to_string(pos[i]) + " outside spatial dim " +
                             std::to_string(i) + " of extent " + std::to_string(shape.spatial(i)));
    }
  }
  BatchTensor out(shape);
  out.at(0, std::span<const std::size_t>(pos), 0) = 1.0;
  return out;
}

}  // namespace ddeld
