#pragma once

// Domain expansion, window decomposition (chunk_domain), its inverse
// (window_patch) and prediction integration over all window offsets.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ddeld/errors.hpp"
#include "ddeld/predictor.hpp"
#include "ddeld/tensor.hpp"

namespace ddeld {

// Per-dimension window sizes. Sizes are odd and >= 3 so each window has a
// unique center cell.
class WindowSpec {
public:
  WindowSpec() = default;

  explicit WindowSpec(Extents sizes) : sizes_(std::move(sizes)) {
    if (sizes_.empty() || sizes_.size() > kMaxSpatialRank) {
      throw RankError("window rank must be in 1..3");
    }
    for (std::size_t w : sizes_) {
      if (w < 3 || w % 2 == 0) {
        throw DomainError("window sizes must be odd and >= 3, got " + to_string(sizes_));
      }
    }
  }

  static WindowSpec uniform(std::size_t rank, std::size_t size) { return WindowSpec(Extents(rank, size)); }

  const Extents& sizes() const noexcept { return sizes_; }
  std::size_t size(std::size_t i) const { return sizes_.at(i); }
  std::size_t rank() const noexcept { return sizes_.size(); }
  std::size_t center(std::size_t i) const { return (sizes_.at(i) - 1) / 2; }
  std::size_t cells() const { return checked_product(sizes_); }

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;

private:
  Extents sizes_;
};

struct ExpansionRecord {
  Extents original;  // N_i
  Extents step1;     // after padding each extent up to a multiple of W_i
  Extents expanded;  // N_i^new
  Extents blocks;    // B_i
  Extents lead;      // zeros padded before the data, floor(W_i / 2)

  friend bool operator==(const ExpansionRecord&, const ExpansionRecord&) = default;
};

inline ExpansionRecord expansion_for(const Extents& original, const WindowSpec& w) {
  if (original.size() != w.rank()) {
    throw RankError("field has spatial rank " + std::to_string(original.size()) + ", window has rank " +
                    std::to_string(w.rank()));
  }
  ExpansionRecord r;
  r.original = original;
  for (std::size_t i = 0; i < w.rank(); ++i) {
    const std::size_t n = original[i];
    const std::size_t wi = w.size(i);
    const std::size_t multiple = ((n - 1) / wi + 1) * wi;
    r.step1.push_back(multiple);
    r.lead.push_back(wi / 2);
    r.expanded.push_back(multiple + wi / 2 + (wi - 1) / 2);
    r.blocks.push_back(r.expanded.back() / wi);
  }
  return r;
}

// Two-step zero padding: first up to a multiple of W_i at the end, then
// floor(W_i/2) zeros before and floor((W_i-1)/2) after.
inline std::pair<BatchTensor, ExpansionRecord> expand_domain(const BatchTensor& t, const WindowSpec& w) {
  ExpansionRecord r = expansion_for(t.shape().spatial(), w);
  Extents after(w.rank());
  for (std::size_t i = 0; i < w.rank(); ++i) {
    after[i] = (r.step1[i] - r.original[i]) + (w.size(i) - 1) / 2;
  }
  return {pad_zeros(t, r.lead, after), std::move(r)};
}

// Decomposes (N_b, N_1..N_d, N_c) into windows (N_b * prod B_i, W_1..W_d, N_c):
// for each spatial axis in turn, split it into B_i blocks and stack the
// blocks along the batch axis.
inline BatchTensor chunk_domain(const BatchTensor& t, const Extents& blocks) {
  const std::size_t d = t.shape().rank();
  if (blocks.size() != d) throw RankError("block counts must match the spatial rank");
  BatchTensor x = t;
  for (std::size_t i = 0; i < d; ++i) {
    x = stack(split(x, blocks[i], i + 1), 0);
  }
  return x;
}

// Inverse of chunk_domain. At iteration i the batch axis is cut into pieces
// of V = batch * prod_{j <= d-i-2} B_j entries, and the pieces are stacked
// along spatial axis d-i.
inline BatchTensor window_patch(const BatchTensor& t, std::size_t batch, const Extents& blocks) {
  const std::size_t d = t.shape().rank();
  if (blocks.size() != d) throw RankError("block counts must match the spatial rank");
  const std::size_t expected = batch * checked_product(blocks);
  if (batch == 0 || t.shape().batch() != expected) {
    throw ShapeMismatchError("window batch " + std::to_string(t.shape().batch()) + " != batch " +
                             std::to_string(batch) + " x blocks " + to_string(blocks));
  }
  BatchTensor x = t;
  for (std::size_t i = 0; i < d; ++i) {
    std::size_t v = batch;
    for (std::size_t j = 0; j + i + 2 <= d; ++j) v *= blocks[j];
    x = stack(split(x, x.shape().batch() / v, 0), d - i);
  }
  return x;
}

// Lexicographic Cartesian product {0..W_1-1} x .. x {0..W_d-1}.
inline std::vector<Extents> window_offsets(const WindowSpec& w) {
  std::vector<Extents> out;
  out.reserve(w.cells());
  detail::for_each_index(w.sizes(), [&](const Extents& idx) { out.push_back(idx); });
  return out;
}

struct IntegrationOptions {
  unsigned threads = 1;
  // Optional permutation of offset indices; empty means lexicographic order.
  std::vector<std::size_t> offset_order;
  // When set, resized to the spatial cell count and incremented once per
  // written cell (batch 0, channel 0).
  std::vector<std::uint32_t>* write_counts = nullptr;
};

// Assembles a full-domain prediction from prod(W_i) shifted decompositions.
// Every original cell is the center of exactly one window across all offsets.
inline BatchTensor integrate_predictions(const BatchTensor& t, const WindowSpec& w, const Predictor& predictor,
                                         const IntegrationOptions& opts = {}) {
  const Shape& shape = t.shape();
  const std::size_t d = shape.rank();
  auto [expanded, rec] = expand_domain(t, w);

  const std::vector<Extents> offsets = window_offsets(w);
  std::vector<std::size_t> order = opts.offset_order;
  if (order.empty()) {
    order.resize(offsets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  } else {
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i] != i || sorted.size() != offsets.size()) {
        throw DomainError("offset_order must be a permutation of 0.." + std::to_string(offsets.size() - 1));
      }
    }
  }

  Extents span_len(d);
  for (std::size_t i = 0; i < d; ++i) span_len[i] = w.size(i) * rec.blocks[i];

  if (opts.write_counts) opts.write_counts->assign(shape.cells(), 0);
  BatchTensor out(shape);
  const Shape expected_centers(shape.batch() * checked_product(rec.blocks), Extents(d, 1), shape.channels());

  auto run_offset = [&](const Extents& p) {
    BatchTensor windows = chunk_domain(slice(expanded, p, span_len), rec.blocks);
    BatchTensor centers = predictor.predict_batch(windows);
    if (!(centers.shape() == expected_centers)) {
      throw PredictorContractError(predictor.name() + " returned " + centers.shape().str() + ", expected " +
                                   expected_centers.str());
    }
    const BatchTensor grid = window_patch(centers, shape.batch(), rec.blocks);
    // Window k along dim i is centered at expanded coordinate
    // p_i + k_i W_i + (W_i-1)/2, i.e. original coordinate p_i + k_i W_i.
    Extents x(d);
    detail::for_each_index(rec.blocks, [&](const Extents& k) {
      for (std::size_t i = 0; i < d; ++i) {
        x[i] = p[i] + k[i] * w.size(i);
        if (x[i] >= shape.spatial(i)) return;
      }
      for (std::size_t b = 0; b < shape.batch(); ++b) {
        const double* src = grid.data().data() + grid.offset(b, k, 0);
        double* dst = out.data().data() + out.offset(b, x, 0);
        std::copy(src, src + shape.channels(), dst);
      }
      if (opts.write_counts) {
        std::size_t flat = 0;
        for (std::size_t i = 0; i < d; ++i) flat = flat * shape.spatial(i) + x[i];
        std::atomic_ref<std::uint32_t>((*opts.write_counts)[flat]).fetch_add(1);
      }
    });
  };

  unsigned threads = std::max(1u, opts.threads);
  if (!predictor.concurrency_safe()) threads = 1;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, order.size()));

  if (threads == 1) {
    for (std::size_t idx : order) run_offset(offsets[idx]);
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned tid = 0; tid < threads; ++tid) {
      pool.emplace_back([&, tid] {
        try {
          for (std::size_t n; (n = next.fetch_add(1)) < order.size();) run_offset(offsets[order[n]]);
        } catch (...) {
          errors[tid] = std::current_exception();
          next.store(order.size());
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// One application of a dense all-ones stencil of the given radius under
// zero extension.
inline BatchTensor apply_box_stencil(const BatchTensor& t, std::size_t radius) {
  const Shape& s = t.shape();
  const std::size_t d = s.rank();
  BatchTensor out(s);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const Extents box(d, 2 * radius + 1);
  Extents src(d);
  for (std::size_t b = 0; b < s.batch(); ++b) {
    detail::for_each_index(s.spatial(), [&](const Extents& x) {
      for (std::size_t c = 0; c < s.channels(); ++c) {
        double acc = 0.0;
        detail::for_each_index(box, [&](const Extents& o) {
          for (std::size_t i = 0; i < d; ++i) {
            const auto pos = static_cast<std::ptrdiff_t>(x[i]) + static_cast<std::ptrdiff_t>(o[i]) - r;
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.spatial(i))) return;
            src[i] = static_cast<std::size_t>(pos);
          }
          acc += t.at(b, std::span<const std::size_t>(src), c);
        });
        out.at(b, x, c) = acc;
      }
    });
  }
  return out;
}

// Width, per dimension, of the nonzero support after `layers` compositions of
// a radius-`stencil_radius` local operator applied to a centered impulse.
inline Extents receptive_field_probe(std::size_t stencil_radius, std::size_t layers, std::size_t probe_extent,
                                     std::size_t rank = 2) {
  if (probe_extent <= 2 * layers * stencil_radius) {
    throw ProbeDomainTooSmall("footprint " + std::to_string(2 * layers * stencil_radius + 1) +
                              " does not fit in probe extent " + std::to_string(probe_extent));
  }
  const Shape shape(1, Extents(rank, probe_extent), 1);
  BatchTensor field = impulse(shape, Extents(rank, probe_extent / 2));
  for (std::size_t l = 0; l < layers; ++l) field = apply_box_stencil(field, stencil_radius);

  Extents lo(rank, probe_extent), hi(rank, 0);
  bool any = false;
  detail::for_each_index(shape.spatial(), [&](const Extents& x) {
    if (field.at(0, x, 0) == 0.0) return;
    any = true;
    for (std::size_t i = 0; i < rank; ++i) {
      lo[i] = std::min(lo[i], x[i]);
      hi[i] = std::max(hi[i], x[i]);
    }
  });
  Extents width(rank, 0);
  if (any) {
    for (std::size_t i = 0; i < rank; ++i) width[i] = hi[i] - lo[i] + 1;
  }
  return width;
}

}  // namespace ddeld
