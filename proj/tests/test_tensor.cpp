#include <gtest/gtest.h>

#include <random>

#include "ddeld/tensor.hpp"
#include "ddeld/windowing.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ddeld;

TEST(Shape, RejectsBadRanksAndExtents) {
  EXPECT_THROW(Shape(1, {}, 1), RankError);
  EXPECT_THROW(Shape(1, {2, 2, 2, 2}, 1), RankError);
  EXPECT_THROW(Shape(0, {4}, 1), DomainError);
  EXPECT_THROW(Shape(1, {4, 0}, 1), DomainError);
  EXPECT_THROW(Shape(1, {4}, 0), DomainError);
}

TEST(Shape, DetectsOverflow) {
  const std::size_t big = std::size_t{1} << 40;
  EXPECT_THROW(Shape(big, {big}, 1), DomainError);
}

TEST(Shape, TotalAndDims) {
  const Shape s(4, {9, 7}, 2);
  EXPECT_EQ(s.total(), 4u * 9 * 7 * 2);
  EXPECT_EQ(s.cells(), 63u);
  EXPECT_EQ(s.str(), "(4,9,7,2)");
  EXPECT_EQ(Shape::from_dims({4, 9, 7, 2}), s);
}

TEST(BatchTensor, BufferMustMatchShape) {
  EXPECT_THROW(BatchTensor(Shape(1, {3}, 1), {1.0, 2.0}), ShapeMismatchError);
}

TEST(BatchTensor, RowMajorLayoutMatchesIndexOracle) {
  const Shape s(2, {3, 4, 5}, 2);
  BatchTensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(i);
  const Extents dims = s.dims();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t k = 0; k < 5; ++k) {
          for (std::size_t c = 0; c < 2; ++c) {
            const std::size_t expect = ((((b * 3 + i) * 4 + j) * 5 + k) * 2 + c);
            EXPECT_EQ(oracle::flat(dims, {b, i, j, k, c}), expect);
            EXPECT_EQ(t.at(b, {i, j, k}, c), static_cast<double>(expect));
          }
        }
      }
    }
  }
}

TEST(Split, ReferenceShape) {
  const auto parts = split(BatchTensor(Shape(4, {9, 9}, 1)), 3, 2);
  ASSERT_EQ(parts.size(), 3u);
  for (const auto& p : parts) EXPECT_EQ(p.shape(), Shape(4, {9, 3}, 1));
}

TEST(Split, OnePartIsIdentity) {
  const BatchTensor t = testutil::random_tensor(Shape(2, {5, 3}, 2), 1);
  const auto parts = split(t, 1, 1);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0], t);
}

TEST(Split, HalvesByIndexArithmetic) {
  // (2,4,1) holding 0..7: batch 0 is 0 1 2 3, batch 1 is 4 5 6 7.
  BatchTensor t(Shape(2, {4}, 1), {0, 1, 2, 3, 4, 5, 6, 7});
  const auto parts = split(t, 2, 1);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].values(), (std::vector<double>{0, 1, 4, 5}));
  EXPECT_EQ(parts[1].values(), (std::vector<double>{2, 3, 6, 7}));
}

TEST(Split, NonDivisibleNamesAxisExtentParts) {
  try {
    split(BatchTensor(Shape(1, {7}, 1)), 3, 1);
    FAIL() << "expected DivisibilityError";
  } catch (const DivisibilityError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("axis 1"), std::string::npos);
    EXPECT_NE(msg.find("extent 7"), std::string::npos);
    EXPECT_NE(msg.find("3 parts"), std::string::npos);
  }
  EXPECT_THROW(split(BatchTensor(Shape(1, {6}, 1)), 0, 1), DivisibilityError);
}

TEST(Stack, ReferenceShape) {
  std::vector<BatchTensor> parts(3, BatchTensor(Shape(4, {9, 3}, 1)));
  EXPECT_EQ(stack(parts, 0).shape(), Shape(12, {9, 3}, 1));
}

TEST(Stack, SingleIsIdentityAndMismatchThrows) {
  const BatchTensor t = testutil::random_tensor(Shape(2, {3}, 1), 2);
  EXPECT_EQ(stack(std::vector<BatchTensor>{t}, 2), t);
  std::vector<BatchTensor> bad{BatchTensor(Shape(1, {3}, 1)), BatchTensor(Shape(1, {4}, 1))};
  EXPECT_THROW(stack(bad, 0), ShapeMismatchError);
}

TEST(Stack, InvertsSplitOnReferenceShape) {
  const BatchTensor t = testutil::random_tensor(Shape(4, {9, 9}, 1), 3);
  EXPECT_EQ(stack(split(t, 3, 2), 2), t);
}

TEST(SplitStack, RoundTripProperty) {
  std::mt19937_64 gen(42);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t d = 1 + gen() % 3;
    Extents spatial(d);
    for (auto& n : spatial) n = 1 + gen() % 6;
    const Shape s(1 + gen() % 3, spatial, 1 + gen() % 2);
    const std::size_t axis = gen() % (d + 2);
    const std::size_t extent = s.dims()[axis];
    std::vector<std::size_t> divisors;
    for (std::size_t k = 1; k <= extent; ++k) {
      if (extent % k == 0) divisors.push_back(k);
    }
    const std::size_t parts = divisors[gen() % divisors.size()];
    const BatchTensor t = testutil::random_tensor(s, gen());
    ASSERT_EQ(stack(split(t, parts, axis), axis), t) << s.str() << " axis " << axis << " parts " << parts;
  }
}

TEST(PadZeros, ReferenceShapeAndSum) {
  const BatchTensor t = testutil::random_tensor(Shape(1, {7, 7}, 1), 4);
  const BatchTensor p = pad_zeros(t, {0, 0}, {2, 2});
  EXPECT_EQ(p.shape(), Shape(1, {9, 9}, 1));
  EXPECT_EQ(p.sum(), t.sum());
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      const double expect = (i < 7 && j < 7) ? t.at(0, {i, j}) : 0.0;
      EXPECT_EQ(p.at(0, {i, j}), expect);
    }
  }
  EXPECT_EQ(pad_zeros(t, {0, 0}, {0, 0}), t);
}

TEST(PadZeros, OffsetRegionHoldsOriginal) {
  const BatchTensor t = testutil::random_tensor(Shape(2, {3, 2}, 2), 5);
  const BatchTensor p = pad_zeros(t, {1, 2}, {3, 0});
  EXPECT_EQ(p.shape(), Shape(2, {7, 4}, 2));
  EXPECT_EQ(slice(p, {1, 2}, {3, 2}), t);
  EXPECT_EQ(p.sum(), t.sum());
}

TEST(Slice, FullExtentIsIdentity) {
  const BatchTensor t = testutil::random_tensor(Shape(2, {4, 5}, 1), 6);
  EXPECT_EQ(slice(t, {0, 0}, {4, 5}), t);
}

TEST(Slice, OutOfRangeNamesDim) {
  const BatchTensor t(Shape(1, {4, 5}, 1));
  try {
    slice(t, {0, 3}, {4, 3});
    FAIL() << "expected SliceBoundsError";
  } catch (const SliceBoundsError& e) {
    EXPECT_NE(std::string(e.what()).find("dim 1"), std::string::npos);
  }
}

TEST(Slice, LosesInformationOutsideRegion) {
  const BatchTensor t = testutil::random_tensor(Shape(1, {5}, 1), 7);
  const BatchTensor back = pad_zeros(slice(t, {1}, {3}), {1}, {1});
  EXPECT_NE(back, t);
  BatchTensor zero_border = t;
  zero_border.at(0, {0}) = 0.0;
  zero_border.at(0, {4}) = 0.0;
  EXPECT_EQ(pad_zeros(slice(zero_border, {1}, {3}), {1}, {1}), zero_border);
}

TEST(Slice, RecoversFieldEmbeddedByExpansion) {
  const BatchTensor t = testutil::random_tensor(Shape(1, {9, 9}, 1), 8);
  const auto [expanded, rec] = expand_domain(t, WindowSpec::uniform(2, 3));
  ASSERT_EQ(expanded.shape(), Shape(1, {11, 11}, 1));
  EXPECT_EQ(slice(expanded, {1, 1}, {9, 9}), t);
}

TEST(Impulse, SumSupportAndBounds) {
  const Shape s(1, {9, 9}, 1);
  const BatchTensor a = impulse(s, {4, 4});
  const BatchTensor b = impulse(s, {2, 7});
  EXPECT_EQ(a.sum(), 1.0);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_FALSE(a.data()[i] != 0.0 && b.data()[i] != 0.0);
  EXPECT_THROW(impulse(s, {9, 0}), SliceBoundsError);
}

TEST(Impulse, SingleStencilFootprintIsThree) {
  const BatchTensor out = apply_box_stencil(impulse(Shape(1, {9, 9}, 1), {4, 4}), 1);
  std::size_t lo = 9, hi = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    if (out.at(0, {i, 4}) != 0.0) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  }
  EXPECT_EQ(hi - lo + 1, 3u);
}

TEST(BlockOps, CounterTracksPieces) {
  reset_block_op_count();
  const auto parts = split(BatchTensor(Shape(1, {6}, 1)), 3, 1);
  EXPECT_EQ(block_op_count(), 3u);
  stack(parts, 0);
  EXPECT_EQ(block_op_count(), 6u);
}
