#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace gptrans;

TEST(Tensor, DataLengthMatchesShape) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, RowMajorIndexing) {
  Tensor<int> t({2, 3});
  for (std::size_t i = 0; i < 6; ++i) t[i] = static_cast<int>(i);
  EXPECT_EQ(t.at({1, 2}), 5);
  EXPECT_EQ(t.at({0, 1}), 1);
  EXPECT_THROW((void)t.at({2, 0}), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor<double> t({2, 3}, 1.5);
  t.reshape({3, 2});
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshape({4, 2}), ShapeError);
}

TEST(Tensor, BroadcastShape) {
  EXPECT_EQ(broadcast_shape({2, 1, 3}, {4, 1}), (Shape{2, 4, 3}));
  EXPECT_EQ(broadcast_shape({}, {5}), (Shape{5}));
  EXPECT_THROW(broadcast_shape({2, 3}, {4, 3}), ShapeError);
}

TEST(Tensor, CastRoundTrip) {
  Tensor<double> t({3}, std::vector<double>{0.5, -1.25, 2.0});
  EXPECT_EQ(t.cast<float>().cast<double>(), t);
}
