#include <vector>

#include "doctest.h"
#include "prunegraph/kernels.hpp"
#include "prunegraph/rng.hpp"

using namespace prunegraph;
using namespace prunegraph::kernels;

namespace {

std::vector<float> draw(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

}  // namespace

TEST_CASE("linear kernels agree with a hand computation") {
  const std::vector<float> w{1, 2, 3, 4, 5, 6};  // 2 x 3
  const std::vector<float> b{0.5f, -1};
  const std::vector<float> x{1, 0, -1};
  std::vector<float> y1(2), y2(2);
  linear_serial(w, b, x, y1);
  linear_omp(w, b, x, y2);
  CHECK(y1 == std::vector<float>{-1.5f, -3.0f});
  CHECK(y1 == y2);
}

TEST_CASE("linear serial and parallel are bit-identical on large shapes") {
  const auto w = draw(512 * 784, 1), b = draw(512, 2), x = draw(784, 3);
  std::vector<float> y1(512), y2(512);
  linear_serial(w, b, x, y1);
  linear_omp(w, b, x, y2);
  CHECK(y1 == y2);
}

TEST_CASE("conv2d matches a hand computation with padding and stride") {
  // One 3x3 input channel, one 2x2 all-ones filter, stride 1, padding 0.
  ConvGeometry geo{1, 3, 3, 1, 2, 2, 2, 1, 0};
  const std::vector<float> x{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::vector<float> w{1, 1, 1, 1}, b{0};
  std::vector<float> y(4);
  conv2d_serial(geo, w, b, x, y);
  CHECK(y == std::vector<float>{12, 16, 24, 28});

  // Padding 1, stride 2 on the same input: 2x2 output of corner windows.
  ConvGeometry padded{1, 3, 3, 1, 2, 2, 2, 2, 1};
  conv2d_serial(padded, w, b, x, y);
  CHECK(y == std::vector<float>{1, 2 + 3, 4 + 7, 5 + 6 + 8 + 9});
}

TEST_CASE("conv2d serial and parallel are bit-identical") {
  ConvGeometry geo{8, 14, 14, 16, 7, 7, 3, 2, 1};
  const auto w = draw(16 * 8 * 9, 4), b = draw(16, 5), x = draw(8 * 14 * 14, 6);
  std::vector<float> y1(16 * 49), y2(16 * 49);
  conv2d_serial(geo, w, b, x, y1);
  conv2d_omp(geo, w, b, x, y2);
  CHECK(y1 == y2);
}

TEST_CASE("closure kernels compute reachability") {
  BitMatrix m(5);
  m.set(0, 1);
  m.set(1, 2);
  m.set(3, 4);
  BitMatrix p = m;
  closure_serial(m);
  closure_omp(p);
  CHECK(m == p);
  CHECK(m.test(0, 2));
  CHECK(m.test(3, 4));
  CHECK_FALSE(m.test(2, 0));
  CHECK_FALSE(m.test(0, 3));
  for (std::size_t i = 0; i < 5; ++i) CHECK(m.test(i, i));
}

TEST_CASE("closure serial and parallel agree on a random sparse relation") {
  Rng rng(42);
  BitMatrix m(700);
  for (int k = 0; k < 900; ++k) m.set(rng.next() % 700, rng.next() % 700);
  BitMatrix p = m;
  closure_serial(m);
  closure_omp(p);
  CHECK(m == p);
}
