#pragma once

// Dense inner loops used by the executor and the closure oracle. Each kernel
// has a serial reference and an OpenMP version; the parallel versions split
// work over independent output rows, so per-element arithmetic order (and the
// result) is identical to the serial path.

#include <cstdint>
#include <span>
#include <vector>

namespace prunegraph::kernels {

struct ConvGeometry {
  std::int64_t in_ch, in_h, in_w;
  std::int64_t out_ch, out_h, out_w;
  std::int64_t kernel, stride, padding;
};

/// y[o] = b[o] + sum_i W[o, i] x[i], W row-major [out x in].
void linear_serial(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                   std::span<float> y);
void linear_omp(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                std::span<float> y);

/// Direct convolution, weight [out_ch x in_ch x k x k], zero padding.
void conv2d_serial(const ConvGeometry& geo, std::span<const float> weight, std::span<const float> bias,
                   std::span<const float> x, std::span<float> y);
void conv2d_omp(const ConvGeometry& geo, std::span<const float> weight, std::span<const float> bias,
                std::span<const float> x, std::span<float> y);

/// Square boolean matrix stored as 64-bit row words.
class BitMatrix {
 public:
  explicit BitMatrix(std::size_t n = 0);

  std::size_t size() const { return n_; }
  void set(std::size_t i, std::size_t j) { rows_[i * words_ + j / 64] |= std::uint64_t{1} << (j % 64); }
  bool test(std::size_t i, std::size_t j) const { return (rows_[i * words_ + j / 64] >> (j % 64)) & 1u; }
  std::uint64_t* row(std::size_t i) { return rows_.data() + i * words_; }
  const std::uint64_t* row(std::size_t i) const { return rows_.data() + i * words_; }
  std::size_t words() const { return words_; }
  bool operator==(const BitMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> rows_;
};

/// Warshall transitive closure in place (cubic, bit-parallel rows). Callers
/// wanting reflexivity set the diagonal first.
void closure_serial(BitMatrix& m);
void closure_omp(BitMatrix& m);

/// Worker count for the OpenMP kernels (respects PRUNEGRAPH_THREADS).
int thread_count();

}  // namespace prunegraph::kernels
