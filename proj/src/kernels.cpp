#include "prunegraph/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace prunegraph::kernels {

int thread_count() {
  int cap = 0;
  if (const char* env = std::getenv("PRUNEGRAPH_THREADS")) cap = std::atoi(env);
#ifdef _OPENMP
  const int avail = omp_get_max_threads();
#else
  const int avail = 1;
#endif
  return cap > 0 ? std::min(cap, avail) : avail;
}

namespace {

inline float linear_row(const float* w, float b, const float* x, std::size_t in) {
  double acc = b;
  for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(w[i]) * x[i];
  return static_cast<float>(acc);
}

inline float conv_point(const ConvGeometry& g, const float* weight, float bias, const float* x, std::int64_t o,
                        std::int64_t oy, std::int64_t ox) {
  double acc = bias;
  for (std::int64_t c = 0; c < g.in_ch; ++c) {
    const float* wk = weight + ((o * g.in_ch + c) * g.kernel) * g.kernel;
    const float* xc = x + c * g.in_h * g.in_w;
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      const std::int64_t iy = oy * g.stride - g.padding + ky;
      if (iy < 0 || iy >= g.in_h) continue;
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        const std::int64_t ix = ox * g.stride - g.padding + kx;
        if (ix < 0 || ix >= g.in_w) continue;
        acc += static_cast<double>(wk[ky * g.kernel + kx]) * xc[iy * g.in_w + ix];
      }
    }
  }
  return static_cast<float>(acc);
}

}  // namespace

void linear_serial(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                   std::span<float> y) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) y[o] = linear_row(weight.data() + o * in, bias[o], x.data(), in);
}

void linear_omp(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                std::span<float> y) {
  const std::size_t in = x.size();
  const auto out = static_cast<std::int64_t>(y.size());
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (out * static_cast<std::int64_t>(in) > 32768)
  for (std::int64_t o = 0; o < out; ++o) y[o] = linear_row(weight.data() + o * in, bias[o], x.data(), in);
}

void conv2d_serial(const ConvGeometry& g, std::span<const float> weight, std::span<const float> bias,
                   std::span<const float> x, std::span<float> y) {
  for (std::int64_t o = 0; o < g.out_ch; ++o)
    for (std::int64_t oy = 0; oy < g.out_h; ++oy)
      for (std::int64_t ox = 0; ox < g.out_w; ++ox)
        y[(o * g.out_h + oy) * g.out_w + ox] = conv_point(g, weight.data(), bias[o], x.data(), o, oy, ox);
}

void conv2d_omp(const ConvGeometry& g, std::span<const float> weight, std::span<const float> bias,
                std::span<const float> x, std::span<float> y) {
  const std::int64_t planes = g.out_ch * g.out_h;
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t o = p / g.out_h;
    const std::int64_t oy = p % g.out_h;
    for (std::int64_t ox = 0; ox < g.out_w; ++ox)
      y[(o * g.out_h + oy) * g.out_w + ox] = conv_point(g, weight.data(), bias[o], x.data(), o, oy, ox);
  }
}

BitMatrix::BitMatrix(std::size_t n) : n_(n), words_((n + 63) / 64), rows_(n * ((n + 63) / 64), 0) {
  for (std::size_t i = 0; i < n; ++i) set(i, i);
}

void closure_serial(BitMatrix& m) {
  const std::size_t n = m.size();
  const std::size_t words = m.words();
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t* rk = m.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      if (!m.test(i, k)) continue;
      std::uint64_t* ri = m.row(i);
      for (std::size_t w = 0; w < words; ++w) ri[w] |= rk[w];
    }
  }
}

void closure_omp(BitMatrix& m) {
  const auto n = static_cast<std::int64_t>(m.size());
  const std::size_t words = m.words();
  for (std::int64_t k = 0; k < n; ++k) {
    // Row k is invariant during step k: R[k] |= R[k] when R[k][k] is set.
    const std::uint64_t* rk = m.row(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (n > 512)
    for (std::int64_t i = 0; i < n; ++i) {
      if (!m.test(static_cast<std::size_t>(i), static_cast<std::size_t>(k))) continue;
      std::uint64_t* ri = m.row(static_cast<std::size_t>(i));
      for (std::size_t w = 0; w < words; ++w) ri[w] |= rk[w];
    }
  }
}

}  // namespace prunegraph::kernels
