// Serial reference vs OpenMP kernels: best-of-N wall time and a result check.
//   kernel_bench [--reps N] [--threads T]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "CLI11.hpp"
#include "prunegraph/kernels.hpp"

namespace k = prunegraph::kernels;

namespace {

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

std::vector<float> random_vec(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void report(const char* name, double serial, double omp, bool same) {
  std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, serial, omp, serial / omp,
              same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark"};
  int reps = 5;
  int threads = 0;
  app.add_option("--reps", reps)->capture_default_str();
  app.add_option("--threads", threads, "Sets PRUNEGRAPH_THREADS for this run");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) setenv("PRUNEGRAPH_THREADS", std::to_string(threads).c_str(), 1);
  std::printf("threads: %d\n", k::thread_count());

  std::mt19937 rng(42);
  {
    const std::size_t in = 4096, out = 4096;
    const auto w = random_vec(in * out, rng), b = random_vec(out, rng), x = random_vec(in, rng);
    std::vector<float> ys(out), yo(out);
    const double s = best_ms(reps, [&] { k::linear_serial(w, b, x, ys); });
    const double o = best_ms(reps, [&] { k::linear_omp(w, b, x, yo); });
    report("linear 4096x4096", s, o, ys == yo);
  }
  {
    const k::ConvGeometry geo{32, 56, 56, 64, 56, 56, 3, 1, 1};
    const auto w = random_vec(64 * 32 * 9, rng), b = random_vec(64, rng), x = random_vec(32 * 56 * 56, rng);
    std::vector<float> ys(64 * 56 * 56), yo(ys.size());
    const double s = best_ms(reps, [&] { k::conv2d_serial(geo, w, b, x, ys); });
    const double o = best_ms(reps, [&] { k::conv2d_omp(geo, w, b, x, yo); });
    report("conv 32->64 3x3 56x56", s, o, ys == yo);
  }
  {
    const std::size_t n = 4000;
    k::BitMatrix base(n);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t e = 0; e < n; ++e) base.set(pick(rng), pick(rng));
    k::BitMatrix ms = base, mo = base;
    const double s = best_ms(1, [&] { k::closure_serial(ms); });
    const double o = best_ms(1, [&] { k::closure_omp(mo); });
    report("closure n=4000", s, o, ms == mo);
  }
  return 0;
}
