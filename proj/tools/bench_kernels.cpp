// Times the serial reference kernels against the OpenMP versions at the
// shapes training actually uses, and reports the speedup.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "aem/kernels.hpp"
#include "aem/rng.hpp"

namespace {

aem::Matrix random_matrix(std::size_t r, std::size_t c, aem::Rng& rng) {
  aem::Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, s);
  }
  return best;
}

struct Case {
  const char* name;
  std::size_t m, n, k;
};

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif

  aem::Rng rng(42);
  // batch x width shapes from the default training configuration, plus one
  // larger case so the parallel path has room to stretch
  const std::vector<Case> cases = {
      {"disc forward  (32x160 * 200x160^T)", 32, 200, 160},
      {"disc hidden   (32x200 * 200x200^T)", 32, 200, 200},
      {"grad accum    (32x200^T * 32x200)", 200, 200, 32},
      {"wide batch    (512x200 * 200x200^T)", 512, 200, 200},
      {"bulk          (1024x512 * 512x512^T)", 1024, 512, 512},
  };

  std::printf("%-38s %12s %12s %9s\n", "case", "serial (ms)", "openmp (ms)",
              "speedup");
  for (const Case& c : cases) {
    const aem::Matrix A = random_matrix(c.m, c.k, rng);
    const aem::Matrix B = random_matrix(c.n, c.k, rng);
    aem::Matrix C1, C2;
    const int reps = c.m * c.n * c.k > (1u << 24) ? 5 : 50;
    const double t_ref =
        time_best_of(reps, [&] { aem::ref::gemm_abt(A, B, C1); });
    const double t_par =
        time_best_of(reps, [&] { aem::par::gemm_abt(A, B, C2); });
    bool identical = C1.data == C2.data;
    std::printf("%-38s %12.3f %12.3f %8.2fx %s\n", c.name, t_ref * 1e3,
                t_par * 1e3, t_ref / t_par, identical ? "" : "MISMATCH");
  }
  return 0;
}
