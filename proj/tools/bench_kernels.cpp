// Compares the serial reference loops against the OpenMP paths on the two
// batch kernels: touching-set classification and periodic-point seeding.

#include <chrono>
#include <cstdio>
#include <vector>

#include "graze/chaosdiag.hpp"
#include "graze/grazing.hpp"
#include "graze/parallel.hpp"

using namespace graze;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

struct bench_result {
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
  bool identical = true;
};

bench_result bench_classification(int grid) {
  const auto sys = make_impact_oscillator();
  const double mu = 0.05;
  integrator_options io;
  io.rel_tol = 1e-8;
  io.abs_tol = 1e-10;
  io.store_dense = true;

  std::vector<double> x1(grid), y1(grid);
  for (int i = 0; i < grid; ++i) {
    x1[i] = 1e-5 + 1e-4 * i / grid;
    y1[i] = -1e-2 + 2e-2 * i / grid;
  }
  auto classify = [&](std::size_t idx, std::vector<int>& out) {
    const vec z0 = assemble_state(x1[idx % grid], y1[idx / grid], vec(0));
    trajectory tr = simulate(sys, state(0.0, z0), 0.5 * sys.period, mu, io);
    out[idx] = tr.impacts.empty() ? 0 : 1;
  };

  const std::size_t n = static_cast<std::size_t>(grid) * grid;
  std::vector<int> serial(n), parallel(n);
  bench_result r;
  double t0 = now_ms();
  par::for_indexed_serial(n, [&](std::size_t i) { classify(i, serial); });
  r.serial_ms = now_ms() - t0;
  t0 = now_ms();
  par::for_indexed(n, [&](std::size_t i) { classify(i, parallel); });
  r.parallel_ms = now_ms() - t0;
  r.identical = serial == parallel;
  return r;
}

bench_result bench_seed_sweep(int per_axis) {
  const auto sys = make_impact_oscillator();
  const double mu = 0.3;
  const double theta = sys.period / 4.0;
  orbit_options opts;
  opts.integrator.rel_tol = 1e-9;
  opts.integrator.abs_tol = 1e-11;

  vec z_star(2);
  z_star << 1.0, 0.0;
  auto seeds = make_seed_grid(z_star, {}, 0.4, per_axis);

  bench_result r;
  int failed = 0;
  double t0 = now_ms();
  auto serial = find_periodic_points(sys, theta, mu, 1, seeds, opts, &failed, 1);
  r.serial_ms = now_ms() - t0;
  t0 = now_ms();
  auto parallel = find_periodic_points(sys, theta, mu, 1, seeds, opts, &failed, 0);
  r.parallel_ms = now_ms() - t0;
  r.identical = serial.size() == parallel.size();
  for (std::size_t i = 0; r.identical && i < serial.size(); ++i) {
    r.identical = (serial[i].z - parallel[i].z).norm() == 0.0;
  }
  return r;
}

void report(const char* name, const bench_result& r) {
  std::printf("%-28s serial %8.1f ms   parallel %8.1f ms   speedup %.2fx   identical %s\n",
              name, r.serial_ms, r.parallel_ms,
              r.parallel_ms > 0 ? r.serial_ms / r.parallel_ms : 0.0,
              r.identical ? "yes" : "NO");
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", par::hardware_jobs());
  report("touch classification 48x48", bench_classification(48));
  report("periodic-point seeds 9x9", bench_seed_sweep(9));
  return 0;
}
