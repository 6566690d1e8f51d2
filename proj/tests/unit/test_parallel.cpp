#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "graze/grazing.hpp"
#include "graze/parallel.hpp"

using namespace graze;

TEST_CASE("parallel kernel matches the serial reference bitwise", "[parallel]") {
  auto sys = make_impact_oscillator();
  integrator_options io;
  io.rel_tol = 1e-8;
  io.abs_tol = 1e-10;

  const int n = 64;
  auto run = [&](std::vector<double>& out, bool parallel) {
    out.assign(n, 0.0);
    auto body = [&](std::size_t i) {
      vec z0(2);
      z0 << 0.5 + 0.01 * static_cast<double>(i), -0.2;
      trajectory tr = simulate(sys, state(0.0, z0), 4.0, 0.05, io);
      out[i] = tr.final_state.z[0] + 10.0 * tr.impacts.size();
    };
    if (parallel) {
      par::for_indexed(n, body);
    } else {
      par::for_indexed_serial(n, body);
    }
  };

  std::vector<double> serial, parallel, parallel_two;
  run(serial, false);
  run(parallel, true);
  run(parallel_two, true);
  CHECK(serial == parallel);
  CHECK(parallel == parallel_two);
}

TEST_CASE("touching-set classification is schedule-independent", "[parallel]") {
  auto sys = make_impact_oscillator();
  integrator_options io;
  io.rel_tol = 1e-9;
  io.abs_tol = 1e-11;

  // identical spec, different worker counts
  gamma_sample_spec spec;
  spec.y1_values = {-6e-3, -3e-3, 3e-3, 6e-3};
  spec.bisection_steps = 30;
  state z_ref(0.0, vec(2));
  z_ref.z << 1e-4, -1e-3;

  auto sys_const = make_bouncing_ball(-2.0, 0.5);  // f1 = +2: pure lift-off field
  spec.window_back = 1.0;
  spec.window_fwd = 1.0;
  spec.x1_max = 1e-3;

  gamma_sample_spec spec1 = spec;
  spec1.jobs = 1;
  const auto serial = fit_gamma_surface(sys_const, 0.0, 0.0, z_ref, spec1, io);
  gamma_sample_spec specN = spec;
  specN.jobs = 0;
  const auto parallel = fit_gamma_surface(sys_const, 0.0, 0.0, z_ref, specN, io);
  CHECK(serial.c == parallel.c);
  REQUIRE(serial.boundary.size() == parallel.boundary.size());
  for (std::size_t i = 0; i < serial.boundary.size(); ++i) {
    CHECK(serial.boundary[i][1] == parallel.boundary[i][1]);
  }
}
