#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "graze/model.hpp"
#include "oracles.hpp"

using namespace graze;

TEST_CASE("vector field assembles (y1, f1, ...) in state order", "[model]") {
  SECTION("constant downward field") {
    auto sys = make_bouncing_ball(1.0, 0.5);
    state s(0.0, vec(2));
    s.z << 1.0, 0.0;
    const vec f = eval_vector_field(sys, s, 0.0);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == -1.0);
  }

  SECTION("time-dependent forcing enters the acceleration slot") {
    system_definition sys;
    sys.dof = 1;
    sys.period = 2.0 * M_PI;
    sys.accel = [](double t, const vec&, double, vec& a) { a[0] = std::cos(t); };
    sys.restitution = [](double, double) { return 1.0; };
    state s(0.0, vec(2));
    s.z << 0.3, -0.7;
    const vec f = eval_vector_field(sys, s, 0.0);
    CHECK(f[0] == -0.7);
    CHECK(f[1] == Catch::Approx(1.0).margin(1e-15));
  }

  SECTION("two-mass fixture matches an independent re-implementation") {
    coupled_oscillator_params p;
    auto sys = make_coupled_oscillator(p);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      vec z(4);
      z << std::abs(u(rng)), u(rng), u(rng), u(rng);
      const double t = 3.0 * u(rng);
      const double mu = 0.1 * std::abs(u(rng));
      const vec f = eval_vector_field(sys, state(t, z), mu);
      // hand-coded copy of the model equations
      const auto& q = p.primary;
      const double a1 = -2.0 * q.damping * z[1] - q.stiffness * z[0] +
                        p.couple_pos * (z[2] - z[0]) + q.force_offset +
                        (q.ampl_base + mu) * std::cos(q.omega * t);
      const double a2 = -2.0 * p.damping2 * z[3] - p.stiffness2 * z[2] -
                        p.couple_pos * (z[2] - z[0]) + p.couple_vel * z[1];
      CHECK(f[0] == z[1]);
      CHECK(f[1] == Catch::Approx(a1).epsilon(1e-14));
      CHECK(f[2] == z[3]);
      CHECK(f[3] == Catch::Approx(a2).epsilon(1e-14));
    }
  }

  SECTION("non-finite accelerations are reported as model errors") {
    system_definition sys;
    sys.dof = 1;
    sys.accel = [](double, const vec&, double, vec& a) { a[0] = std::nan(""); };
    sys.restitution = [](double, double) { return 0.5; };
    state s(0.0, vec(2));
    s.z << 1.0, 0.0;
    CHECK_THROWS_AS(eval_vector_field(sys, s, 0.0), model_error);
  }
}

TEST_CASE("impact law reverses the normal velocity", "[model]") {
  auto sys = make_bouncing_ball(1.0, 0.5);

  SECTION("half restitution") {
    state s(2.0, vec(2));
    s.z << 0.0, -2.0;
    const state post = apply_impact(sys, s, 0.0);
    CHECK(post.z[1] == 1.0);
    CHECK(post.z[0] == 0.0);
    CHECK(post.t == 2.0);
  }

  SECTION("elastic reversal") {
    auto elastic = make_bouncing_ball(1.0, 1.0);
    state s(0.0, vec(2));
    s.z << 0.0, -3.0;
    CHECK(apply_impact(elastic, s, 0.0).z[1] == 3.0);
  }

  SECTION("velocity-dependent restitution") {
    impact_oscillator_params p;
    p.rest0 = 0.8;
    p.rest_slope = 0.1;
    auto osc = make_impact_oscillator(p);
    state s(0.0, vec(2));
    s.z << 0.0, -0.5;
    CHECK(apply_impact(osc, s, 0.0).z[1] == Catch::Approx(0.425).epsilon(1e-15));
  }

  SECTION("departing states are rejected") {
    state s(0.0, vec(2));
    s.z << 0.0, 0.3;
    CHECK_THROWS_AS(apply_impact(sys, s, 0.0), model_error);
  }

  SECTION("off-wall states are rejected") {
    state s(0.0, vec(2));
    s.z << 0.5, -1.0;
    CHECK_THROWS_AS(apply_impact(sys, s, 0.0), model_error);
  }

  SECTION("elastic impact is an involution up to the sign convention") {
    auto elastic = make_bouncing_ball(1.0, 1.0);
    state s(0.0, vec(2));
    s.z << 0.0, -1.7;
    state once = apply_impact(elastic, s, 0.0);
    once.z[1] = -once.z[1];
    const state twice = apply_impact(elastic, once, 0.0);
    CHECK(twice.z[1] == -s.z[1]);
  }

  SECTION("normal kinetic energy never grows and the tangential block is fixed") {
    coupled_oscillator_params p;
    p.primary.rest0 = 0.8;
    p.primary.rest_slope = 0.05;
    auto sys2 = make_coupled_oscillator(p);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int trial = 0; trial < 25; ++trial) {
      vec z(4);
      z << 0.0, -u(rng), u(rng), u(rng);
      const state post = apply_impact(sys2, state(0.0, z), 0.05);
      CHECK(std::abs(post.z[1]) <= std::abs(z[1]));
      CHECK((zbar_of(post.z) - zbar_of(z)).norm() == 0.0);
    }
  }

  SECTION("restitution outside (0,1] is a model error") {
    impact_oscillator_params p;
    p.rest0 = 0.8;
    p.rest_slope = 0.1;
    auto osc = make_impact_oscillator(p);
    state s(0.0, vec(2));
    s.z << 0.0, -5.0;  // r(5) = 1.3
    CHECK_THROWS_AS(apply_impact(osc, s, 0.0), model_error);
  }
}

TEST_CASE("constrained dynamics pin the contacting mass", "[model]") {
  SECTION("one degree of freedom reduces to an empty block") {
    auto sys = make_bouncing_ball();
    CHECK(sticking_vector_field(sys, 0.0, vec(0), 0.0).size() == 0);
  }

  SECTION("reduced field equals the full field evaluated on the constraint") {
    auto sys = make_coupled_oscillator();
    vec zbar(2);
    zbar << 0.4, -0.2;
    const vec reduced = sticking_vector_field(sys, 1.3, zbar, 0.02);
    const vec full = eval_vector_field(sys, state(1.3, assemble_state(0.0, 0.0, zbar)), 0.02);
    CHECK(reduced[0] == full[2]);
    CHECK(reduced[1] == full[3]);
  }

  SECTION("release indicator is f1 at the pinned state") {
    auto ball = make_bouncing_ball(2.5, 0.5);
    CHECK(release_test(ball, 0.0, vec(0), 0.0) == -2.5);

    system_definition sys;
    sys.dof = 1;
    sys.period = 2.0 * M_PI;
    sys.accel = [](double t, const vec&, double, vec& a) { a[0] = std::sin(t); };
    sys.restitution = [](double, double) { return 0.5; };
    CHECK(release_test(sys, M_PI_2, vec(0), 0.0) == Catch::Approx(1.0));
    CHECK(release_test(sys, 1.5 * M_PI, vec(0), 0.0) == Catch::Approx(-1.0));
  }
}

TEST_CASE("registered systems are time-periodic in the forcing", "[model]") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const char* name : registered_system_names()) {
    auto sys = make_system(name, {});
    for (int trial = 0; trial < 30; ++trial) {
      vec z(sys.state_dim());
      for (int i = 0; i < z.size(); ++i) z[i] = u(rng);
      z[0] = std::abs(z[0]);
      const double t = 5.0 * u(rng);
      const double mu = 0.2 * std::abs(u(rng));
      const vec f0 = eval_vector_field(sys, state(t, z), mu);
      const vec f1 = eval_vector_field(sys, state(t + sys.period, z), mu);
      CHECK((f0 - f1).norm() <= 1e-10 * (1.0 + f0.norm()));
    }
  }
}

TEST_CASE("system registry rejects unknown names and parameters", "[model]") {
  CHECK_THROWS_AS(make_system("pendulum", {}), model_error);
  CHECK_THROWS_AS(make_system("ball", {{"gravityy", 2.0}}), model_error);
  auto sys = make_system("ball", {{"gravity", 2.0}, {"rest", 0.7}});
  state s(0.0, vec(2));
  s.z << 1.0, 0.0;
  CHECK(eval_vector_field(sys, s, 0.0)[1] == -2.0);
}
