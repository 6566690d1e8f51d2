#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "graze/integrator.hpp"
#include "oracles.hpp"

using namespace graze;

namespace {

integrator_options tight() {
  integrator_options o;
  o.rel_tol = 1e-12;
  o.abs_tol = 1e-14;
  return o;
}

}  // namespace

TEST_CASE("free flight stops exactly at the wall", "[integrator]") {
  auto sys = make_bouncing_ball(1.0, 0.5);

  SECTION("parabolic drop: contact time and speed are closed-form") {
    state s0(0.0, vec(2));
    s0.z << 1.0, 0.0;
    const auto arc = flow_smooth(sys, s0, 10.0, 0.0, tight());
    REQUIRE(arc.reason == arc_end::wall_crossing);
    CHECK(arc.end.t == Catch::Approx(std::sqrt(2.0)).margin(1e-9));
    CHECK(arc.end.z[0] == Catch::Approx(0.0).margin(1e-10));
    CHECK(arc.end.z[1] == Catch::Approx(-std::sqrt(2.0)).margin(1e-9));
  }

  SECTION("dense-output root finder reproduces the contact time") {
    state s0(0.0, vec(2));
    s0.z << 1.0, 0.0;
    const auto arc = flow_smooth(sys, s0, 10.0, 0.0, tight());
    auto tau = locate_impact(arc, tight());
    REQUIRE(tau.has_value());
    CHECK(*tau == Catch::Approx(std::sqrt(2.0)).margin(1e-10));
  }

  SECTION("a non-crossing parabola yields no bracket") {
    // x(t) = (t-1)^2 under f = 2: touches at t=1 and lifts away
    system_definition touch;
    touch.dof = 1;
    touch.period = 1.0;
    touch.accel = [](double, const vec&, double, vec& a) { a[0] = 2.0; };
    touch.restitution = [](double, double) { return 0.5; };
    state s0(0.0, vec(2));
    s0.z << 1.0, -2.0;
    const auto arc = flow_smooth(touch, s0, 3.0, 0.0, tight());
    CHECK(arc.reason == arc_end::wall_grazing);  // tangential contact detected
    CHECK(locate_impact(arc, tight()) == std::nullopt);
    CHECK(arc.end.t == Catch::Approx(1.0).margin(1e-9));
    CHECK(std::abs(arc.end.z[1]) < 1e-6);
  }

  SECTION("departing tangency at the wall lifts off cleanly") {
    system_definition lift;
    lift.dof = 1;
    lift.period = 1.0;
    lift.accel = [](double, const vec&, double, vec& a) { a[0] = 1.5; };
    lift.restitution = [](double, double) { return 0.5; };
    state s0(0.0, vec(2));
    s0.z << 0.0, 0.0;
    const auto arc = flow_smooth(lift, s0, 2.0, 0.0, tight());
    CHECK(arc.reason == arc_end::reached_t_end);
    CHECK(arc.end.z[0] == Catch::Approx(3.0).epsilon(1e-10));  // 1.5 t^2 / 2 at t=2
  }

  SECTION("forced linear motion matches the closed form over one period") {
    impact_oscillator_params p;
    p.ampl_base = 0.2;  // wide clearance from the wall for this window
    auto osc = make_impact_oscillator(p);
    oracles::forced_oscillator_solution ref{p.damping, p.stiffness, p.force_offset,
                                            p.ampl_base, p.omega};
    state s0(0.0, vec(2));
    s0.z << 1.4, 0.2;
    const auto arc = flow_smooth(osc, s0, 2.0 * M_PI, 0.0, tight());
    REQUIRE(arc.reason == arc_end::reached_t_end);
    const vec expect = ref.eval(0.0, s0.z, 2.0 * M_PI);
    CHECK((arc.end.z - expect).norm() <= 1e-9 * expect.norm());
  }
}

TEST_CASE("interpolant stays consistent with the field", "[integrator]") {
  impact_oscillator_params p;
  p.ampl_base = 0.2;
  auto osc = make_impact_oscillator(p);
  integrator_options opts;
  opts.rel_tol = 1e-10;
  opts.abs_tol = 1e-12;
  state s0(0.0, vec(2));
  s0.z << 1.4, 0.2;
  const auto arc = flow_smooth(osc, s0, 2.0 * M_PI, 0.0, opts);
  REQUIRE(arc.steps.size() > 5);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto& st = arc.steps[static_cast<std::size_t>(u(rng) * arc.steps.size()) %
                               arc.steps.size()];
    const double t = st.t0 + u(rng) * (st.t1 - st.t0);
    const vec z = st.eval(t);
    const vec zdot = st.eval_derivative(t);
    const vec f = eval_vector_field(osc, state(t, z), 0.0);
    CHECK((zdot - f).norm() <= 10.0 * opts.rel_tol * f.norm());
  }
}

TEST_CASE("bouncing ball follows the geometric cascade into rest", "[integrator]") {
  auto sys = make_bouncing_ball(1.0, 0.5);
  integrator_options opts;
  opts.rel_tol = 1e-11;
  opts.abs_tol = 1e-13;
  state s0(0.0, vec(2));
  s0.z << 1.0, 0.0;
  const trajectory tr = simulate(sys, s0, 6.0, 0.0, opts);

  // impact times: t_1 = sqrt(2), t_{k+1} = t_k + Y_k, Y_{k+1} = Y_k / 2
  REQUIRE(tr.impacts.size() >= 8);
  double t_expect = std::sqrt(2.0);
  double y_expect = std::sqrt(2.0);
  for (int k = 0; k < 8; ++k) {
    CHECK(tr.impacts[k].tau == Catch::Approx(t_expect).margin(1e-8));
    CHECK(tr.impacts[k].approach_speed == Catch::Approx(y_expect).margin(1e-8));
    t_expect += y_expect;
    y_expect *= 0.5;
  }
  CHECK(static_cast<int>(tr.impacts.size()) <= opts.max_impacts + 1);
  REQUIRE(tr.sticking.size() == 1);
  CHECK_FALSE(tr.sticking[0].released);  // constant gravity never releases
  CHECK(tr.sticking[0].t_enter <= 3.0 * std::sqrt(2.0) + 1e-6);
  CHECK(tr.final_state.z[0] == 0.0);
  CHECK(tr.final_state.z[1] == 0.0);
  CHECK(tr.min_x1() >= -opts.tol_event);
}

TEST_CASE("sticking releases at the upward force crossing", "[integrator]") {
  // f1 = sin t: entering the constraint during the negative half-wave holds
  // the mass until t = 2 pi
  system_definition sys;
  sys.dof = 1;
  sys.period = 2.0 * M_PI;
  sys.accel = [](double t, const vec&, double, vec& a) { a[0] = std::sin(t); };
  sys.restitution = [](double, double) { return 0.5; };

  state s0(M_PI + 0.1, vec(2));
  s0.z << 0.0, 0.0;
  const trajectory tr = simulate(sys, s0, 9.0, 0.0, integrator_options{});
  REQUIRE(tr.sticking.size() == 1);
  CHECK(tr.sticking[0].t_release == Catch::Approx(2.0 * M_PI).margin(1e-6));
  CHECK(tr.final_state.z[0] > 0.0);  // airborne after release
}

TEST_CASE("two-mass sticking matches a stiff penalty wall", "[integrator]") {
  coupled_oscillator_params p;
  p.primary.force_offset = -0.6;  // hold the contact mass down
  p.primary.ampl_base = 0.2;
  auto sys = make_coupled_oscillator(p);

  vec zbar0(2);
  zbar0 << 0.3, 0.1;
  const double t0 = 0.0, t1 = 2.0;

  // reduced flow
  integrator_options opts;
  state s0(t0, assemble_state(0.0, 0.0, zbar0));
  const trajectory tr = simulate(sys, s0, t1, 0.0, opts);
  REQUIRE_FALSE(tr.sticking.empty());
  const vec zbar_reduced = zbar_of(tr.final_state.z);

  // full flow with a stiff elastic wall replacing the constraint
  const double wall_k = 4e6, wall_c = 4e3;
  coupled_oscillator_params q = p;
  system_definition penalty = make_coupled_oscillator(q);
  auto base_accel = penalty.accel;
  penalty.accel = [base_accel, wall_k, wall_c](double t, const vec& z, double mu, vec& a) {
    base_accel(t, z, mu, a);
    if (z[0] < 0.0) a[0] += -wall_k * z[0] - wall_c * z[1];
  };
  penalty.accel_jac = nullptr;
  integrator_options stiff;
  stiff.rel_tol = 1e-8;
  stiff.abs_tol = 1e-10;
  stiff.max_step = 1e-3;
  const auto arc = flow_smooth(penalty, state(t0, assemble_state(-1e-9, 0.0, zbar0)),
                               t1, 0.0, stiff);
  const vec zbar_penalty = zbar_of(arc.end.z);
  CHECK((zbar_reduced - zbar_penalty).norm() < 1e-4);
}

TEST_CASE("stroboscopic map composes like the flow", "[integrator]") {
  SECTION("free system at rest is a fixed point") {
    system_definition sys;
    sys.dof = 1;
    sys.period = 1.0;
    sys.accel = [](double, const vec&, double, vec& a) { a[0] = 0.0; };
    sys.restitution = [](double, double) { return 1.0; };
    vec z0(2);
    z0 << 1.0, 0.0;
    const vec w = stroboscopic_map(sys, 0.25, z0, 0.0, integrator_options{});
    CHECK((w - z0).norm() < 1e-12);
  }

  SECTION("two applications equal the double-period map") {
    impact_oscillator_params p;
    auto osc = make_impact_oscillator(p);
    const double mu = 0.2, theta = M_PI / 2.0;
    integrator_options opts;
    opts.rel_tol = 1e-11;
    opts.abs_tol = 1e-13;
    vec z0(2);
    z0 << 0.8, 0.3;
    const vec once = stroboscopic_map(osc, theta, z0, mu, opts);
    const vec twice = stroboscopic_map(osc, theta, once, mu, opts);
    const trajectory direct =
        simulate(osc, state(-theta, z0), 2.0 * osc.period - theta, mu, opts);
    CHECK((twice - direct.final_state.z).norm() < 1e-8);
  }
}

TEST_CASE("impact count is stable and the map is C1-consistent", "[integrator]") {
  impact_oscillator_params p;
  auto osc = make_impact_oscillator(p);
  const double mu = 0.2, theta = M_PI / 2.0;
  integrator_options opts;
  opts.rel_tol = 1e-12;
  opts.abs_tol = 1e-14;

  vec z0(2);
  z0 << 0.8, 0.3;
  auto count_impacts = [&](const vec& z) {
    const trajectory tr = simulate(osc, state(-theta, z), osc.period - theta, mu, opts);
    return tr.transversal_impact_count(-theta, osc.period - theta);
  };
  const int base_count = count_impacts(z0);
  REQUIRE(base_count >= 1);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    vec d(2);
    d << gauss(rng), gauss(rng);
    d *= 1e-6 / d.norm();
    CHECK(count_impacts(z0 + d) == base_count);
  }

  // Richardson: directional derivative estimates converge with order >= 1.9
  auto map = [&](const vec& z) { return stroboscopic_map(osc, theta, z, mu, opts); };
  vec dir(2);
  dir << 1.0, -0.5;
  dir /= dir.norm();
  // steps large enough that the O(h^2) truncation dominates the solver noise
  auto fd = [&](double h) { return vec((map(z0 + h * dir) - map(z0 - h * dir)) / (2.0 * h)); };
  const vec d1 = fd(4e-3), d2 = fd(2e-3), d3 = fd(1e-3);
  const double e1 = (d1 - d2).norm(), e2 = (d2 - d3).norm();
  const double order = std::log2(e1 / e2);
  CHECK(order >= 1.9);
}

TEST_CASE("elastic dynamics replay backward to the initial state", "[integrator]") {
  auto sys = make_bouncing_ball(1.0, 1.0);
  integrator_options opts;
  opts.rel_tol = 1e-11;
  opts.abs_tol = 1e-13;
  state s0(0.0, vec(2));
  s0.z << 1.0, 0.3;
  const trajectory fwd = simulate(sys, s0, 7.3, 0.0, opts);
  REQUIRE(fwd.impacts.size() >= 2);
  const trajectory bwd = simulate_backward(sys, fwd.final_state, 0.0, 0.0, opts);
  REQUIRE_FALSE(bwd.backward_stop);
  CHECK(bwd.impacts.size() == fwd.impacts.size());
  CHECK((bwd.final_state.z - s0.z).norm() < 1e-7);
}

TEST_CASE("backward map inverts the forward map", "[integrator]") {
  impact_oscillator_params p;
  p.rest_slope = 0.1;  // exercise the restitution inversion
  auto osc = make_impact_oscillator(p);
  const double mu = 0.2, theta = M_PI / 2.0;
  integrator_options opts;
  opts.rel_tol = 1e-11;
  opts.abs_tol = 1e-13;
  vec z0(2);
  z0 << 0.8, 0.3;
  const vec w = stroboscopic_map(osc, theta, z0, mu, opts);
  const vec back = stroboscopic_map_inverse(osc, theta, w, mu, opts);
  CHECK((back - z0).norm() < 1e-8);
}

TEST_CASE("every contact is either transversal or flagged grazing", "[integrator]") {
  impact_oscillator_params p;
  auto osc = make_impact_oscillator(p);
  integrator_options opts;
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    vec z0(2);
    z0 << 0.4 + u(rng), u(rng) - 0.5;
    const trajectory tr = simulate(osc, state(0.0, z0), 8.0 * M_PI, 0.02 + 0.1 * u(rng), opts);
    for (const auto& ev : tr.impacts) {
      if (ev.grazing) {
        CHECK(ev.approach_speed < opts.graze_tol);
      } else {
        CHECK(-ev.z_pre[1] >= opts.graze_tol);
        CHECK(std::abs(ev.z_pre[0]) <= 10.0 * opts.tol_event + 1e-9);
      }
    }
  }
}

TEST_CASE("degenerate tangency stops with a diagnostic", "[integrator]") {
  system_definition sys;
  sys.dof = 1;
  sys.period = 1.0;
  sys.accel = [](double, const vec&, double, vec& a) { a[0] = 0.0; };
  sys.restitution = [](double, double) { return 0.5; };
  state s0(0.0, vec(2));
  s0.z << 1e-8, -1e-8;  // reaches the wall tangentially with zero force
  CHECK_THROWS_AS(simulate(sys, s0, 5.0, 0.0, integrator_options{}), integration_error);
  try {
    simulate(sys, s0, 5.0, 0.0, integrator_options{});
  } catch (const integration_error& err) {
    CHECK(err.partial() != nullptr);  // trajectory-so-far is attached
    CHECK(std::string(err.what()).find("tangency") != std::string::npos);
  }
}

TEST_CASE("zero-length span yields an empty trajectory", "[integrator]") {
  auto sys = make_bouncing_ball();
  state s0(1.0, vec(2));
  s0.z << 1.0, 0.0;
  const trajectory tr = simulate(sys, s0, 1.0, 0.0, integrator_options{});
  CHECK(tr.segments.empty());
  CHECK(tr.impacts.empty());
  CHECK(tr.final_state.z == s0.z);
}

TEST_CASE("csv export carries all rows with full precision", "[integrator]") {
  auto sys = make_bouncing_ball(1.0, 0.5);
  state s0(0.0, vec(2));
  s0.z << 1.0, 0.0;
  const trajectory tr = simulate(sys, s0, 3.0, 0.0, integrator_options{});
  const std::string csv = trajectory_csv(tr);
  CHECK(csv.rfind("t,x1,y1,segment_id\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') > 10);
  const std::string imp = impacts_csv(tr);
  CHECK(imp.rfind("tau,approach_speed,grazing\n", 0) == 0);
  CHECK(imp.find("1.414213562373095") != std::string::npos);
}
