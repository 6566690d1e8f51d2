#include <catch2/catch_amalgamated.hpp>

#include "graze/variational.hpp"
#include "oracles.hpp"

using namespace graze;

namespace {

integrator_options tight() {
  integrator_options o;
  o.rel_tol = 1e-12;
  o.abs_tol = 1e-14;
  o.store_dense = false;
  return o;
}

/// Shrinking-window finite-difference oracle for the impact jump matrix:
/// integrates from eps before to eps after a wall contact with perturbed
/// initial states and removes the smooth factors by Richardson in eps.
/// The pre-impact state is produced by integrating backward from the wall,
/// so the contact velocity is exact.
mat saltation_fd_oracle(const system_definition& sys, double t_hit, double speed,
                        const vec& zbar, double mu, const std::vector<double>& eps_seq) {
  const auto opts = tight();
  std::vector<mat> by_eps;
  for (double eps : eps_seq) {
    // anchor: state eps before the impact
    const vec z_wall_pre = assemble_state(0.0, -speed, zbar);
    trajectory back = simulate_backward(sys, state(t_hit, z_wall_pre), t_hit - eps, mu, opts);
    REQUIRE(back.impacts.empty());
    const vec z_minus = back.final_state.z;

    auto window_map = [&](const vec& z) {
      trajectory tr = simulate(sys, state(t_hit - eps, z), t_hit + eps, mu, opts);
      REQUIRE(tr.transversal_impact_count(t_hit - eps, t_hit + eps) == 1);
      return tr.final_state.z;
    };
    by_eps.push_back(oracles::fd_jacobian(window_map, z_minus, 1e-7));
  }
  // J(eps) = B + O(eps): polynomial extrapolation to eps = 0
  std::vector<mat> tab = by_eps;
  const int m = static_cast<int>(tab.size());
  for (int level = 1; level < m; ++level) {
    for (int i = 0; i < m - level; ++i) {
      const double e0 = eps_seq[i], e1 = eps_seq[i + level];
      tab[i] = (e0 * tab[i + 1] - e1 * tab[i]) / (e0 - e1);
    }
  }
  return tab[0];
}

}  // namespace

TEST_CASE("flow Jacobian of simple fields", "[variational]") {
  SECTION("constant acceleration gives the shear block") {
    auto sys = make_bouncing_ball(1.0, 0.5);
    state s0(0.0, vec(2));
    s0.z << 2.0, 0.5;
    const double dt = 0.7;
    const mat j = flow_jacobian(sys, s0, dt, 0.0, tight());
    mat expect(2, 2);
    expect << 1.0, dt, 0.0, 1.0;
    CHECK((j - expect).norm() < 1e-10);
  }

  SECTION("linear system matches the matrix exponential") {
    impact_oscillator_params p;
    p.ampl_base = 0.2;  // wide wall clearance: the window must stay smooth
    auto osc = make_impact_oscillator(p);
    state s0(0.0, vec(2));
    s0.z << 1.4, 0.2;
    const double dt = 2.0 * M_PI;
    const mat j = flow_jacobian(osc, s0, dt, 0.0, tight());
    mat m(2, 2);
    m << 0.0, 1.0, -p.stiffness, -2.0 * p.damping;
    const mat expect = oracles::expm(mat(m * dt));
    CHECK((j - expect).norm() <= 1e-8 * expect.norm());
  }

  SECTION("nonlinear arc matches a finite-difference Jacobian") {
    impact_oscillator_params p;
    p.ampl_base = 0.2;
    p.cubic = 0.4;
    auto osc = make_impact_oscillator(p);
    const auto opts = tight();
    state s0(0.0, vec(2));
    s0.z << 1.4, 0.2;
    const double dt = 3.0;
    const mat j = flow_jacobian(osc, s0, dt, 0.0, opts);
    auto map = [&](const vec& z) {
      return flow_smooth(osc, state(0.0, z), dt, 0.0, opts).end.z;
    };
    const mat fd = oracles::fd_jacobian(map, s0.z, 1e-6);
    CHECK((j - fd).norm() <= 1e-5 * fd.norm());
  }

  SECTION("a contact inside the window is refused") {
    auto sys = make_bouncing_ball(1.0, 0.5);
    state s0(0.0, vec(2));
    s0.z << 1.0, 0.0;
    CHECK_THROWS_AS(flow_jacobian(sys, s0, 3.0, 0.0, tight()), transversality_error);
  }
}

TEST_CASE("impact jump matrix has the closed form", "[variational]") {
  SECTION("constant field, constant restitution") {
    const double g = 1.0, r = 0.5, speed = 2.0;
    auto sys = make_bouncing_ball(g, r);
    impact_event ev;
    ev.tau = 0.3;
    ev.z_pre = assemble_state(0.0, -speed, vec(0));
    ev.z_post = assemble_state(0.0, r * speed, vec(0));
    ev.approach_speed = speed;
    const auto salt = saltation_matrix(sys, ev, 0.0);
    // f = -g on both sides: b21 = -(f+ + r f-)/Y = g (1+r)/Y
    mat expect(2, 2);
    expect << -r, 0.0, g * (1.0 + r) / speed, -r;
    CHECK((salt.B - expect).norm() < 1e-12);
    CHECK(salt.r_tilde == r);
    CHECK(salt.b21 == Catch::Approx(g * 1.5 / speed));
  }

  SECTION("determinant identity with velocity-dependent restitution") {
    impact_oscillator_params p;
    p.rest0 = 0.8;
    p.rest_slope = 0.1;
    auto osc = make_impact_oscillator(p);
    impact_event ev;
    ev.tau = 1.1;
    ev.z_pre = assemble_state(0.0, -0.3, vec(0));
    ev.approach_speed = 0.3;
    const auto salt = saltation_matrix(osc, ev, 0.05);
    const double r = 0.8 + 0.1 * 0.3;
    const double r_tilde = 0.8 + 2.0 * 0.1 * 0.3;
    CHECK(salt.r_val == Catch::Approx(r).epsilon(1e-14));
    CHECK(salt.r_tilde == Catch::Approx(r_tilde).epsilon(1e-14));
    CHECK(salt.B.determinant() == Catch::Approx(r * r_tilde).epsilon(1e-8));
  }

  SECTION("grazing contacts are refused") {
    auto sys = make_bouncing_ball();
    impact_event ev;
    ev.tau = 0.0;
    ev.z_pre = assemble_state(0.0, -1e-8, vec(0));
    ev.approach_speed = 1e-8;
    CHECK_THROWS_AS(saltation_matrix(sys, ev, 0.0), transversality_error);
  }
}

TEST_CASE("impact jump matrix matches the shrinking-window oracle", "[variational]") {
  const std::vector<double> eps_seq = {4e-3, 2e-3, 1e-3};

  SECTION("single mass with velocity-dependent restitution") {
    impact_oscillator_params p;
    p.rest0 = 0.8;
    p.rest_slope = 0.1;
    auto osc = make_impact_oscillator(p);
    const double mu = 0.05;
    for (double speed : {0.5, 0.1}) {
      const double t_hit = 3.3;
      const mat fd = saltation_fd_oracle(osc, t_hit, speed, vec(0), mu, eps_seq);
      impact_event ev;
      ev.tau = t_hit;
      ev.z_pre = assemble_state(0.0, -speed, vec(0));
      ev.approach_speed = speed;
      const auto salt = saltation_matrix(osc, ev, mu);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          CHECK(salt.B(i, j) ==
                Catch::Approx(fd(i, j)).margin(1e-4 * std::abs(fd(i, j)) + 1e-7));
        }
      }
      CHECK(salt.B.determinant() ==
            Catch::Approx(salt.r_val * salt.r_tilde).epsilon(1e-8));
    }
  }

  SECTION("two masses: the velocity-coupled row carries the jump") {
    coupled_oscillator_params p;
    p.primary.rest0 = 0.8;
    p.couple_vel = 0.3;  // strong y1 feed so the first-column entry is visible
    auto sys = make_coupled_oscillator(p);
    const double mu = 0.05, speed = 0.4, t_hit = 3.3;
    vec zbar(2);
    zbar << 0.2, -0.1;
    const mat fd = saltation_fd_oracle(sys, t_hit, speed, zbar, mu, eps_seq);
    impact_event ev;
    ev.tau = t_hit;
    ev.z_pre = assemble_state(0.0, -speed, zbar);
    ev.approach_speed = speed;
    const auto salt = saltation_matrix(sys, ev, mu);

    // the only tangential jump sits in the y2 row: (f2(-Y) - f2(+rY))/Y
    const double expect_b41 = -p.couple_vel * (1.0 + 0.8);
    CHECK(salt.B(3, 0) == Catch::Approx(expect_b41).epsilon(1e-12));
    CHECK(fd(3, 0) == Catch::Approx(expect_b41).margin(2e-4));
    CHECK(salt.B(2, 0) == 0.0);
    CHECK(std::abs(fd(2, 0)) < 1e-3 * salt.B.norm());  // zero pattern confirmed

    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(salt.B(i, j) ==
              Catch::Approx(fd(i, j)).margin(1e-4 * std::abs(fd(i, j)) + 2e-6));
      }
    }
  }
}

TEST_CASE("window Jacobian is the product of flow and jump factors", "[variational]") {
  impact_oscillator_params p;
  auto osc = make_impact_oscillator(p);
  const double mu = 0.2, theta = M_PI / 2.0;
  const auto opts = tight();
  vec z0(2);
  z0 << 0.8, 0.3;

  SECTION("matches the finite-difference map Jacobian across impacts") {
    const auto res = poincare_jacobian(osc, theta, z0, mu, opts);
    REQUIRE(res.saltations.size() >= 1);
    auto map = [&](const vec& z) { return stroboscopic_map(osc, theta, z, mu, opts); };
    const mat fd = oracles::fd_jacobian(map, z0, 1e-7);
    CHECK((res.jac - fd).norm() <= 1e-4 * fd.norm());
    CHECK((res.z_end - map(z0)).norm() < 1e-11);
  }

  SECTION("no-contact window equals the plain flow Jacobian") {
    impact_oscillator_params q;
    q.ampl_base = 0.2;
    auto calm = make_impact_oscillator(q);
    const auto res = poincare_jacobian(calm, theta, z0, 0.0, opts);
    CHECK(res.saltations.empty());
    const mat j = flow_jacobian(calm, state(-theta, z0), calm.period - theta, 0.0, opts);
    CHECK((res.jac - j).norm() == 0.0);
  }

  SECTION("chain rule over a non-contact cut") {
    const auto full = poincare_jacobian(osc, theta, z0, mu, opts);
    const double cut = 1.0;  // between the section and the contact
    const auto leg1 = map_with_jacobian(osc, state(-theta, z0), cut, mu, opts);
    const auto leg2 =
        map_with_jacobian(osc, state(cut, leg1.z_end), osc.period - theta, mu, opts);
    CHECK((leg2.jac * leg1.jac - full.jac).norm() <= 1e-8 * full.jac.norm());
  }

  SECTION("determinant follows the trace integral times the jump factors") {
    const auto res = poincare_jacobian(osc, theta, z0, mu, opts);
    double expect = std::exp(-2.0 * p.damping * osc.period);
    for (const auto& s : res.saltations) expect *= s.r_val * s.r_tilde;
    CHECK(res.jac.determinant() == Catch::Approx(expect).epsilon(1e-6));
  }

  SECTION("split factorization reproduces the full product") {
    const auto split = poincare_jacobian_split(osc, theta, z0, mu, opts);
    CHECK((split.rest * split.first - split.full.jac).norm() <=
          1e-8 * split.full.jac.norm());
    CHECK(split.tau_first == Catch::Approx(split.full.saltations.front().tau));
  }

  SECTION("grazing inside the window raises a transversality error") {
    system_definition flat;
    flat.dof = 1;
    flat.period = 1.0;
    flat.accel = [](double, const vec&, double, vec& a) { a[0] = 2.0; };
    flat.restitution = [](double, double) { return 0.5; };
    vec z(2);
    z << 1.0, -2.0;  // exact tangential touch at t = 1
    CHECK_THROWS_AS(map_with_jacobian(flat, state(0.0, z), 2.0, 0.0, tight()),
                    transversality_error);
  }
}
