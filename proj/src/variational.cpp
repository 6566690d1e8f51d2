#include "graze/variational.hpp"

#include <cmath>

#include "rk_internal.hpp"

namespace graze {

namespace {

vec accel_at(const system_definition& sys, double t, const vec& z, double mu) {
  vec a(sys.dof);
  sys.accel(t, z, mu, a);
  return a;
}

}  // namespace

saltation_data saltation_matrix(const system_definition& sys, const impact_event& ev,
                                double mu, double graze_tol) {
  if (ev.approach_speed < graze_tol) {
    throw transversality_error("saltation matrix undefined at grazing: Y=" +
                               std::to_string(ev.approach_speed));
  }
  const int dim = static_cast<int>(ev.z_pre.size());
  const int n = dim / 2;
  const double speed = ev.approach_speed;
  const double r = restitution_checked(sys, speed, mu);
  const double r_tilde = r + restitution_slope_value(sys, speed, mu) * speed;

  const vec zbar = zbar_of(ev.z_pre);
  const vec z_minus = assemble_state(0.0, -speed, zbar);
  const vec z_plus = assemble_state(0.0, r * speed, zbar);

  saltation_data out;
  out.tau = ev.tau;
  out.approach_speed = speed;
  out.r_val = r;
  out.r_tilde = r_tilde;
  out.f_pre = accel_at(sys, ev.tau, z_minus, mu);
  out.f_post = accel_at(sys, ev.tau, z_plus, mu);
  out.b21 = -(out.f_post[0] + r_tilde * out.f_pre[0]) / speed;

  mat B = mat::Identity(dim, dim);
  B(0, 0) = -r;
  B(1, 0) = out.b21;
  B(1, 1) = -r_tilde;
  for (int k = 1; k < n; ++k) {
    B(2 * k, 0) = 0.0;
    B(2 * k + 1, 0) = (out.f_pre[k] - out.f_post[k]) / speed;
  }
  out.B = std::move(B);
  return out;
}

namespace {

/// Right-hand side of the state + fundamental-matrix system. Layout of y is
/// [z (dim); Phi column-major (dim*dim)]. Error control stays on z so the
/// base trajectory and its events match the plain integration exactly.
struct augmented_rhs {
  const system_definition* sys;
  double mu;

  void operator()(double t, const vec& y, vec& dy) const {
    const int dim = sys->state_dim();
    dy.resize(y.size());
    static thread_local vec z, dz;
    static thread_local mat jac;
    z = y.head(dim);
    eval_vector_field_into(*sys, t, z, mu, dz);
    dy.head(dim) = dz;
    field_state_jacobian(*sys, t, z, mu, jac);
    Eigen::Map<const mat> phi(y.data() + dim, dim, dim);
    Eigen::Map<mat> dphi(dy.data() + dim, dim, dim);
    dphi.noalias() = jac * phi;
  }
};

struct augmented_run {
  vec z_end;
  mat phi;
  double t_end;
  bool hit = false;
  detail::wall_hit contact;
};

augmented_run run_augmented_arc(const system_definition& sys, double t0, const vec& z0,
                                const mat& phi0, double t_end, double mu,
                                const integrator_options& opts_in) {
  const auto opts = detail::with_cap(sys, opts_in);
  const int dim = sys.state_dim();
  vec y0(dim + dim * dim);
  y0.head(dim) = z0;
  Eigen::Map<mat>(y0.data() + dim, dim, dim) = phi0;

  augmented_rhs rhs{&sys, mu};
  auto accel1 = [&sys, mu, dim](double t, const vec& y) {
    static thread_local vec z, a;
    z = y.head(dim);
    a.resize(sys.dof);
    sys.accel(t, z, mu, a);
    return a[0];
  };
  detail::arc_request req;
  req.t_end = t_end;
  req.events = detail::event_mode::wall;
  auto res = detail::run_arc(rhs, dim + dim * dim, dim, t0, y0, req, opts, accel1);

  augmented_run out;
  out.t_end = res.t_end;
  out.z_end = res.y_end.head(dim);
  out.phi = Eigen::Map<const mat>(res.y_end.data() + dim, dim, dim);
  out.hit = res.hit;
  if (res.hit) out.contact = res.contact;
  return out;
}

}  // namespace

mat flow_jacobian(const system_definition& sys, const state& s0, double t_end, double mu,
                  const integrator_options& opts) {
  const int dim = sys.state_dim();
  auto run = run_augmented_arc(sys, s0.t, s0.z, mat::Identity(dim, dim), t_end, mu, opts);
  if (run.hit) {
    throw transversality_error("flow_jacobian window contains a wall contact at t=" +
                               std::to_string(run.t_end));
  }
  return run.phi;
}

mat flow_jacobian(const system_definition& sys, const smooth_arc& arc, double mu,
                  const integrator_options& opts) {
  return flow_jacobian(sys, arc.start, arc.end.t, mu, opts);
}

map_jacobian_result map_with_jacobian(const system_definition& sys, const state& s0,
                                      double t_end, double mu,
                                      const integrator_options& opts) {
  const int dim = sys.state_dim();
  map_jacobian_result out;
  out.t_start = s0.t;
  out.t_end = t_end;

  double t = s0.t;
  vec z = s0.z;
  mat phi = mat::Identity(dim, dim);
  const double direction = (t_end >= s0.t) ? 1.0 : -1.0;
  if (direction < 0.0) {
    throw transversality_error("map_with_jacobian runs forward only");
  }

  int guard = 0;
  while (t < t_end - 1e-13 * std::max(1.0, std::abs(t_end))) {
    auto run = run_augmented_arc(sys, t, z, phi, t_end, mu, opts);
    t = run.t_end;
    z = run.z_end;
    phi = run.phi;
    if (!run.hit) break;

    impact_event ev;
    ev.tau = t;
    ev.z_pre = z;
    ev.approach_speed = -z[1];
    if (run.contact.grazing_touch || ev.approach_speed < opts.graze_tol) {
      throw transversality_error(
          "Jacobian window contains a grazing contact at t=" + std::to_string(t) +
          " (Y=" + std::to_string(ev.approach_speed) + ")");
    }
    state post = apply_impact(sys, state(t, z), mu, 10.0 * opts.tol_event + 1e-9);
    ev.z_post = post.z;
    auto salt = saltation_matrix(sys, ev, mu, opts.graze_tol);
    phi = salt.B * phi;
    out.saltations.push_back(std::move(salt));
    z = post.z;

    const double f1_wall = release_test(sys, t, zbar_of(z), mu);
    if (std::abs(z[1]) < opts.v_stick && f1_wall <= 0.0) {
      throw transversality_error("Jacobian window enters a sticking phase at t=" +
                                 std::to_string(t));
    }
    if (++guard > 100000) {
      throw transversality_error("impact cascade inside Jacobian window");
    }
  }
  out.z_end = z;
  out.jac = phi;
  return out;
}

map_jacobian_result poincare_jacobian(const system_definition& sys, double theta,
                                      const vec& z0, double mu,
                                      const integrator_options& opts) {
  return map_with_jacobian(sys, state(-theta, z0), sys.period - theta, mu, opts);
}

poincare_split poincare_jacobian_split(const system_definition& sys, double theta,
                                       const vec& z0, double mu,
                                       const integrator_options& opts) {
  poincare_split out;
  out.full = poincare_jacobian(sys, theta, z0, mu, opts);
  if (out.full.saltations.empty()) {
    throw transversality_error("no impact inside the stroboscopic window: nothing to split");
  }
  out.tau_first = out.full.saltations.front().tau;
  out.t_cut = out.tau_first + (out.tau_first + theta);
  const double t_last = sys.period - theta;
  if (out.t_cut >= t_last) out.t_cut = 0.5 * (out.tau_first + t_last);

  auto leg1 = map_with_jacobian(sys, state(-theta, z0), out.t_cut, mu, opts);
  auto leg2 = map_with_jacobian(sys, state(out.t_cut, leg1.z_end), t_last, mu, opts);
  out.first = leg1.jac;
  out.rest = leg2.jac;
  return out;
}

}  // namespace graze
