#include "graze/model.hpp"

#include <cmath>

namespace graze {

namespace {

bool all_finite(const vec& v) { return v.allFinite(); }

void check_params(const std::map<std::string, double>& params,
                  const std::map<std::string, double*>& known) {
  for (const auto& [key, value] : params) {
    auto it = known.find(key);
    if (it == known.end()) {
      throw model_error("unknown system parameter \"" + key + "\"");
    }
    *it->second = value;
  }
}

}  // namespace

vec zbar_of(const vec& z) {
  return z.size() > 2 ? vec(z.tail(z.size() - 2)) : vec(0);
}

vec assemble_state(double x1, double y1, const vec& zbar) {
  vec z(zbar.size() + 2);
  z[0] = x1;
  z[1] = y1;
  if (zbar.size() > 0) z.tail(zbar.size()) = zbar;
  return z;
}

void eval_vector_field_into(const system_definition& sys, double t, const vec& z,
                            double mu, vec& out) {
  const int n = sys.dof;
  static thread_local vec accel;
  accel.resize(n);
  sys.accel(t, z, mu, accel);
  if (!all_finite(accel)) {
    throw model_error("model \"" + sys.name + "\" produced a non-finite acceleration at t=" +
                      std::to_string(t));
  }
  out.resize(2 * n);
  for (int k = 0; k < n; ++k) {
    out[2 * k] = z[2 * k + 1];
    out[2 * k + 1] = accel[k];
  }
}

vec eval_vector_field(const system_definition& sys, const state& s, double mu) {
  vec out;
  eval_vector_field_into(sys, s.t, s.z, mu, out);
  return out;
}

double restitution_checked(const system_definition& sys, double approach_speed, double mu) {
  if (approach_speed < 0.0) {
    throw model_error("restitution queried with negative approach speed");
  }
  const double r = sys.restitution(approach_speed, mu);
  if (!(r > 0.0 && r <= 1.0)) {
    throw model_error("restitution outside (0,1]: r=" + std::to_string(r) +
                      " at Y=" + std::to_string(approach_speed));
  }
  return r;
}

double restitution_slope_value(const system_definition& sys, double approach_speed, double mu) {
  if (sys.restitution_slope) return sys.restitution_slope(approach_speed, mu);
  const double h = 1e-6 * (1.0 + approach_speed);
  const double yp = approach_speed + h;
  const double ym = std::max(approach_speed - h, 0.0);
  return (sys.restitution(yp, mu) - sys.restitution(ym, mu)) / (yp - ym);
}

state apply_impact(const system_definition& sys, const state& pre, double mu,
                   double tol_event) {
  if (std::abs(x1_of(pre.z)) > tol_event) {
    throw model_error("impact applied away from the wall: x1=" + std::to_string(x1_of(pre.z)));
  }
  const double y1 = y1_of(pre.z);
  if (y1 >= 0.0) {
    throw model_error("impact requires an approaching velocity, got y1=" + std::to_string(y1));
  }
  const double r = restitution_checked(sys, -y1, mu);
  state post = pre;
  post.z[1] = -r * y1;
  return post;
}

vec sticking_vector_field(const system_definition& sys, double t, const vec& zbar, double mu) {
  const int n = sys.dof;
  if (n == 1) return vec(0);
  vec z = assemble_state(0.0, 0.0, zbar);
  vec accel(n);
  sys.accel(t, z, mu, accel);
  if (!all_finite(accel)) {
    throw model_error("model \"" + sys.name + "\" produced a non-finite acceleration (sticking)");
  }
  vec out(2 * (n - 1));
  for (int k = 1; k < n; ++k) {
    out[2 * (k - 1)] = zbar[2 * (k - 1) + 1];
    out[2 * (k - 1) + 1] = accel[k];
  }
  return out;
}

double release_test(const system_definition& sys, double t, const vec& zbar, double mu) {
  vec z = assemble_state(0.0, 0.0, zbar);
  vec accel(sys.dof);
  sys.accel(t, z, mu, accel);
  return accel[0];
}

void field_state_jacobian(const system_definition& sys, double t, const vec& z,
                          double mu, mat& out) {
  const int n = sys.dof;
  const int dim = 2 * n;
  out.setZero(dim, dim);
  for (int k = 0; k < n; ++k) out(2 * k, 2 * k + 1) = 1.0;

  if (sys.accel_jac) {
    static thread_local mat part;
    part.resize(dim + 1, n);
    sys.accel_jac(t, z, mu, part);
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < dim; ++j) out(2 * k + 1, j) = part(j + 1, k);
    }
    return;
  }

  static thread_local vec zp, fp, fm;
  zp = z;
  for (int j = 0; j < dim; ++j) {
    const double h = 1e-7 * (1.0 + std::abs(z[j]));
    zp[j] = z[j] + h;
    fp.resize(n);
    sys.accel(t, zp, mu, fp);
    zp[j] = z[j] - h;
    fm.resize(n);
    sys.accel(t, zp, mu, fm);
    zp[j] = z[j];
    for (int k = 0; k < n; ++k) out(2 * k + 1, j) = (fp[k] - fm[k]) / (2.0 * h);
  }
}

// --- built-in systems ------------------------------------------------------

system_definition make_bouncing_ball(double gravity, double rest) {
  system_definition sys;
  sys.dof = 1;
  sys.period = 1.0;
  sys.name = "ball";
  sys.accel = [gravity](double, const vec&, double, vec& a) { a[0] = -gravity; };
  sys.accel_jac = [](double, const vec&, double, mat& j) { j.setZero(); };
  sys.restitution = [rest](double, double) { return rest; };
  sys.restitution_slope = [](double, double) { return 0.0; };
  sys.mu_range = {0.0, 1.0};
  return sys;
}

system_definition make_forced_ball(double gravity, double ampl, double omega, double rest) {
  system_definition sys;
  sys.dof = 1;
  sys.period = 2.0 * M_PI / omega;
  sys.name = "forced_ball";
  sys.accel = [gravity, ampl, omega](double t, const vec&, double, vec& a) {
    a[0] = -gravity + ampl * std::cos(omega * t);
  };
  sys.accel_jac = [](double, const vec&, double, mat& j) { j.setZero(); };
  sys.restitution = [rest](double, double) { return rest; };
  sys.restitution_slope = [](double, double) { return 0.0; };
  sys.mu_range = {0.0, 1.0};
  return sys;
}

system_definition make_impact_oscillator(const impact_oscillator_params& p) {
  system_definition sys;
  sys.dof = 1;
  sys.period = 2.0 * M_PI / p.omega;
  sys.name = "impact_oscillator";
  sys.accel = [p](double t, const vec& z, double mu, vec& a) {
    const double x = z[0], y = z[1];
    a[0] = -2.0 * p.damping * y - p.stiffness * x - p.cubic * x * x * x +
           p.force_offset + (p.ampl_base + mu) * std::cos(p.omega * t);
  };
  sys.accel_jac = [p](double t, const vec& z, double mu, mat& j) {
    j.setZero();
    j(0, 0) = -(p.ampl_base + mu) * p.omega * std::sin(p.omega * t);  // df/dt
    j(1, 0) = -p.stiffness - 3.0 * p.cubic * z[0] * z[0];             // df/dx1
    j(2, 0) = -2.0 * p.damping;                                       // df/dy1
  };
  sys.restitution = [p](double speed, double) { return p.rest0 + p.rest_slope * speed; };
  sys.restitution_slope = [p](double, double) { return p.rest_slope; };
  sys.mu_range = {0.0, 0.5};
  return sys;
}

system_definition make_coupled_oscillator(const coupled_oscillator_params& p) {
  system_definition sys;
  sys.dof = 2;
  const auto& q = p.primary;
  sys.period = 2.0 * M_PI / q.omega;
  sys.name = "coupled_oscillator";
  sys.accel = [p, q](double t, const vec& z, double mu, vec& a) {
    const double x1 = z[0], y1 = z[1], x2 = z[2], y2 = z[3];
    a[0] = -2.0 * q.damping * y1 - q.stiffness * x1 - q.cubic * x1 * x1 * x1 +
           p.couple_pos * (x2 - x1) + q.force_offset +
           (q.ampl_base + mu) * std::cos(q.omega * t);
    a[1] = -2.0 * p.damping2 * y2 - p.stiffness2 * x2 - p.couple_pos * (x2 - x1) +
           p.couple_vel * y1;
  };
  sys.accel_jac = [p, q](double t, const vec& z, double mu, mat& j) {
    j.setZero();
    j(0, 0) = -(q.ampl_base + mu) * q.omega * std::sin(q.omega * t);
    j(1, 0) = -q.stiffness - 3.0 * q.cubic * z[0] * z[0] - p.couple_pos;
    j(2, 0) = -2.0 * q.damping;
    j(3, 0) = p.couple_pos;
    j(1, 1) = p.couple_pos;
    j(2, 1) = p.couple_vel;
    j(3, 1) = -p.stiffness2 - p.couple_pos;
    j(4, 1) = -2.0 * p.damping2;
  };
  sys.restitution = [q](double speed, double) { return q.rest0 + q.rest_slope * speed; };
  sys.restitution_slope = [q](double, double) { return q.rest_slope; };
  sys.mu_range = {0.0, 0.5};
  return sys;
}

system_definition make_system(const std::string& name,
                              const std::map<std::string, double>& params) {
  if (name == "ball") {
    double gravity = 1.0, rest = 0.5;
    check_params(params, {{"gravity", &gravity}, {"rest", &rest}});
    return make_bouncing_ball(gravity, rest);
  }
  if (name == "forced_ball") {
    double gravity = 0.1, ampl = 0.5, omega = 1.0, rest = 0.5;
    check_params(params, {{"gravity", &gravity}, {"ampl", &ampl}, {"omega", &omega}, {"rest", &rest}});
    return make_forced_ball(gravity, ampl, omega, rest);
  }
  if (name == "impact_oscillator") {
    impact_oscillator_params p;
    check_params(params, {{"damping", &p.damping},
                          {"stiffness", &p.stiffness},
                          {"force_offset", &p.force_offset},
                          {"ampl_base", &p.ampl_base},
                          {"omega", &p.omega},
                          {"rest0", &p.rest0},
                          {"rest_slope", &p.rest_slope},
                          {"cubic", &p.cubic}});
    return make_impact_oscillator(p);
  }
  if (name == "coupled_oscillator") {
    coupled_oscillator_params p;
    check_params(params, {{"damping", &p.primary.damping},
                          {"stiffness", &p.primary.stiffness},
                          {"force_offset", &p.primary.force_offset},
                          {"ampl_base", &p.primary.ampl_base},
                          {"omega", &p.primary.omega},
                          {"rest0", &p.primary.rest0},
                          {"rest_slope", &p.primary.rest_slope},
                          {"cubic", &p.primary.cubic},
                          {"stiffness2", &p.stiffness2},
                          {"damping2", &p.damping2},
                          {"couple_pos", &p.couple_pos},
                          {"couple_vel", &p.couple_vel}});
    return make_coupled_oscillator(p);
  }
  throw model_error("unknown system \"" + name + "\"");
}

std::array<const char*, 4> registered_system_names() {
  return {"ball", "forced_ball", "impact_oscillator", "coupled_oscillator"};
}

}  // namespace graze
