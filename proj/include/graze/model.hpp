#pragma once

#include <array>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace graze {

using vec = Eigen::VectorXd;
using mat = Eigen::MatrixXd;

/// Raised when a user-supplied model callback produces non-finite values or
/// is queried outside its stated domain.
class model_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State of the hybrid system at one instant. Layout of z is
/// (x1, y1, x2, y2, ..., xn, yn); x1 >= 0 is the constrained coordinate.
struct state {
  double t = 0.0;
  vec z;

  state() = default;
  state(double time, vec values) : t(time), z(std::move(values)) {}
};

inline double x1_of(const vec& z) { return z[0]; }
inline double y1_of(const vec& z) { return z[1]; }

/// Tangential components (x2, y2, ..., xn, yn); empty for one degree of freedom.
vec zbar_of(const vec& z);

/// Rebuilds a full state vector from (x1, y1) and the tangential block.
vec assemble_state(double x1, double y1, const vec& zbar);

/// A vibro-impact system: n second-order equations xk'' = fk(t, z, mu) on
/// x1 >= 0, a Newtonian restitution law at x1 = 0, and constrained dynamics
/// while the contact force holds the mass on the wall.
struct system_definition {
  /// Degrees of freedom n; the state dimension is 2n.
  int dof = 1;

  /// Forcing period T of the right-hand side.
  double period = 1.0;

  /// Accelerations (f1..fn) as a function of (t, z, mu).
  std::function<void(double t, const vec& z, double mu, vec& accel)> accel;

  /// Optional partials of (f1..fn) with respect to (t, z): a (2n+1) x n
  /// matrix whose row 0 is d f/dt and rows 1..2n are d f/dz. When absent,
  /// Jacobian-based operations fall back to central finite differences.
  std::function<void(double t, const vec& z, double mu, mat& jac)> accel_jac;

  /// Restitution coefficient r(Y, mu) for approach speed Y >= 0; must lie in (0, 1].
  std::function<double(double approach_speed, double mu)> restitution;

  /// Optional dr/dY; finite differences otherwise.
  std::function<double(double approach_speed, double mu)> restitution_slope;

  /// Admissible parameter interval.
  std::array<double, 2> mu_range{0.0, 1.0};

  std::string name = "custom";

  int state_dim() const { return 2 * dof; }
};

/// Full first-order right-hand side (y1, f1, ..., yn, fn) at (s.t, s.z, mu).
vec eval_vector_field(const system_definition& sys, const state& s, double mu);

/// Same, writing into an existing buffer (hot path of the integrator).
void eval_vector_field_into(const system_definition& sys, double t, const vec& z,
                            double mu, vec& out);

/// Restitution with domain checks: Y must be >= 0 and r must land in (0, 1].
double restitution_checked(const system_definition& sys, double approach_speed, double mu);

/// dr/dY from the registered slope or a central difference.
double restitution_slope_value(const system_definition& sys, double approach_speed, double mu);

/// Newtonian impact: y1 -> -r(-y1, mu) * y1 with x and the tangential
/// velocities unchanged. Requires x1 ~ 0 and y1 < 0.
state apply_impact(const system_definition& sys, const state& pre, double mu,
                   double tol_event = 1e-10);

/// Reduced right-hand side for the tangential block while (x1, y1) is pinned
/// to (0, 0). Empty vector for n = 1.
vec sticking_vector_field(const system_definition& sys, double t, const vec& zbar, double mu);

/// Contact-force indicator f1(t, 0, 0, zbar, mu): sticking persists while
/// this is <= 0 and ends at its upward zero crossing.
double release_test(const system_definition& sys, double t, const vec& zbar, double mu);

/// Jacobian of the first-order field with respect to z (2n x 2n), from
/// accel_jac when available, else central differences of accel.
void field_state_jacobian(const system_definition& sys, double t, const vec& z,
                          double mu, mat& out);

/// An impact of the simulated trajectory. approach_speed is Y = -y1(tau-0);
/// grazing events (Y below the grazing tolerance) carry z_post == z_pre.
struct impact_event {
  double tau = 0.0;
  vec z_pre;
  vec z_post;
  double approach_speed = 0.0;
  bool grazing = false;
};

// --- built-in systems ------------------------------------------------------

/// Free fall against a floor: f1 = -gravity, constant restitution.
system_definition make_bouncing_ball(double gravity = 1.0, double rest = 0.5);

/// Ballistic flight with sinusoidal forcing: f1 = -gravity + ampl*cos(omega t).
/// Admits a closed-form single-impact periodic orbit; used as the analytically
/// solvable shooting benchmark.
system_definition make_forced_ball(double gravity = 0.1, double ampl = 0.5,
                                   double omega = 1.0, double rest = 0.5);

struct impact_oscillator_params {
  double damping = 0.05;       // zeta
  double stiffness = 1.8931;   // k
  double force_offset = 1.8931;
  double ampl_base = 0.88;     // forcing amplitude at mu = 0
  double omega = 1.0;
  double rest0 = 0.8;          // restitution at zero approach speed
  double rest_slope = 0.0;     // linear velocity dependence of restitution
  double cubic = 0.0;          // optional cubic stiffness
};

/// Forced linear oscillator with a rigid wall at x = 0; mu shifts the forcing
/// amplitude. The default constants put a one-impact periodic family at
/// small mu whose impact velocity vanishes near mu ~ 0.0187.
system_definition make_impact_oscillator(const impact_oscillator_params& p = {});

struct coupled_oscillator_params {
  impact_oscillator_params primary{};
  double stiffness2 = 0.49;   // k2
  double damping2 = 0.04;     // zeta2
  double couple_pos = 0.05;   // spring between the two masses
  double couple_vel = 0.03;   // feed of y1 into the second mass
};

/// Two-mass variant: mass 1 as in make_impact_oscillator and impacts the
/// wall; mass 2 is pulled along through weak position and velocity coupling.
system_definition make_coupled_oscillator(const coupled_oscillator_params& p = {});

/// Registry lookup for the command-line front end. Throws model_error for an
/// unknown name or an unknown parameter key.
system_definition make_system(const std::string& name,
                              const std::map<std::string, double>& params);

/// Names accepted by make_system.
std::array<const char*, 4> registered_system_names();

}  // namespace graze
