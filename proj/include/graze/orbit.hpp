#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "graze/variational.hpp"

namespace graze {

class convergence_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The impact count changed under the Newton iteration: the iterate stepped
/// across a structural boundary of the flow.
class structural_change_error : public convergence_error {
 public:
  structural_change_error(const std::string& what, vec iterate, int before, int after)
      : convergence_error(what), iterate(std::move(iterate)), count_before(before),
        count_after(after) {}
  vec iterate;
  int count_before;
  int count_after;
};

struct orbit_options {
  double newton_tol = 1e-10;
  int max_newton = 25;
  /// Saltation gate used inside the Newton Jacobians; kept well below the
  /// simulation graze_tol so the shooting stays usable up to the grazing
  /// parameter itself.
  double jacobian_graze_tol = 1e-9;
  integrator_options integrator{};
};

/// Fixed point of the stroboscopic map with its impact data over one period.
struct periodic_orbit {
  double mu = 0.0;
  double theta = 0.0;
  vec z_star;
  /// (tau, approach speed) for every transversal impact in [-theta, T-theta).
  std::vector<std::pair<double, double>> impacts;
  int impacts_per_period = 0;
  double residual = 0.0;  // |S(z*) - z*| from a fresh simulation
  mat jacobian;
  int grazing_index = -1;  // impact with the smallest approach speed
  int newton_iterations = 0;

  double min_speed() const {
    return grazing_index >= 0 ? impacts[grazing_index].second : 0.0;
  }
  double min_speed_tau() const {
    return grazing_index >= 0 ? impacts[grazing_index].first : 0.0;
  }
};

/// Parameter value where the tracked impact velocity reaches zero, together
/// with the tangency data measured on the re-simulated orbit.
struct grazing_record {
  double mu_star = 0.0;
  double tau0 = 0.0;  // contact phase; family clocks are shifted so it maps to 0
  vec zbar0;
  double phi0 = 0.0;  // f1 at the tangency, must be positive
  vec z_star;         // fixed point at the section for mu_star
  double theta = 0.0;
  double x_residual = 0.0;  // |x1| at the tangency of the re-simulated orbit
  double y_residual = 0.0;  // |y1| there
};

struct orbit_family {
  double theta = 0.0;
  std::vector<periodic_orbit> samples;  // ordered as visited (monotone mu)
  std::optional<grazing_record> grazing;
  bool hit_grazing = false;  // continuation stopped at a grazing boundary

  /// Half the smallest phase gap between the tracked contact and its
  /// neighbours over the family; T/2 for single-impact orbits.
  double theta0(double period) const;
};

/// Continuation step shrank below 1e-12 away from any grazing boundary;
/// carries the family computed so far.
class continuation_stall_error : public convergence_error {
 public:
  continuation_stall_error(const std::string& what, orbit_family partial)
      : convergence_error(what), partial(std::move(partial)) {}
  orbit_family partial;
};

/// Damped Newton shooting for a fixed point of the stroboscopic map.
/// Throws convergence_error after max_newton iterations and
/// structural_change_error when the impact count changes between iterates.
periodic_orbit find_periodic(const system_definition& sys, double theta, double mu,
                             const vec& z_guess, const orbit_options& opts);

/// Natural continuation in mu with adaptive step: halves on failure, grows on
/// fast convergence. Stops at mu_end or at a grazing boundary (impact count
/// change with a vanishing approach speed).
orbit_family continue_family(const system_definition& sys, double theta, double mu_start,
                             double mu_end, const periodic_orbit& orbit0,
                             const orbit_options& opts);

/// Secant iteration on mu -> min approach speed, down to |speed| <= graze_tol
/// (signed through zero using the virtual-orbit clearance on the non-impacting
/// side). Stores the record in the family and returns it.
grazing_record detect_grazing(const system_definition& sys, orbit_family& family,
                              const orbit_options& opts);

/// Orbit whose tracked impact velocity equals speed_target, located by secant
/// in mu between family samples (used to probe the scaling laws on the way to
/// grazing).
periodic_orbit refine_at_speed(const system_definition& sys, const orbit_family& family,
                               double speed_target, const orbit_options& opts);

/// Signed grazing gap of the periodic orbit at mu: the smallest impact speed
/// when the orbit impacts, else minus the virtual approach speed
/// sqrt(2 f1 min_x) of its closest pass.
double grazing_gap(const system_definition& sys, const periodic_orbit& orbit,
                   const orbit_options& opts);

/// CSV export: mu, residual, impact count, spectral radius, tau_k, Y_k.
std::string family_csv(const orbit_family& family);

}  // namespace graze
