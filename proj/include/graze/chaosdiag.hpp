#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "graze/orbit.hpp"

namespace graze {

struct manifold_options {
  /// Offset of the first seed point along the eigendirection;
  /// 0 means 1e-5 * |z*| + 1e-8.
  double seed_delta = 0.0;
  /// Target spacing of consecutive curve points.
  double max_gap = 0.02;
  /// Points farther than this from the origin abort the branch.
  double escape_radius = 1e3;
  /// Growth is truncated once the curve leaves this ball around the fixed
  /// point; 0 means 6 units.
  double curve_radius = 0.0;
  int max_points_per_branch = 40000;
  int refine_levels = 28;
  int jobs = 0;
};

/// Validated eigen-split of the monodromy at a saddle fixed point, with the
/// seed offsets scaled until the linear prediction matches the map.
struct local_manifold_seeds {
  vec z_star;
  vec u_plus;   // unit expanding direction
  vec u_minus;  // unit contracting direction
  std::complex<double> lambda_plus;
  std::complex<double> lambda_minus;
  double seed_delta_unstable = 0.0;
  double seed_delta_stable = 0.0;
  double residual_unstable = 0.0;  // |S(z*+d u+) - z* - lambda+ d u+| / (|lambda+| d)
  double residual_stable = 0.0;
  int shrink_steps_unstable = 0;
  int shrink_steps_stable = 0;
};

struct manifold_point {
  vec z;
  double arclength = 0.0;
  int depth = 0;           // fundamental-domain iterations applied
  double source_param = 0.0;  // offset along the eigendirection of the seed
  bool corner = false;     // impact count changes at this point
  int impact_count = 0;    // impacts of the orbit realizing the last map application
};

struct manifold_curve {
  bool stable = false;
  vec z_star;
  vec direction;
  std::complex<double> lambda;
  int map_power = 1;  // 2 when the multiplier is negative (branch-preserving)
  /// Two arms per curve (+/- along the eigendirection), ordered outward.
  std::vector<std::vector<manifold_point>> branches;
  bool truncated_escape = false;
  bool truncated_backward = false;  // stable side hit a non-invertible contact

  std::size_t total_points() const {
    std::size_t n = 0;
    for (const auto& b : branches) n += b.size();
    return n;
  }
};

struct homoclinic_point {
  vec z;
  double angle = 0.0;  // crossing angle of the two curves, radians
  double refine_residual = 0.0;
  /// forward distances |S^j(p) - z*|, j = 0..5, for the convergence check
  std::vector<double> forward_distances;
  std::vector<double> backward_distances;
  bool validated = false;
  // provenance on the two curves
  int unstable_depth = 0;
  double unstable_param = 0.0;
  int stable_depth = 0;
  double stable_param = 0.0;
};

struct lyapunov_options {
  int n_periods = 2000;
  int burn_in = 100;
  int block = 50;
  double fd_delta = 1e-8;
};

struct lyapunov_result {
  double exponent = 0.0;   // per unit time
  double std_error = 0.0;  // per unit time, over block means
  int periods_used = 0;
  int fd_fallback_count = 0;  // periods handled by map differencing
  bool sticking_detected = false;
  double sticking_fraction = 0.0;
  double constrained_exponent = 0.0;  // reported separately when sticking shows up
};

struct periodic_point {
  vec z;
  int period = 1;  // in multiples of the base map
  double residual = 0.0;
  std::vector<std::complex<double>> multipliers;
  int classification = 0;  // -1 saddle, +1 stable, +2 unstable
};

/// Eigen-split of orbit.jacobian with lambda-consistency validation of the
/// seeds (auto-shrinks the offset up to four times).
local_manifold_seeds local_manifolds(const system_definition& sys, double theta, double mu,
                                     const periodic_orbit& orbit, const manifold_options& opts,
                                     const integrator_options& iopts);

/// Grows one global manifold by iterating a fundamental segment, inserting
/// source points until consecutive images are within max_gap. Every stored
/// point is an exact iterate of a seed point (no polyline re-interpolation).
manifold_curve grow_manifold(const system_definition& sys, double theta, double mu,
                             const local_manifold_seeds& seeds, bool stable, int depth,
                             const manifold_options& opts, const integrator_options& iopts);

/// Planar (n = 1) homoclinic search: all transversal polyline intersections
/// of the two curves, Newton-refined through the exact seed parametrization
/// and validated by monotone forward/backward approach to the fixed point.
std::vector<homoclinic_point> find_homoclinic(const system_definition& sys, double theta,
                                              double mu, const manifold_curve& unstable,
                                              const manifold_curve& stable_curve,
                                              double angle_min,
                                              const integrator_options& iopts);

/// Reduced-fidelity intersection test for n > 1: sign changes of the
/// unstable-mode coefficient of S^K(q) - z* along the grown unstable curve.
/// A partial certificate only; points are validated like the planar ones.
std::vector<homoclinic_point> find_homoclinic_projected(
    const system_definition& sys, double theta, double mu, const manifold_curve& unstable,
    const periodic_orbit& orbit, int forward_steps, const integrator_options& iopts);

/// Largest Lyapunov exponent by tangent propagation through the variational
/// flow and the impact jump corrections, renormalized each period. Periods
/// containing a grazing contact fall back to map differencing.
lyapunov_result lyapunov_exponent(const system_definition& sys, double theta, double mu,
                                  const vec& z0, const lyapunov_options& lopts,
                                  const integrator_options& iopts);

/// Newton searches for fixed points of the m-fold map from every seed;
/// deduplicates orbits and classifies them by their multipliers. Failed seeds
/// are counted, not fatal. Results are sorted by (period, coordinates).
std::vector<periodic_point> find_periodic_points(const system_definition& sys, double theta,
                                                 double mu, int m,
                                                 const std::vector<vec>& seeds,
                                                 const orbit_options& opts,
                                                 int* failed_seeds = nullptr, int jobs = 0);

/// Rectangular seed grid around the fixed point plus rings around the given
/// anchor points.
std::vector<vec> make_seed_grid(const vec& z_star, const std::vector<vec>& anchors,
                                double half_width, int per_axis);

/// CSV export: branch, arclength, state components, corner flag.
std::string manifold_csv(const manifold_curve& curve);

}  // namespace graze
