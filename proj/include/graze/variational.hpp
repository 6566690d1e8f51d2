#pragma once

#include <vector>

#include "graze/integrator.hpp"

namespace graze {

/// Raised when a Jacobian is requested across a grazing or sticking contact,
/// where the flow is not differentiable.
class transversality_error : public integration_error {
 public:
  using integration_error::integration_error;
};

/// Jump correction to the trajectory Jacobian across one transversal impact.
///
/// In the ordering (x1, y1, x2, y2, ...) the matrix has the structure
///   row x1:      (-r, 0, 0, ...)
///   row y1:      (b21, -r_tilde, 0, ...)
///   rows xk:     identity
///   rows yk:     first column (f_pre_k - f_post_k)/Y, identity elsewhere
/// with b21 = -(f_post_1 + r_tilde * f_pre_1)/Y and r_tilde = r + dr/dY * Y,
/// so det B = r * r_tilde exactly.
struct saltation_data {
  mat B;
  double tau = 0.0;
  double approach_speed = 0.0;  // Y
  double r_val = 0.0;
  double r_tilde = 0.0;
  vec f_pre;   // accelerations at (tau, 0, -Y, zbar)
  vec f_post;  // accelerations at (tau, 0, +rY, zbar)
  double b21 = 0.0;
};

/// Builds the closed-form jump matrix for a transversal impact.
/// Requires ev.approach_speed >= graze_tol.
saltation_data saltation_matrix(const system_definition& sys, const impact_event& ev,
                                double mu, double graze_tol = 1e-6);

/// Fundamental matrix of the linearized flow along a smooth arc (no contacts):
/// d z(arc.end.t) / d z(arc.start.t). The variational block is integrated on
/// the same adaptive steps as the base solution.
mat flow_jacobian(const system_definition& sys, const smooth_arc& arc, double mu,
                  const integrator_options& opts);

/// Same from an explicit initial state; fails with transversality_error if
/// the span contains a wall contact.
mat flow_jacobian(const system_definition& sys, const state& s0, double t_end, double mu,
                  const integrator_options& opts);

struct map_jacobian_result {
  vec z_end;
  mat jac;  // ordered product of flow Jacobians and saltation matrices
  std::vector<saltation_data> saltations;
  double t_start = 0.0, t_end = 0.0;
};

/// Flow map z0 -> z(t_end) together with its Jacobian over an arbitrary
/// window; impacts must be transversal and sticking must not occur.
map_jacobian_result map_with_jacobian(const system_definition& sys, const state& s0,
                                      double t_end, double mu, const integrator_options& opts);

/// Jacobian of the stroboscopic map over [-theta, T-theta].
map_jacobian_result poincare_jacobian(const system_definition& sys, double theta,
                                      const vec& z0, double mu,
                                      const integrator_options& opts);

/// Factorization D = rest * first across a cut placed symmetrically after the
/// first impact (t_cut = tau_1 + (tau_1 - t_start)); "first" isolates the
/// near-grazing contact for the spectral analysis.
struct poincare_split {
  mat first;
  mat rest;
  double t_cut = 0.0;
  double tau_first = 0.0;
  map_jacobian_result full;
};

poincare_split poincare_jacobian_split(const system_definition& sys, double theta,
                                       const vec& z0, double mu,
                                       const integrator_options& opts);

}  // namespace graze
