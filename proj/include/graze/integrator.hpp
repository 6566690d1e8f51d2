#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "graze/model.hpp"

namespace graze {

struct integrator_options {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  /// Absolute tolerance on |x1| at a localized impact.
  double tol_event = 1e-10;
  /// Impacts with approach speed below this are treated as grazing contacts.
  double graze_tol = 1e-6;
  /// Impact count per unit time that triggers the chatter truncation.
  int max_impacts = 50;
  /// Post-impact speed below which sticking is entered when f1 <= 0.
  double v_stick = 1e-5;
  /// Hard cap on the step size; 0 means period / 4.
  double max_step = 0.0;
  /// Interpolant residual is kept below defect_factor * (abs_tol + rel_tol*|f|).
  double defect_factor = 3.0;
  /// Keep dense output of every step (needed for export and the dense-output
  /// based queries; map evaluations switch it off).
  bool store_dense = true;
};

/// One accepted integrator step with its cubic interpolant data.
struct dense_step {
  double t0 = 0.0, t1 = 0.0;
  vec y0, y1, f0, f1;

  double span() const { return t1 - t0; }
  /// Hermite value at t (valid between t0 and t1).
  vec eval(double t) const;
  /// Hermite time-derivative at t.
  vec eval_derivative(double t) const;
  /// Value of one component only.
  double eval_component(double t, int i) const;
};

enum class arc_end : int {
  reached_t_end = 0,
  wall_crossing = 1,   // x1 hit 0 with approaching velocity
  wall_grazing = 2,    // x1 touched 0 with |y1| below graze_tol
};

/// A smooth piece of trajectory between events.
struct smooth_arc {
  std::vector<dense_step> steps;
  state start;
  state end;
  arc_end reason = arc_end::reached_t_end;
  long rhs_evaluations = 0;

  double t0() const { return start.t; }
  double t1() const { return end.t; }
  /// Dense evaluation; requires store_dense.
  vec eval(double t) const;
};

struct sticking_interval {
  double t_enter = 0.0;
  double t_release = 0.0;
  vec zbar_enter;
  vec zbar_release;
  bool released = true;  // false when the simulation span ended while stuck
};

class trajectory;
using trajectory_ptr = std::shared_ptr<trajectory>;

class integration_error : public std::runtime_error {
 public:
  integration_error(const std::string& what, trajectory_ptr partial = nullptr)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  /// Trajectory integrated so far, when the failure happened mid-run.
  const trajectory_ptr& partial() const { return partial_; }

 private:
  trajectory_ptr partial_;
};

/// Piecewise-smooth solution: smooth arcs, impacts and sticking intervals
/// tiling [t0, t1].
class trajectory {
 public:
  double t0 = 0.0, t1 = 0.0;
  std::vector<smooth_arc> segments;
  std::vector<impact_event> impacts;
  std::vector<sticking_interval> sticking;
  state final_state;
  bool chatter_truncated = false;
  /// Set when a backward run stopped at a non-invertible contact.
  bool backward_stop = false;

  int impact_count(double t_lo, double t_hi) const;
  /// Transversal impacts only (grazing contacts excluded).
  int transversal_impact_count(double t_lo, double t_hi) const;
  /// Minimum of x1 over all dense samples and impact instants.
  double min_x1() const;
};

/// Integrates the free flight from s0 until t_end or the first wall contact;
/// the returned arc ends exactly at the event time. s0 must satisfy
/// x1 > 0, or x1 ~ 0 with the trajectory departing (y1 > 0, or y1 ~ 0 with
/// f1 > 0).
smooth_arc flow_smooth(const system_definition& sys, const state& s0, double t_end,
                       double mu, const integrator_options& opts);

/// Root of x1 on the dense output of an arc that brackets a sign change.
/// Returns nothing when no bracket exists. Pure dense-output query used by
/// diagnostics; the simulation loop itself localizes events with
/// re-integration accuracy.
std::optional<double> locate_impact(const smooth_arc& arc, const integrator_options& opts);

/// Event-driven simulation on [s0.t, t_end]: alternates smooth flow, impacts,
/// sticking intervals and chatter truncation.
trajectory simulate(const system_definition& sys, const state& s0, double t_end,
                    double mu, const integrator_options& opts);

/// Backward-time simulation from s0 down to t_end < s0.t, inverting the
/// impact law at every wall contact (the approach speed is recovered from the
/// departure speed by solving r(Y) Y = v). Stops with backward_stop set when
/// a contact is not invertible (grazing) or sticking conditions appear.
trajectory simulate_backward(const system_definition& sys, const state& s0, double t_end,
                             double mu, const integrator_options& opts);

/// State at time T - theta (right limit) of the solution started at -theta.
vec stroboscopic_map(const system_definition& sys, double theta, const vec& z0,
                     double mu, const integrator_options& opts);

/// Inverse of the stroboscopic map, realized by backward integration.
/// Throws integration_error when the backward run is not invertible.
vec stroboscopic_map_inverse(const system_definition& sys, double theta, const vec& z0,
                             double mu, const integrator_options& opts);

/// m-fold composition of the stroboscopic map (m < 0 uses the inverse).
vec stroboscopic_iterate(const system_definition& sys, double theta, const vec& z0,
                         double mu, int m, const integrator_options& opts);

// --- csv export ------------------------------------------------------------

/// Columns t, x1, y1, ..., xn, yn, segment_id at a fixed per-segment sample
/// count (plus every step endpoint when samples_per_step is 0).
std::string trajectory_csv(const trajectory& tr, int samples_per_step = 4);

/// Companion impact table: tau, approach_speed, grazing_flag.
std::string impacts_csv(const trajectory& tr);

}  // namespace graze
