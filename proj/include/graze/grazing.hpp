#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "graze/orbit.hpp"

namespace graze {

/// The limit monodromy of the grazing orbit with the contact excluded,
/// extrapolated over a shrinking sequence of section offsets, plus the
/// reduced matrices built from it.
struct grazing_matrices {
  int dof = 1;
  mat A;
  mat A_inv;
  double det_A = 0.0;  // Delta_0
  std::optional<mat> A_bar;      // absent for n = 1 or a12 ~ 0
  std::optional<mat> A_cal_bar;  // same from the inverse-matrix entries
  bool a12_degenerate = false;
  bool alpha12_degenerate = false;

  std::vector<double> theta_seq;
  std::vector<mat> A_by_theta;     // raw values at the grazing parameter
  double extrapolation_error = 0.0;  // last extrapolation correction, Frobenius
  bool converged = true;

  double a12() const { return A(0, 1); }
  double alpha12() const { return A_inv(0, 1); }
  /// Column A_2 (the image of the velocity direction), the predicted
  /// expanding eigendirection.
  vec column2() const { return A.col(1); }
};

/// One branch of the spectrum/geometry test: hyperbolicity of the reduced
/// matrix plus the two sign conditions on the (1,2) entries.
struct condition_branch {
  bool vacuous_reduction = false;  // n == 1: no reduced matrix required
  bool hyperbolic = false;
  bool inconclusive = false;  // margin below the resolution threshold
  double margin = 0.0;        // min | |lambda| - 1 | over the reduced spectrum
  double v12 = 0.0;           // a12 (or alpha12)
  double sum12 = 0.0;         // sum_k a1k ak2 (or the alpha version)
  bool holds() const {
    const bool item1 = vacuous_reduction || (hyperbolic && !inconclusive);
    return item1 && v12 > 0.0 && sum12 < 0.0;
  }
};

struct condition_report {
  condition_branch direct;   // on A
  condition_branch inverse;  // on A^{-1}; analysis proceeds on the inverse map
  int chosen_branch = 0;     // 3, 4, or 0 when neither holds
};

/// Eigenvalue scaling of the full monodromy along the family: a simple
/// eigenvalue grows like 1/Y and its partner shrinks like Y, with constants
/// determined by A, the restitution and the contact acceleration.
struct spectral_sample {
  double mu = 0.0;
  double speed = 0.0;  // Y0 of the sample
  std::complex<double> lambda_max;
  std::complex<double> lambda_min;
  double spectral_radius = 0.0;
  double det_D = 0.0;
  double lambda_plus_pred = 0.0;  // -(r+1) a12 phi0 / Y0
  double lambda_minus_pred = 0.0; // r^2 Y0 / ((r+1) phi0 alpha12)
  double dev_plus = 0.0;          // relative deviation of lambda_max
  double dev_minus = 0.0;
  double angle_u_plus = 0.0;   // angle(u_max, A_2), radians
  double angle_u_minus = 0.0;  // angle(u_min, e_2), radians
};

struct spectral_asymptotics_result {
  std::vector<spectral_sample> samples;  // decreasing speed
  double slope_loglog = 0.0;          // d log(rho) / d log(Y0), expected -1
  double lambda_plus_speed_extrap = 0.0;  // lim of lambda_max * Y0
  double lambda_plus_limit_pred = 0.0;    // -(r+1) a12 phi0
  double det_d_at_smallest = 0.0;
  double det_d_limit_pred = 0.0;  // r^2 * Delta_0
  bool pairing_ambiguous = false;
  double theta_align = 0.0;  // section offset used for the eigenvector angles
};

struct gamma_sample_spec {
  std::vector<double> y1_values;  // defaults to +-{2.5e-3, 5e-3, 7.5e-3, 1e-2}
  double x1_max = 2e-3;
  double window_back = 0.0;  // defaults to T/2
  double window_fwd = 0.0;   // defaults to T/2
  vec zbar_offset;           // added to the reference tangential state (n > 1)
  int bisection_steps = 52;
  int jobs = 0;              // parallel classification columns; 0 = all cores
};

/// Quadratic law of the touching-set boundary: x1* = c y1^2 near the grazing
/// point, fitted from bisection on touch/no-touch classification.
struct gamma_fit {
  double c = 0.0;
  double residual_rel = 0.0;
  double f1_ref = 0.0;   // f1 at the reference section point
  double inv_f1 = 0.0;   // candidate constants the fit is compared against
  double inv_2f1 = 0.0;
  /// +1 when c matches 1/f1, +2 when it matches 1/(2 f1), 0 neither.
  int matched_constant = 0;
  std::vector<std::array<double, 2>> boundary;  // (y1, x1*)
};

struct leev_probe_result {
  int n_products = 0;    // perturbations x samples
  int n_hyperbolic = 0;
  double min_margin = 0.0;
  double eps_abs = 0.0;
  std::uint64_t seed = 0;
};

/// Monodromy of the map from tau0 + theta to tau0 + T - theta along the
/// grazing orbit (contact excluded), extrapolated theta -> 0. Uses the
/// family's grazing record; extrapolation trouble is reported in the result,
/// not thrown.
grazing_matrices limit_matrix_A(const system_definition& sys, const orbit_family& family,
                                std::vector<double> theta_seq, const orbit_options& opts);

/// Fills A_bar / A_cal_bar from the printed reduction formulas; marks them
/// absent for n = 1 or degenerate (1,2) entries.
void reduced_matrices(grazing_matrices& g);

condition_report check_conditions(const grazing_matrices& g);

/// Per-sample eigen-analysis of the monodromy along the family against the
/// 1/Y predictions. Samples are re-anchored at a small section offset
/// theta_align for the eigenvector comparisons.
spectral_asymptotics_result spectral_asymptotics(const system_definition& sys,
                                                 const std::vector<periodic_orbit>& samples,
                                                 const grazing_matrices& g,
                                                 const grazing_record& rec,
                                                 const orbit_options& opts,
                                                 double theta_align = 0.0);

/// Boundary of the set of initial states whose orbit reaches the wall within
/// the classification window, sampled over y1 and bisected in x1. Initial
/// states are placed at the absolute time t_section (shortly before the
/// contact phase); z_ref supplies the reference f1 of the quadratic law and
/// should be the orbit state at t_section.
gamma_fit fit_gamma_surface(const system_definition& sys, double t_section, double mu,
                            const state& z_ref, const gamma_sample_spec& spec,
                            const integrator_options& opts);

/// Random-perturbation probe: products A' * B_first stay hyperbolic for all
/// perturbations with |A' - A|_F <= eps_rel |A|_F over the given samples.
leev_probe_result probe_perturbed_products(const system_definition& sys,
                                           const std::vector<periodic_orbit>& samples,
                                           const grazing_matrices& g, double eps_rel,
                                           int count, std::uint64_t seed,
                                           const orbit_options& opts);

/// Hyperbolicity margin of a matrix spectrum: min | |lambda| - 1 |.
double unit_circle_margin(const mat& m);

}  // namespace graze
