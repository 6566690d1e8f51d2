#include "graze/grazing.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "graze/parallel.hpp"

namespace graze {

double unit_circle_margin(const mat& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  const auto ev = m.eigenvalues();
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ev.size(); ++i) {
    margin = std::min(margin, std::abs(std::abs(ev[i]) - 1.0));
  }
  return margin;
}

namespace {

/// Entrywise polynomial extrapolation of A(theta) to theta = 0 (Neville).
mat extrapolate_to_zero(const std::vector<double>& thetas, const std::vector<mat>& values,
                        double* last_correction) {
  const int m = static_cast<int>(values.size());
  std::vector<mat> tab = values;
  for (int level = 1; level < m; ++level) {
    for (int i = 0; i < m - level; ++i) {
      const double t0 = thetas[i], t1 = thetas[i + level];
      tab[i] = (t0 * tab[i + 1] - t1 * tab[i]) / (t0 - t1);
    }
  }
  if (last_correction) {
    *last_correction = (m >= 2) ? (tab[0] - values.back()).norm() : 0.0;
  }
  return tab[0];
}

/// Orbit state at an arbitrary time, following the trajectory from the
/// section point (contacts included).
vec orbit_state_at(const system_definition& sys, double theta, double mu, const vec& z_star,
                   double t_query, const integrator_options& opts_in) {
  integrator_options opts = opts_in;
  opts.store_dense = false;
  if (t_query == -theta) return z_star;
  if (t_query > -theta) {
    return simulate(sys, state(-theta, z_star), t_query, mu, opts).final_state.z;
  }
  // earlier than the section: use periodicity instead of backward flow
  return simulate(sys, state(-theta - sys.period, z_star), t_query, mu, opts).final_state.z;
}

}  // namespace

grazing_matrices limit_matrix_A(const system_definition& sys, const orbit_family& family,
                                std::vector<double> theta_seq, const orbit_options& opts) {
  if (!family.grazing) {
    throw convergence_error("limit matrix requested without a grazing record");
  }
  const auto& rec = *family.grazing;
  const double period = sys.period;

  if (theta_seq.empty()) {
    const double th0 = family.theta0(period);
    theta_seq = {th0 / 4.0, th0 / 8.0, th0 / 16.0};
  }
  std::sort(theta_seq.begin(), theta_seq.end(), std::greater<double>());

  integrator_options io = opts.integrator;
  io.store_dense = false;

  grazing_matrices g;
  g.dof = sys.dof;
  g.theta_seq = theta_seq;

  for (double th : theta_seq) {
    const vec z_at = orbit_state_at(sys, rec.theta, rec.mu_star, rec.z_star,
                                    rec.tau0 + th, io);
    auto res = map_with_jacobian(sys, state(rec.tau0 + th, z_at),
                                 rec.tau0 + period - th, rec.mu_star, io);
    g.A_by_theta.push_back(res.jac);
  }
  g.A = extrapolate_to_zero(theta_seq, g.A_by_theta, &g.extrapolation_error);
  g.converged = g.extrapolation_error <= 1e-3 * g.A.norm();
  // monotone-convergence diagnostic: later estimates must move less
  for (std::size_t i = 2; i < g.A_by_theta.size(); ++i) {
    const double before = (g.A_by_theta[i - 1] - g.A_by_theta[i - 2]).norm();
    const double after = (g.A_by_theta[i] - g.A_by_theta[i - 1]).norm();
    if (after > before) g.converged = false;
  }
  g.det_A = g.A.determinant();
  g.A_inv = g.A.inverse();
  reduced_matrices(g);
  return g;
}

void reduced_matrices(grazing_matrices& g) {
  g.A_bar.reset();
  g.A_cal_bar.reset();
  const int n = g.dof;
  if (n <= 1) return;
  const int m = 2 * n - 2;

  auto build = [m](const mat& src) {
    mat out(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        out(i, j) = -src(0, j + 2) * src(i + 2, 1) / src(0, 1) + src(i + 2, j + 2);
      }
    }
    return out;
  };

  if (std::abs(g.A(0, 1)) > 1e-12) {
    g.A_bar = build(g.A);
  } else {
    g.a12_degenerate = true;
  }
  if (std::abs(g.A_inv(0, 1)) > 1e-12) {
    g.A_cal_bar = build(g.A_inv);
  } else {
    g.alpha12_degenerate = true;
  }
}

namespace {

condition_branch evaluate_branch(const mat& full, const std::optional<mat>& reduced,
                                 bool degenerate, int dof) {
  condition_branch br;
  br.v12 = full(0, 1);
  br.sum12 = 0.0;
  for (int k = 0; k < full.rows(); ++k) br.sum12 += full(0, k) * full(k, 1);
  if (dof == 1) {
    br.vacuous_reduction = true;
    br.hyperbolic = true;
    br.margin = std::numeric_limits<double>::infinity();
    return br;
  }
  if (degenerate || !reduced) {
    br.hyperbolic = false;
    br.margin = 0.0;
    return br;
  }
  br.margin = unit_circle_margin(*reduced);
  br.inconclusive = br.margin <= 1e-6;
  br.hyperbolic = br.margin > 1e-6;
  return br;
}

}  // namespace

condition_report check_conditions(const grazing_matrices& g) {
  condition_report rep;
  rep.direct = evaluate_branch(g.A, g.A_bar, g.a12_degenerate, g.dof);
  rep.inverse = evaluate_branch(g.A_inv, g.A_cal_bar, g.alpha12_degenerate, g.dof);
  rep.chosen_branch = rep.direct.holds() ? 3 : (rep.inverse.holds() ? 4 : 0);
  return rep;
}

spectral_asymptotics_result spectral_asymptotics(const system_definition& sys,
                                                 const std::vector<periodic_orbit>& samples_in,
                                                 const grazing_matrices& g,
                                                 const grazing_record& rec,
                                                 const orbit_options& opts,
                                                 double theta_align) {
  spectral_asymptotics_result out;
  if (theta_align <= 0.0) {
    theta_align = g.theta_seq.empty() ? 0.05 * sys.period : g.theta_seq.back();
  }
  out.theta_align = theta_align;
  out.lambda_plus_limit_pred = 0.0;
  out.det_d_limit_pred = 0.0;

  std::vector<periodic_orbit> samples = samples_in;
  std::sort(samples.begin(), samples.end(), [](const periodic_orbit& a, const periodic_orbit& b) {
    return a.min_speed() > b.min_speed();
  });

  integrator_options io = opts.integrator;
  io.graze_tol = std::min(io.graze_tol, opts.jacobian_graze_tol);
  io.store_dense = false;

  const vec a2 = g.column2();
  for (const auto& orb : samples) {
    if (orb.grazing_index < 0) continue;
    spectral_sample s;
    s.mu = orb.mu;
    s.speed = orb.min_speed();

    // re-anchor the section at tau0 + (-theta_align) so the contact sits at
    // phase 0 of the window, then take the monodromy there
    const double tau0 = orb.min_speed_tau();
    const vec z_align = orbit_state_at(sys, orb.theta, orb.mu, orb.z_star,
                                       tau0 - theta_align, io);
    auto res = map_with_jacobian(sys, state(tau0 - theta_align, z_align),
                                 tau0 - theta_align + sys.period, orb.mu, io);
    const mat& d = res.jac;
    s.det_D = d.determinant();

    Eigen::EigenSolver<mat> es(d);
    int i_max = 0, i_min = 0;
    for (int i = 0; i < d.rows(); ++i) {
      if (std::abs(es.eigenvalues()[i]) > std::abs(es.eigenvalues()[i_max])) i_max = i;
      if (std::abs(es.eigenvalues()[i]) < std::abs(es.eigenvalues()[i_min])) i_min = i;
    }
    s.lambda_max = es.eigenvalues()[i_max];
    s.lambda_min = es.eigenvalues()[i_min];
    s.spectral_radius = std::abs(s.lambda_max);
    for (int i = 0; i < d.rows(); ++i) {
      if (i != i_max &&
          std::abs(es.eigenvalues()[i]) > 0.99 * s.spectral_radius) {
        out.pairing_ambiguous = true;
      }
    }

    const double r = restitution_checked(sys, s.speed, orb.mu);
    s.lambda_plus_pred = -(r + 1.0) * g.a12() * rec.phi0 / s.speed;
    s.lambda_minus_pred =
        r * r * s.speed / ((r + 1.0) * rec.phi0 * g.alpha12());
    s.dev_plus = std::abs((s.lambda_max.real() - s.lambda_plus_pred) / s.lambda_plus_pred);
    s.dev_minus = std::abs((s.lambda_min.real() - s.lambda_minus_pred) / s.lambda_minus_pred);

    auto angle_between = [](const vec& u, const vec& v) {
      const double c = std::abs(u.dot(v)) / (u.norm() * v.norm());
      return std::acos(std::min(1.0, std::max(-1.0, c)));
    };
    const vec u_plus = es.eigenvectors().col(i_max).real();
    const vec u_minus = es.eigenvectors().col(i_min).real();
    vec e2 = vec::Zero(d.rows());
    e2[1] = 1.0;
    s.angle_u_plus = angle_between(u_plus, a2);
    s.angle_u_minus = angle_between(u_minus, e2);
    out.samples.push_back(std::move(s));
  }

  if (!out.samples.empty()) {
    const double r0 = restitution_checked(sys, 0.0, rec.mu_star);
    out.lambda_plus_limit_pred = -(r0 + 1.0) * g.a12() * rec.phi0;
    out.det_d_limit_pred = r0 * r0 * g.det_A;
    out.det_d_at_smallest = out.samples.back().det_D;

    // log-log slope over the last (smallest-speed) samples
    const int n_fit = std::min<std::size_t>(5, out.samples.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n_fit; ++i) {
      const auto& s = out.samples[out.samples.size() - 1 - i];
      const double lx = std::log(s.speed), ly = std::log(s.spectral_radius);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    out.slope_loglog = (n_fit * sxy - sx * sy) / (n_fit * sxx - sx * sx);

    // linear-in-speed extrapolation of lambda_max * Y0 to Y0 = 0
    double ax = 0, ay = 0, axx = 0, axy = 0;
    for (int i = 0; i < n_fit; ++i) {
      const auto& s = out.samples[out.samples.size() - 1 - i];
      const double x = s.speed, y = s.lambda_max.real() * s.speed;
      ax += x;
      ay += y;
      axx += x * x;
      axy += x * y;
    }
    if (n_fit >= 2) {
      const double slope = (n_fit * axy - ax * ay) / (n_fit * axx - ax * ax);
      out.lambda_plus_speed_extrap = (ay - slope * ax) / n_fit;
    } else {
      out.lambda_plus_speed_extrap = ay / std::max(1, n_fit);
    }
  }
  return out;
}

gamma_fit fit_gamma_surface(const system_definition& sys, double t_section, double mu,
                            const state& z_ref, const gamma_sample_spec& spec_in,
                            const integrator_options& opts_in) {
  gamma_sample_spec spec = spec_in;
  if (spec.y1_values.empty()) {
    for (double v : {2.5e-3, 5e-3, 7.5e-3, 1e-2}) {
      spec.y1_values.push_back(v);
      spec.y1_values.push_back(-v);
    }
  }
  if (spec.window_back <= 0.0) spec.window_back = 0.5 * sys.period;
  if (spec.window_fwd <= 0.0) spec.window_fwd = 0.5 * sys.period;

  integrator_options opts = opts_in;
  opts.store_dense = true;

  const vec zbar_base =
      spec.zbar_offset.size() ? vec(zbar_of(z_ref.z) + spec.zbar_offset) : zbar_of(z_ref.z);

  auto touches = [&](double x1, double y1) {
    const vec z0 = assemble_state(x1, y1, zbar_base);
    trajectory fwd =
        simulate(sys, state(t_section, z0), t_section + spec.window_fwd, mu, opts);
    if (!fwd.impacts.empty() || fwd.min_x1() <= 0.0) return true;
    trajectory bwd =
        simulate_backward(sys, state(t_section, z0), t_section - spec.window_back, mu, opts);
    return !bwd.impacts.empty() || bwd.min_x1() <= 0.0 || bwd.backward_stop;
  };

  gamma_fit fit;
  {
    vec a(sys.dof);
    sys.accel(z_ref.t, z_ref.z, mu, a);
    fit.f1_ref = a[0];
  }
  fit.inv_f1 = 1.0 / fit.f1_ref;
  fit.inv_2f1 = 0.5 / fit.f1_ref;

  fit.boundary.resize(spec.y1_values.size());
  std::vector<int> failed(spec.y1_values.size(), 0);
  par::for_indexed(
      spec.y1_values.size(),
      [&](std::size_t idx) {
        const double y1 = spec.y1_values[idx];
        double lo = 0.0, hi = spec.x1_max;
        if (touches(hi, y1)) {
          failed[idx] = 1;  // no bracket: the whole probe range reaches the wall
          return;
        }
        if (!touches(lo, y1)) {
          fit.boundary[idx] = {y1, 0.0};
          return;
        }
        for (int it = 0; it < spec.bisection_steps; ++it) {
          const double mid = 0.5 * (lo + hi);
          (touches(mid, y1) ? lo : hi) = mid;
        }
        fit.boundary[idx] = {y1, 0.5 * (lo + hi)};
      },
      spec.jobs);
  for (std::size_t i = 0; i < failed.size(); ++i) {
    if (failed[i]) {
      throw convergence_error("touching-set bisection failed at y1=" +
                              std::to_string(spec.y1_values[i]) +
                              ": no sign change over the probe range");
    }
  }

  double num = 0.0, den = 0.0, xmax = 0.0;
  for (const auto& [y1, xb] : fit.boundary) {
    num += xb * y1 * y1;
    den += y1 * y1 * y1 * y1;
    xmax = std::max(xmax, std::abs(xb));
  }
  fit.c = num / den;
  double resid = 0.0;
  for (const auto& [y1, xb] : fit.boundary) {
    resid = std::max(resid, std::abs(xb - fit.c * y1 * y1));
  }
  fit.residual_rel = xmax > 0.0 ? resid / xmax : 0.0;

  const double match1 = std::abs(fit.c - fit.inv_f1) / std::abs(fit.inv_f1);
  const double match2 = std::abs(fit.c - fit.inv_2f1) / std::abs(fit.inv_2f1);
  if (match2 < 0.15 && match2 < match1) {
    fit.matched_constant = 2;
  } else if (match1 < 0.15) {
    fit.matched_constant = 1;
  }
  return fit;
}

leev_probe_result probe_perturbed_products(const system_definition& sys,
                                           const std::vector<periodic_orbit>& samples,
                                           const grazing_matrices& g, double eps_rel,
                                           int count, std::uint64_t seed,
                                           const orbit_options& opts) {
  leev_probe_result out;
  out.seed = seed;
  out.eps_abs = eps_rel * g.A.norm();
  out.min_margin = std::numeric_limits<double>::infinity();

  integrator_options io = opts.integrator;
  io.graze_tol = std::min(io.graze_tol, opts.jacobian_graze_tol);
  io.store_dense = false;

  std::vector<mat> b_first;
  for (const auto& orb : samples) {
    auto split = poincare_jacobian_split(sys, orb.theta, orb.z_star, orb.mu, io);
    b_first.push_back(split.first);
  }

  const int dim = static_cast<int>(g.A.rows());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<mat> perturbations(count);
  for (int k = 0; k < count; ++k) {
    mat p(dim, dim);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) p(i, j) = gauss(rng);
    }
    perturbations[k] = g.A + p * (out.eps_abs / p.norm());
  }

  const std::size_t total = perturbations.size() * b_first.size();
  std::vector<double> margins(total, 0.0);
  par::for_indexed(total, [&](std::size_t idx) {
    const mat& ap = perturbations[idx % perturbations.size()];
    const mat& bf = b_first[idx / perturbations.size()];
    margins[idx] = unit_circle_margin(ap * bf);
  });
  for (double m : margins) {
    out.min_margin = std::min(out.min_margin, m);
    if (m > 1e-6) ++out.n_hyperbolic;
  }
  out.n_products = static_cast<int>(total);
  return out;
}

}  // namespace graze
