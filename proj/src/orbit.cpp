#include "graze/orbit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

namespace graze {

namespace {

double spectral_radius(const mat& m) {
  return m.size() ? m.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
}

/// Impact list of the orbit through z_star, from a fresh dense simulation.
struct orbit_scan {
  std::vector<std::pair<double, double>> impacts;
  int grazing_index = -1;
  double residual = 0.0;
  trajectory traj;
};

orbit_scan scan_orbit(const system_definition& sys, double theta, double mu,
                      const vec& z_star, const orbit_options& opts) {
  integrator_options io = opts.integrator;
  io.store_dense = true;
  orbit_scan out;
  out.traj = simulate(sys, state(-theta, z_star), sys.period - theta, mu, io);
  out.residual = (out.traj.final_state.z - z_star).norm();
  for (const auto& ev : out.traj.impacts) {
    if (ev.grazing) continue;
    out.impacts.emplace_back(ev.tau, ev.approach_speed);
  }
  for (std::size_t i = 0; i < out.impacts.size(); ++i) {
    if (out.grazing_index < 0 ||
        out.impacts[i].second < out.impacts[out.grazing_index].second) {
      out.grazing_index = static_cast<int>(i);
    }
  }
  return out;
}

integrator_options jacobian_opts(const orbit_options& opts) {
  integrator_options io = opts.integrator;
  io.graze_tol = std::min(io.graze_tol, opts.jacobian_graze_tol);
  io.store_dense = false;
  return io;
}

}  // namespace

double orbit_family::theta0(double period) const {
  double best = period / 2.0;
  for (const auto& orb : samples) {
    if (orb.impacts.size() <= 1) continue;
    const double tau0 = orb.min_speed_tau();
    double lead = period, trail = period;
    for (std::size_t k = 0; k < orb.impacts.size(); ++k) {
      if (static_cast<int>(k) == orb.grazing_index) continue;
      double d = std::fmod(orb.impacts[k].first - tau0, period);
      if (d < 0) d += period;
      lead = std::min(lead, d);
      trail = std::min(trail, period - d);
    }
    best = std::min(best, 0.5 * std::min(lead, trail));
  }
  return best;
}

periodic_orbit find_periodic(const system_definition& sys, double theta, double mu,
                             const vec& z_guess, const orbit_options& opts) {
  const auto io = jacobian_opts(opts);
  vec z = z_guess;

  auto res = poincare_jacobian(sys, theta, z, mu, io);
  vec F = res.z_end - z;
  double fnorm = F.norm();
  const int count0 = static_cast<int>(res.saltations.size());
  int iterations = 0;

  while (fnorm > opts.newton_tol) {
    if (iterations >= opts.max_newton) {
      throw convergence_error("Newton shooting did not converge after " +
                              std::to_string(opts.max_newton) +
                              " iterations, residual=" + std::to_string(fnorm));
    }
    const int dim = static_cast<int>(z.size());
    mat A = res.jac - mat::Identity(dim, dim);
    vec step = A.partialPivLu().solve(-F);
    if (!step.allFinite()) {
      throw convergence_error("singular shooting Jacobian at mu=" + std::to_string(mu));
    }

    double damping = 1.0;
    vec z_next;
    map_jacobian_result res_next;
    double fnorm_next = 0.0;
    for (;;) {
      z_next = z + damping * step;
      res_next = poincare_jacobian(sys, theta, z_next, mu, io);
      fnorm_next = (res_next.z_end - z_next).norm();
      if (fnorm_next < fnorm * (1.0 - 0.25 * damping) || damping <= 1.0 / 64.0) break;
      damping *= 0.5;
    }
    const int count_next = static_cast<int>(res_next.saltations.size());
    if (count_next != count0) {
      throw structural_change_error(
          "impact count changed during Newton shooting (" + std::to_string(count0) + " -> " +
              std::to_string(count_next) + ") at mu=" + std::to_string(mu),
          z_next, count0, count_next);
    }
    z = z_next;
    res = res_next;
    F = res.z_end - z;
    fnorm = F.norm();
    ++iterations;
  }

  periodic_orbit orb;
  orb.mu = mu;
  orb.theta = theta;
  orb.z_star = z;
  orb.jacobian = res.jac;
  orb.newton_iterations = iterations;

  auto scan = scan_orbit(sys, theta, mu, z, opts);
  orb.residual = scan.residual;
  orb.impacts = std::move(scan.impacts);
  orb.grazing_index = scan.grazing_index;
  orb.impacts_per_period = static_cast<int>(orb.impacts.size());
  if (orb.impacts_per_period != count0) {
    throw structural_change_error("re-simulated impact count disagrees with the shooting run",
                                  z, count0, orb.impacts_per_period);
  }
  return orb;
}

orbit_family continue_family(const system_definition& sys, double theta, double mu_start,
                             double mu_end, const periodic_orbit& orbit0,
                             const orbit_options& opts) {
  orbit_family fam;
  fam.theta = theta;
  fam.samples.push_back(orbit0);

  const double span = mu_end - mu_start;
  double dmu = span / 50.0;
  const double dmu_cap = std::abs(span) / 8.0;
  double mu = mu_start;

  // approach speed below which a structural change is read as grazing
  const double graze_approach = 0.05;

  while ((mu_end - mu) * (span > 0 ? 1.0 : -1.0) > 1e-14) {
    double mu_next = mu + dmu;
    if ((mu_next - mu_end) * (span > 0 ? 1.0 : -1.0) > 0.0) mu_next = mu_end;

    const auto& last = fam.samples.back();
    vec guess = last.z_star;
    if (fam.samples.size() >= 2) {
      const auto& prev = fam.samples[fam.samples.size() - 2];
      const double dprev = last.mu - prev.mu;
      if (std::abs(dprev) > 1e-15) {
        guess += (last.z_star - prev.z_star) * ((mu_next - last.mu) / dprev);
      }
    }

    try {
      periodic_orbit orb = find_periodic(sys, theta, mu_next, guess, opts);
      if (orb.impacts_per_period != last.impacts_per_period) {
        if (last.min_speed() < graze_approach) {
          fam.hit_grazing = true;
          return fam;
        }
        throw convergence_error(
            "structural change away from grazing: impact count " +
            std::to_string(last.impacts_per_period) + " -> " +
            std::to_string(orb.impacts_per_period) + " at mu=" + std::to_string(mu_next) +
            " with approach speed " + std::to_string(last.min_speed()));
      }
      fam.samples.push_back(std::move(orb));
      mu = mu_next;
      if (fam.samples.back().newton_iterations <= 4) {
        dmu *= 1.5;
        if (std::abs(dmu) > dmu_cap) dmu = (span > 0 ? dmu_cap : -dmu_cap);
      }
    } catch (const structural_change_error&) {
      if (last.min_speed() < graze_approach) {
        fam.hit_grazing = true;
        return fam;
      }
      dmu *= 0.5;
    } catch (const convergence_error&) {
      dmu *= 0.5;
    }
    if (std::abs(dmu) < 1e-12) {
      if (fam.samples.back().min_speed() < graze_approach) {
        fam.hit_grazing = true;
        return fam;
      }
      throw continuation_stall_error(
          "continuation stalled at mu=" + std::to_string(mu) + " (step below 1e-12)", fam);
    }
  }
  return fam;
}

double grazing_gap(const system_definition& sys, const periodic_orbit& orbit,
                   const orbit_options& opts) {
  if (orbit.grazing_index >= 0) return orbit.min_speed();
  // virtual side: signed by the closest pass of the non-impacting orbit
  auto scan = scan_orbit(sys, orbit.theta, orbit.mu, orbit.z_star, opts);
  double min_x = std::numeric_limits<double>::infinity();
  double t_at = 0.0;
  for (const auto& arc : scan.traj.segments) {
    for (const auto& st : arc.steps) {
      if (st.y0[0] < min_x) {
        min_x = st.y0[0];
        t_at = st.t0;
      }
      if (st.y1[0] < min_x) {
        min_x = st.y1[0];
        t_at = st.t1;
      }
    }
  }
  min_x = std::min(min_x, scan.traj.min_x1());
  const double f1 = release_test(sys, t_at, zbar_of(scan.traj.final_state.z), orbit.mu);
  return -std::sqrt(2.0 * std::max(f1, 1e-6) * std::max(min_x, 0.0));
}

namespace {

periodic_orbit solve_with_retry(const system_definition& sys, double theta, double mu,
                                const vec& guess, const orbit_options& opts) {
  vec g = guess;
  for (int attempt = 0;; ++attempt) {
    try {
      return find_periodic(sys, theta, mu, g, opts);
    } catch (const structural_change_error& err) {
      if (attempt >= 3) throw;
      g = err.iterate;  // restart on the other side of the structural boundary
    }
  }
}

}  // namespace

grazing_record detect_grazing(const system_definition& sys, orbit_family& family,
                              const orbit_options& opts) {
  if (family.samples.empty()) {
    throw convergence_error("grazing detection needs a non-empty family");
  }
  // order the two best samples by |gap|
  std::vector<const periodic_orbit*> by_speed;
  for (const auto& s : family.samples) by_speed.push_back(&s);
  std::sort(by_speed.begin(), by_speed.end(),
            [](const periodic_orbit* a, const periodic_orbit* b) {
              return a->min_speed() < b->min_speed();
            });

  orbit_options tight = opts;
  double mu_a = by_speed.size() > 1 ? by_speed[1]->mu : by_speed[0]->mu;
  double gap_a = by_speed.size() > 1 ? by_speed[1]->min_speed() : by_speed[0]->min_speed();
  double mu_b = by_speed[0]->mu;
  double gap_b = by_speed[0]->min_speed();
  vec guess = by_speed[0]->z_star;

  double mu_neg = 0.0, mu_pos = 0.0;
  bool have_neg = false;
  bool have_pos = gap_b > 0.0;
  if (have_pos) mu_pos = mu_b;

  periodic_orbit best = *by_speed[0];
  double best_gap = gap_b;

  const double target = 0.99 * opts.integrator.graze_tol;
  for (int it = 0; it < 80 && std::abs(best_gap) > target; ++it) {
    double mu_next;
    if (std::abs(gap_b - gap_a) > 1e-300) {
      mu_next = mu_b - gap_b * (mu_b - mu_a) / (gap_b - gap_a);
    } else {
      mu_next = 0.5 * (mu_a + mu_b);
    }
    if (have_neg && have_pos) {
      // keep the iterate inside the bracket
      const double lo = std::min(mu_neg, mu_pos), hi = std::max(mu_neg, mu_pos);
      if (!(mu_next > lo && mu_next < hi)) mu_next = 0.5 * (mu_neg + mu_pos);
    }
    if (!std::isfinite(mu_next)) {
      throw convergence_error("grazing secant produced a non-finite parameter");
    }

    // widen the shooting tolerance on the last, worst conditioned steps
    if (std::abs(gap_b) < 1e-4) tight.newton_tol = std::max(opts.newton_tol, 1e-8);
    periodic_orbit orb = solve_with_retry(sys, family.theta, mu_next, guess, tight);
    const double gap = grazing_gap(sys, orb, opts);

    mu_a = mu_b;
    gap_a = gap_b;
    mu_b = mu_next;
    gap_b = gap;
    guess = orb.z_star;
    if (gap > 0.0) {
      have_pos = true;
      mu_pos = mu_next;
    } else {
      have_neg = true;
      mu_neg = mu_next;
    }
    if (std::abs(gap) < std::abs(best_gap)) {
      best = orb;
      best_gap = gap;
    }
  }
  if (std::abs(best_gap) > opts.integrator.graze_tol) {
    throw convergence_error("grazing bracket failure: best |gap|=" + std::to_string(best_gap));
  }

  // tangency data from the re-simulated orbit at mu_star
  grazing_record rec;
  rec.mu_star = best.mu;
  rec.theta = family.theta;
  rec.z_star = best.z_star;

  auto scan = scan_orbit(sys, family.theta, best.mu, best.z_star, opts);
  double tau0 = 0.0, x_res = 0.0, y_res = 0.0;
  vec zbar0;
  if (best.grazing_index >= 0 && !scan.traj.impacts.empty()) {
    const auto* ev = &scan.traj.impacts.front();
    for (const auto& e : scan.traj.impacts) {
      if (e.approach_speed < ev->approach_speed) ev = &e;
    }
    tau0 = ev->tau;
    x_res = std::abs(ev->z_pre[0]);
    y_res = ev->approach_speed;
    zbar0 = zbar_of(ev->z_pre);
  } else {
    // closest pass of the virtual orbit
    double min_x = std::numeric_limits<double>::infinity();
    const dense_step* at = nullptr;
    double t_at = 0.0;
    for (const auto& arc : scan.traj.segments) {
      for (const auto& st : arc.steps) {
        for (double tq : {st.t0, 0.5 * (st.t0 + st.t1), st.t1}) {
          const double xv = st.eval_component(tq, 0);
          if (xv < min_x) {
            min_x = xv;
            at = &st;
            t_at = tq;
          }
        }
      }
    }
    if (!at) throw convergence_error("grazing record: empty trajectory");
    // polish the minimum on the dense output
    double lo = at->t0, hi = at->t1;
    for (int k = 0; k < 60; ++k) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (at->eval_component(m1, 0) < at->eval_component(m2, 0)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    t_at = 0.5 * (lo + hi);
    const vec z_at = at->eval(t_at);
    tau0 = t_at;
    x_res = std::abs(z_at[0]);
    y_res = std::abs(z_at[1]);
    zbar0 = zbar_of(z_at);
  }
  rec.tau0 = tau0;
  rec.zbar0 = zbar0;
  rec.x_residual = x_res;
  rec.y_residual = y_res;
  rec.phi0 = release_test(sys, tau0, zbar0, best.mu);
  if (rec.phi0 <= 0.0) {
    throw convergence_error("degenerate grazing: f1 at the tangency is " +
                            std::to_string(rec.phi0) + " (must be positive)");
  }
  family.grazing = rec;
  return rec;
}

periodic_orbit refine_at_speed(const system_definition& sys, const orbit_family& family,
                               double speed_target, const orbit_options& opts) {
  if (family.samples.empty()) throw convergence_error("empty family");
  // secant on mu -> min_speed - target, seeded by the nearest two samples
  std::vector<const periodic_orbit*> by_err;
  for (const auto& s : family.samples) by_err.push_back(&s);
  std::sort(by_err.begin(), by_err.end(),
            [speed_target](const periodic_orbit* a, const periodic_orbit* b) {
              return std::abs(a->min_speed() - speed_target) <
                     std::abs(b->min_speed() - speed_target);
            });
  double mu_a, err_a;
  double mu_b = by_err[0]->mu;
  double err_b = by_err[0]->min_speed() - speed_target;
  vec guess = by_err[0]->z_star;
  if (by_err.size() > 1) {
    mu_a = by_err[1]->mu;
    err_a = by_err[1]->min_speed() - speed_target;
  } else {
    mu_a = mu_b * (1.0 + 1e-3) + 1e-6;
    err_a = err_b + 1.0;
  }
  periodic_orbit best = *by_err[0];
  double best_err = err_b;

  for (int it = 0; it < 60 && std::abs(best_err) > 1e-9 * (1.0 + speed_target); ++it) {
    if (std::abs(err_b - err_a) < 1e-300) break;
    const double mu_next = mu_b - err_b * (mu_b - mu_a) / (err_b - err_a);
    if (!std::isfinite(mu_next)) break;
    periodic_orbit orb = solve_with_retry(sys, family.theta, mu_next, guess, opts);
    const double err = orb.min_speed() - speed_target;
    mu_a = mu_b;
    err_a = err_b;
    mu_b = mu_next;
    err_b = err;
    guess = orb.z_star;
    if (std::abs(err) < std::abs(best_err)) {
      best = std::move(orb);
      best_err = err;
    }
  }
  if (std::abs(best_err) > 1e-6 * (1.0 + speed_target)) {
    throw convergence_error("could not pin the orbit at approach speed " +
                            std::to_string(speed_target));
  }
  return best;
}

std::string family_csv(const orbit_family& family) {
  std::size_t n_imp = 0;
  for (const auto& s : family.samples) n_imp = std::max(n_imp, s.impacts.size());

  std::string out = "mu,residual,n_impacts,spectral_radius";
  for (std::size_t k = 0; k < n_imp; ++k) {
    out += ",tau_" + std::to_string(k) + ",Y_" + std::to_string(k);
  }
  out += '\n';
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  };
  for (const auto& s : family.samples) {
    num(s.mu);
    out += ',';
    num(s.residual);
    out += ',' + std::to_string(s.impacts_per_period) + ',';
    num(spectral_radius(s.jacobian));
    for (std::size_t k = 0; k < n_imp; ++k) {
      out += ',';
      num(k < s.impacts.size() ? s.impacts[k].first : std::nan(""));
      out += ',';
      num(k < s.impacts.size() ? s.impacts[k].second : std::nan(""));
    }
    out += '\n';
  }
  return out;
}

}  // namespace graze
