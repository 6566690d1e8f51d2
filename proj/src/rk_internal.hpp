#pragma once

// Internal Dormand-Prince 5(4) machinery shared by the plain and the
// variational integration paths. Not part of the public interface.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "graze/integrator.hpp"

namespace graze::detail {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

// Interior points where the cubic interpolant's residual peaks.
constexpr double defect_probe_a = 0.21132486540518713;
constexpr double defect_probe_b = 0.78867513459481287;

inline double cubic_eval(double x0, double d0, double x1, double d1, double h, double sigma) {
  const double cc1 = h * d0;
  const double cc2 = 3.0 * (x1 - x0) - h * (2.0 * d0 + d1);
  const double cc3 = 2.0 * (x0 - x1) + h * (d0 + d1);
  return x0 + sigma * (cc1 + sigma * (cc2 + sigma * cc3));
}

inline double cubic_deriv(double x0, double d0, double x1, double d1, double h, double sigma) {
  const double cc1 = h * d0;
  const double cc2 = 3.0 * (x1 - x0) - h * (2.0 * d0 + d1);
  const double cc3 = 2.0 * (x0 - x1) + h * (d0 + d1);
  return (cc1 + sigma * (2.0 * cc2 + 3.0 * sigma * cc3)) / h;
}

/// Critical points of the Hermite cubic inside (0, 1), computed with the
/// cancellation-safe quadratic formula (the cubic coefficient vanishes for
/// parabolic arcs). Returns the count (0..2), roots ascending.
inline int cubic_critical_points(double x0, double d0, double x1, double d1, double h,
                                 double out[2]) {
  const double cc1 = h * d0;
  const double cc2 = 3.0 * (x1 - x0) - h * (2.0 * d0 + d1);
  const double cc3 = 2.0 * (x0 - x1) + h * (d0 + d1);
  const double a = 3.0 * cc3, b = 2.0 * cc2, c = cc1;
  double roots[2];
  int n = 0;
  if (std::abs(a) <= 1e-14 * (std::abs(b) + std::abs(c))) {
    if (b != 0.0) roots[n++] = -c / b;
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b == 0.0 ? 1.0 : b));
      if (q != 0.0) {
        roots[n++] = q / a;
        roots[n++] = c / q;
      } else {
        roots[n++] = 0.0;
      }
    }
  }
  int m = 0;
  for (int i = 0; i < n; ++i) {
    if (roots[i] > 1e-12 && roots[i] < 1.0 - 1e-12) out[m++] = roots[i];
  }
  if (m == 2 && out[0] > out[1]) std::swap(out[0], out[1]);
  return m;
}

enum class event_mode { none, wall };

struct wall_hit {
  double tau = 0.0;
  vec y_at;
  vec f_at;
  bool grazing_touch = false;
};

template <class Rhs>
class arc_driver {
 public:
  arc_driver(Rhs rhs, int dim, int ctrl, const integrator_options& opts, double max_step_cap)
      : rhs_(rhs), dim_(dim), ctrl_(ctrl), opts_(opts), max_step_(max_step_cap) {
    for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_}) k->resize(dim);
    ytmp_.resize(dim);
    yerr_.resize(dim);
    ynew_.resize(dim);
  }

  long evaluations = 0;

  void eval(double t, const vec& y, vec& dy) {
    rhs_(t, y, dy);
    ++evaluations;
  }

  bool try_step(double t, const vec& y, double h, double& err_norm) {
    ytmp_ = y + h * a21 * k1_;
    eval(t + c2 * h, ytmp_, k2_);
    ytmp_ = y + h * (a31 * k1_ + a32 * k2_);
    eval(t + c3 * h, ytmp_, k3_);
    ytmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    eval(t + c4 * h, ytmp_, k4_);
    ytmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    eval(t + c5 * h, ytmp_, k5_);
    ytmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    eval(t + h, ytmp_, k6_);
    ynew_ = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
    eval(t + h, ynew_, k7_);
    yerr_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    if (!ynew_.allFinite()) {
      err_norm = 2.0;
      return false;
    }
    double acc = 0.0;
    for (int i = 0; i < ctrl_; ++i) {
      const double sc =
          opts_.abs_tol + opts_.rel_tol * std::max(std::abs(y[i]), std::abs(ynew_[i]));
      const double q = yerr_[i] / sc;
      acc += q * q;
    }
    err_norm = std::sqrt(acc / ctrl_);
    return err_norm <= 1.0;
  }

  bool defect_ok(double t, const vec& y, double h) {
    if (opts_.defect_factor <= 0.0) return true;
    for (double sigma : {defect_probe_a, defect_probe_b}) {
      double dn = 0.0, fn = 0.0;
      for (int i = 0; i < dim_; ++i) {
        ytmp_[i] = cubic_eval(y[i], k1_[i], ynew_[i], k7_[i], h, sigma);
      }
      eval(t + sigma * h, ytmp_, yerr_);
      for (int i = 0; i < ctrl_; ++i) {
        const double pd = cubic_deriv(y[i], k1_[i], ynew_[i], k7_[i], h, sigma);
        const double d = pd - yerr_[i];
        dn += d * d;
        fn += yerr_[i] * yerr_[i];
      }
      const double bound =
          opts_.defect_factor * (opts_.abs_tol + opts_.rel_tol * std::sqrt(fn));
      if (std::sqrt(dn) > bound) return false;
    }
    return true;
  }

  double initial_step(double t, const vec& y, double direction) {
    eval(t, y, k1_);
    double fn = 0.0, yn = 0.0;
    for (int i = 0; i < ctrl_; ++i) {
      const double sc = opts_.abs_tol + opts_.rel_tol * std::abs(y[i]);
      fn = std::max(fn, std::abs(k1_[i]) / sc);
      yn = std::max(yn, std::abs(y[i]) / sc);
    }
    double h = (fn > 0.0) ? 0.01 * std::max(1.0, yn) / fn : 1e-4;
    h = std::min(h, max_step_);
    return direction * h;
  }

  vec& k1() { return k1_; }
  const vec& ynew() const { return ynew_; }
  const vec& k7() const { return k7_; }
  double max_step() const { return max_step_; }

 private:
  Rhs rhs_;
  int dim_, ctrl_;
  integrator_options opts_;
  double max_step_;
  vec k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, yerr_, ynew_;
};

template <class Rhs>
vec integrate_plain(arc_driver<Rhs>& drv, double t0, const vec& y0, double t_end,
                    const integrator_options&) {
  if (t_end == t0) return y0;
  vec y = y0;
  double t = t0;
  const double direction = (t_end > t0) ? 1.0 : -1.0;
  double h = drv.initial_step(t, y, direction);
  int guard = 0;
  while ((t_end - t) * direction > 0.0) {
    if ((t + h - t_end) * direction > 0.0) h = t_end - t;
    double err = 0.0;
    if (drv.try_step(t, y, h, err)) {
      t += h;
      y = drv.ynew();
      drv.k1() = drv.k7();
      h *= std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-12), -0.2)));
      if (std::abs(h) > drv.max_step()) h = direction * drv.max_step();
    } else {
      h *= std::min(0.9, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-12), -0.2)));
    }
    if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(t)) || ++guard > 1000000) {
      throw integration_error("step size underflow during event refinement");
    }
  }
  return y;
}

/// Safeguarded Newton/bisection for the contact time on [t_lo, t_hi] with
/// x1(t_lo) > 0 > x1(t_hi); values come from sub-integration off the step start.
template <class Rhs>
double refine_crossing(arc_driver<Rhs>& drv, double t_anchor, const vec& y_anchor,
                       double t_lo, double t_hi, const integrator_options& opts, vec& y_out) {
  double a = t_lo, b = t_hi;
  vec ya = integrate_plain(drv, t_anchor, y_anchor, a, opts);
  double fa = ya[0];
  y_out = integrate_plain(drv, t_anchor, y_anchor, b, opts);
  double fb = y_out[0];
  if (fa < 0.0) {
    a = t_anchor;
    ya = y_anchor;
    fa = ya[0];
  }
  (void)fb;
  double t = b, ft = y_out[0];
  for (int it = 0; it < 80; ++it) {
    if (std::abs(ft) <= opts.tol_event) break;
    const double slope = y_out[1];
    double t_next = (slope != 0.0) ? t - ft / slope : 0.5 * (a + b);
    if (!(t_next > std::min(a, b) && t_next < std::max(a, b))) t_next = 0.5 * (a + b);
    if (std::abs(t_next - t) < 1e-16 * std::max(1.0, std::abs(t))) break;
    t = t_next;
    y_out = integrate_plain(drv, t_anchor, y_anchor, t, opts);
    ft = y_out[0];
    if ((ft > 0.0) == (fa > 0.0)) {
      a = t;
    } else {
      b = t;
    }
  }
  return t;
}

/// Newton on y1 = 0 for a tangential minimum of x1.
template <class Rhs, class Accel1>
double refine_minimum(arc_driver<Rhs>& drv, double t_anchor, const vec& y_anchor,
                      double t_guess, double span, const integrator_options& opts,
                      vec& y_out, Accel1&& accel1) {
  double t = t_guess;
  y_out = integrate_plain(drv, t_anchor, y_anchor, t, opts);
  for (int it = 0; it < 40; ++it) {
    const double g = y_out[1];
    const double dg = accel1(t, y_out);
    if (dg == 0.0) break;
    double step = std::clamp(-g / dg, -0.5 * std::abs(span), 0.5 * std::abs(span));
    if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(t))) break;
    t += step;
    y_out = integrate_plain(drv, t_anchor, y_anchor, t, opts);
    if (std::abs(y_out[1]) < 1e-14) break;
  }
  return t;
}

template <class Rhs, class Accel1>
bool scan_wall_event(arc_driver<Rhs>& drv, const dense_step& st, const integrator_options& opts,
                     Accel1&& accel1, wall_hit* hit) {
  const double h = st.t1 - st.t0;
  const double x0 = st.y0[0], x1v = st.y1[0];
  const double d0 = st.f0[0], d1 = st.f1[0];

  double brk[4];
  int nbrk = 0;
  brk[nbrk++] = 0.0;
  {
    double crit[2];
    const int m = cubic_critical_points(x0, d0, x1v, d1, h, crit);
    for (int i = 0; i < m; ++i) brk[nbrk++] = crit[i];
  }
  brk[nbrk++] = 1.0;

  const double near_wall = 2.0 * opts.tol_event + 100.0 * (opts.abs_tol + opts.rel_tol);

  double prev_sigma = brk[0];
  double prev_val = (std::abs(x0) <= opts.tol_event) ? std::abs(x0) : x0;

  for (int i = 1; i < nbrk; ++i) {
    const double sig = brk[i];
    const double val = cubic_eval(x0, d0, x1v, d1, h, sig);
    if (prev_val > 0.0 && val < 0.0) {
      const double tau = refine_crossing(drv, st.t0, st.y0, st.t0 + prev_sigma * h,
                                         st.t0 + sig * h, opts, hit->y_at);
      hit->tau = tau;
      hit->grazing_touch = false;
      return true;
    }
    if (i < nbrk - 1 && val >= 0.0 && val < near_wall) {
      // interior critical point hugging the wall: decide touch vs miss at
      // re-integration accuracy
      vec y_at;
      const double tmin =
          refine_minimum(drv, st.t0, st.y0, st.t0 + sig * h, h, opts, y_at, accel1);
      if (y_at[0] < -opts.tol_event) {
        const double tau = refine_crossing(drv, st.t0, st.y0, st.t0 + prev_sigma * h, tmin,
                                           opts, hit->y_at);
        hit->tau = tau;
        hit->grazing_touch = false;
        return true;
      }
      if (std::abs(y_at[0]) <= opts.tol_event) {
        hit->tau = tmin;
        hit->y_at = y_at;
        hit->grazing_touch = true;
        return true;
      }
    }
    prev_sigma = sig;
    prev_val = val;
  }

  // A minimum of x1 can sit exactly on the step boundary (the slope crosses
  // zero across the step but the interior critical points missed it). Checked
  // in the step-local ordering so backward arcs behave the same.
  const bool slope_flips = (h * st.f0[0] < 0.0) && (h * st.f1[0] >= 0.0);
  if (slope_flips) {
    double min_val = std::min(x1v, (std::abs(x0) <= opts.tol_event) ? std::abs(x0) : x0);
    for (int i = 1; i < nbrk - 1; ++i) {
      min_val = std::min(min_val, cubic_eval(x0, d0, x1v, d1, h, brk[i]));
    }
    if (min_val >= 0.0 && min_val < near_wall) {
      vec y_at;
      const double tmin = refine_minimum(drv, st.t0, st.y0, st.t1, h, opts, y_at, accel1);
      if (y_at[0] < -opts.tol_event) {
        const double tau =
            refine_crossing(drv, st.t0, st.y0, st.t0, tmin, opts, hit->y_at);
        hit->tau = tau;
        hit->grazing_touch = false;
        return true;
      }
      if (std::abs(y_at[0]) <= opts.tol_event) {
        hit->tau = tmin;
        hit->y_at = y_at;
        hit->grazing_touch = true;
        return true;
      }
    }
  }
  return false;
}

struct arc_request {
  double t_end = 0.0;
  event_mode events = event_mode::none;
};

struct arc_result {
  std::vector<dense_step> steps;
  double t_end = 0.0;
  vec y_end;
  bool hit = false;
  wall_hit contact;
  long evaluations = 0;
};

template <class Rhs, class Accel1>
arc_result run_arc(Rhs rhs, int dim, int ctrl, double t0, const vec& y0,
                   const arc_request& req, const integrator_options& opts, Accel1&& accel1) {
  const double direction = (req.t_end >= t0) ? 1.0 : -1.0;
  const double span = std::abs(req.t_end - t0);
  const double cap =
      opts.max_step > 0.0 ? opts.max_step : std::numeric_limits<double>::infinity();
  arc_driver<Rhs> drv(rhs, dim, ctrl, opts, cap);

  arc_result out;
  out.t_end = t0;
  out.y_end = y0;
  if (span == 0.0) return out;

  double t = t0;
  vec y = y0;
  double h = drv.initial_step(t, y, direction);

  int consecutive_rejects = 0;
  while ((req.t_end - t) * direction > 1e-14 * std::max(1.0, std::abs(t))) {
    bool final_step = false;
    if ((t + h - req.t_end) * direction > 0.0) {
      h = req.t_end - t;
      final_step = true;
    }
    double err = 0.0;
    const bool pass = drv.try_step(t, y, h, err);
    if (!pass || !drv.defect_ok(t, y, h)) {
      const double shrink =
          pass ? 0.5 : std::min(0.9, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-12), -0.2)));
      h *= shrink;
      if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(t)) || ++consecutive_rejects > 200) {
        out.evaluations = drv.evaluations;
        throw integration_error("step size underflow at t=" + std::to_string(t));
      }
      continue;
    }
    consecutive_rejects = 0;

    dense_step st;
    st.t0 = t;
    st.t1 = t + h;
    st.y0 = y;
    st.y1 = drv.ynew();
    st.f0 = drv.k1();
    st.f1 = drv.k7();

    if (req.events == event_mode::wall) {
      wall_hit hit;
      if (scan_wall_event(drv, st, opts, accel1, &hit) &&
          (hit.tau - st.t0) * direction > 0.0 &&
          (hit.tau - req.t_end) * direction <= 0.0) {
        vec f_at(dim);
        drv.eval(hit.tau, hit.y_at, f_at);
        st.t1 = hit.tau;
        st.y1 = hit.y_at;
        st.f1 = f_at;
        if (st.t1 != st.t0) out.steps.push_back(std::move(st));
        out.t_end = hit.tau;
        out.y_end = hit.y_at;
        out.hit = true;
        hit.f_at = std::move(f_at);
        out.contact = std::move(hit);
        out.evaluations = drv.evaluations;
        return out;
      }
    }

    out.steps.push_back(st);
    t = st.t1;
    y = st.y1;
    drv.k1() = st.f1;
    if (!final_step) {
      h *= std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-12), -0.2)));
      if (std::abs(h) > cap) h = direction * cap;
    }
  }
  out.t_end = t;
  out.y_end = y;
  out.evaluations = drv.evaluations;
  return out;
}

inline integrator_options with_cap(const system_definition& sys, const integrator_options& opts) {
  integrator_options o = opts;
  if (o.max_step <= 0.0) o.max_step = sys.period / 4.0;
  return o;
}

}  // namespace graze::detail
