#include "graze/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>

#include "rk_internal.hpp"

namespace graze {

using detail::cubic_deriv;
using detail::cubic_eval;

vec dense_step::eval(double t) const {
  const double h = t1 - t0;
  const double sigma = (t - t0) / h;
  const int n = static_cast<int>(y0.size());
  vec out(n);
  for (int i = 0; i < n; ++i) out[i] = cubic_eval(y0[i], f0[i], y1[i], f1[i], h, sigma);
  return out;
}

vec dense_step::eval_derivative(double t) const {
  const double h = t1 - t0;
  const double sigma = (t - t0) / h;
  const int n = static_cast<int>(y0.size());
  vec out(n);
  for (int i = 0; i < n; ++i) out[i] = cubic_deriv(y0[i], f0[i], y1[i], f1[i], h, sigma);
  return out;
}

double dense_step::eval_component(double t, int i) const {
  const double h = t1 - t0;
  return cubic_eval(y0[i], f0[i], y1[i], f1[i], h, (t - t0) / h);
}

vec smooth_arc::eval(double t) const {
  for (const auto& s : steps) {
    const double lo = std::min(s.t0, s.t1), hi = std::max(s.t0, s.t1);
    if (t >= lo - 1e-12 && t <= hi + 1e-12) return s.eval(t);
  }
  throw integration_error("dense evaluation outside the arc span");
}

int trajectory::impact_count(double t_lo, double t_hi) const {
  int n = 0;
  for (const auto& ev : impacts) {
    if (ev.tau >= t_lo && ev.tau < t_hi) ++n;
  }
  return n;
}

int trajectory::transversal_impact_count(double t_lo, double t_hi) const {
  int n = 0;
  for (const auto& ev : impacts) {
    if (!ev.grazing && ev.tau >= t_lo && ev.tau < t_hi) ++n;
  }
  return n;
}

double trajectory::min_x1() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& arc : segments) {
    for (const auto& s : arc.steps) {
      m = std::min({m, s.y0[0], s.y1[0]});
      const double h = s.t1 - s.t0;
      double crit[2];
      const int n = detail::cubic_critical_points(s.y0[0], s.f0[0], s.y1[0], s.f1[0], h, crit);
      for (int i = 0; i < n; ++i) {
        m = std::min(m, cubic_eval(s.y0[0], s.f0[0], s.y1[0], s.f1[0], h, crit[i]));
      }
    }
  }
  if (!impacts.empty()) m = std::min(m, 0.0);
  return m;
}

smooth_arc flow_smooth(const system_definition& sys, const state& s0, double t_end,
                       double mu, const integrator_options& opts_in) {
  const auto opts = detail::with_cap(sys, opts_in);
  auto rhs = [&sys, mu](double t, const vec& y, vec& dy) {
    eval_vector_field_into(sys, t, y, mu, dy);
  };
  auto accel1 = [&sys, mu](double t, const vec& y) {
    static thread_local vec a;
    a.resize(sys.dof);
    sys.accel(t, y, mu, a);
    return a[0];
  };
  detail::arc_request req;
  req.t_end = t_end;
  req.events = detail::event_mode::wall;
  auto res = detail::run_arc(rhs, sys.state_dim(), sys.state_dim(), s0.t, s0.z, req, opts, accel1);

  smooth_arc arc;
  arc.start = s0;
  arc.end = state(res.t_end, res.y_end);
  if (opts_in.store_dense) arc.steps = std::move(res.steps);
  arc.rhs_evaluations = res.evaluations;
  if (res.hit) {
    arc.reason = (res.contact.grazing_touch || std::abs(res.y_end[1]) < opts.graze_tol)
                     ? arc_end::wall_grazing
                     : arc_end::wall_crossing;
  }
  return arc;
}

std::optional<double> locate_impact(const smooth_arc& arc, const integrator_options& opts) {
  for (const auto& st : arc.steps) {
    const double h = st.t1 - st.t0;
    if (h == 0.0) continue;
    double flo = st.y0[0];
    const double fhi = st.y1[0];
    if (std::abs(flo) <= opts.tol_event) flo = std::abs(flo);
    if (std::abs(fhi) <= opts.tol_event) continue;  // endpoint tangency, not a crossing
    if (!(flo > 0.0 && fhi < 0.0)) continue;
    double lo = 0.0, hi = 1.0;
    double sig = 0.5;
    for (int it = 0; it < 100; ++it) {
      const double v = cubic_eval(st.y0[0], st.f0[0], st.y1[0], st.f1[0], h, sig);
      if (std::abs(v) <= opts.tol_event) break;
      if (v > 0.0) {
        lo = sig;
      } else {
        hi = sig;
      }
      const double dv = cubic_deriv(st.y0[0], st.f0[0], st.y1[0], st.f1[0], h, sig) * h;
      double nxt = (dv != 0.0) ? sig - v / dv : 0.5 * (lo + hi);
      if (!(nxt > lo && nxt < hi)) nxt = 0.5 * (lo + hi);
      sig = nxt;
    }
    return st.t0 + sig * h;
  }
  return std::nullopt;
}

namespace {

/// Solves r(Y, mu) * Y = v for the approach speed of a backward-time contact.
double invert_restitution(const system_definition& sys, double v, double mu) {
  double y = v;  // exact when r == 1
  for (int it = 0; it < 50; ++it) {
    const double r = restitution_checked(sys, y, mu);
    const double slope = r + restitution_slope_value(sys, y, mu) * y;
    if (slope <= 0.0) {
      throw integration_error("restitution law not invertible: d(rY)/dY <= 0");
    }
    const double step = (r * y - v) / slope;
    y -= step;
    if (y <= 0.0) y = 0.5 * (y + step);
    if (std::abs(step) < 1e-15 * (1.0 + y)) break;
  }
  return y;
}

struct chatter_tracker {
  std::deque<std::pair<double, double>> recent;  // (tau, speed) inside a unit window

  void add(double tau, double speed) {
    recent.emplace_back(tau, speed);
    while (!recent.empty() && recent.front().first < tau - 1.0) recent.pop_front();
  }
  int count() const { return static_cast<int>(recent.size()); }
  bool speeds_decreasing() const {
    return recent.size() >= 2 && recent.back().second < recent.front().second;
  }
};

std::optional<double> scan_release(const std::function<double(double)>& g, double t_lo,
                                   double t_hi, double dt) {
  double prev_t = t_lo;
  double prev_v = g(t_lo);
  while (prev_t < t_hi) {
    const double t = std::min(prev_t + dt, t_hi);
    const double v = g(t);
    if (prev_v <= 0.0 && v > 0.0) {
      double a = prev_t, b = t;
      for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, std::abs(b)); ++it) {
        const double m = 0.5 * (a + b);
        (g(m) > 0.0 ? b : a) = m;
      }
      return 0.5 * (a + b);
    }
    if (t >= t_hi) break;
    prev_t = t;
    prev_v = v;
  }
  return std::nullopt;
}

}  // namespace

namespace {

/// Marches the constrained phase from cur (already pinned to the wall) until
/// release or t_end, appending the sticking record. Returns the state at the
/// release instant (or at t_end, unreleased).
state run_sticking_phase(const system_definition& sys, const state& entry, double t_end,
                         double mu, const integrator_options& opts, trajectory& tr) {
  sticking_interval stick;
  stick.t_enter = entry.t;
  stick.zbar_enter = zbar_of(entry.z);
  state cur = entry;

  if (sys.dof == 1) {
    auto g = [&](double t) { return release_test(sys, t, vec(0), mu); };
    auto rel = scan_release(g, cur.t, t_end, sys.period / 64.0);
    if (rel) {
      stick.t_release = *rel;
      stick.zbar_release = vec(0);
      cur = state(*rel, assemble_state(0.0, 0.0, vec(0)));
    } else {
      stick.t_release = t_end;
      stick.released = false;
      cur = state(t_end, assemble_state(0.0, 0.0, vec(0)));
    }
    tr.sticking.push_back(std::move(stick));
    return cur;
  }

  auto rhs = [&sys, mu](double t, const vec& zb, vec& d) {
    d = sticking_vector_field(sys, t, zb, mu);
  };
  auto null_accel = [](double, const vec&) { return 1.0; };
  vec zb = stick.zbar_enter;
  double t = cur.t;
  double g_prev = release_test(sys, t, zb, mu);
  bool released = false;
  while (t < t_end - 1e-13) {
    detail::arc_request req;
    req.t_end = std::min(t + sys.period / 32.0, t_end);
    auto res = detail::run_arc(rhs, 2 * (sys.dof - 1), 2 * (sys.dof - 1), t, zb, req, opts,
                               null_accel);
    const double g_next = release_test(sys, res.t_end, res.y_end, mu);
    if (g_prev <= 0.0 && g_next > 0.0) {
      auto dense_zb = [&](double tq) {
        for (const auto& st : res.steps) {
          if (tq >= st.t0 - 1e-12 && tq <= st.t1 + 1e-12) return st.eval(tq);
        }
        return res.y_end;
      };
      double a = t, b = res.t_end;
      for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, std::abs(b)); ++it) {
        const double m = 0.5 * (a + b);
        (release_test(sys, m, dense_zb(m), mu) > 0.0 ? b : a) = m;
      }
      const double t_rel = 0.5 * (a + b);
      stick.t_release = t_rel;
      stick.zbar_release = dense_zb(t_rel);
      cur = state(t_rel, assemble_state(0.0, 0.0, stick.zbar_release));
      released = true;
      break;
    }
    t = res.t_end;
    zb = res.y_end;
    g_prev = g_next;
  }
  if (!released) {
    stick.t_release = t_end;
    stick.released = false;
    stick.zbar_release = zb;
    cur = state(t_end, assemble_state(0.0, 0.0, zb));
  }
  tr.sticking.push_back(std::move(stick));
  return cur;
}

}  // namespace

trajectory simulate(const system_definition& sys, const state& s0, double t_end,
                    double mu, const integrator_options& opts_in) {
  const auto opts = detail::with_cap(sys, opts_in);
  auto tr = std::make_shared<trajectory>();
  tr->t0 = s0.t;
  tr->t1 = t_end;
  tr->final_state = s0;

  state cur = s0;
  chatter_tracker chatter;
  const int hard_cap = 40 * opts.max_impacts;

  try {
    if (cur.z[0] < -opts.tol_event) {
      throw integration_error("initial state outside the admissible half-space: x1=" +
                              std::to_string(cur.z[0]), tr);
    }
    // settle an initial state that starts on the wall
    if (cur.z[0] <= opts.tol_event && cur.t < t_end) {
      const double f1_wall = release_test(sys, cur.t, zbar_of(cur.z), mu);
      if (cur.z[1] < -opts.graze_tol) {
        impact_event ev;
        ev.tau = cur.t;
        ev.z_pre = cur.z;
        ev.approach_speed = -cur.z[1];
        cur = apply_impact(sys, cur, mu, 10.0 * opts.tol_event + 1e-9);
        ev.z_post = cur.z;
        tr->impacts.push_back(ev);
      } else if (std::abs(cur.z[1]) <= opts.graze_tol && f1_wall <= 0.0) {
        if (std::abs(f1_wall) <= 1e-9) {
          throw integration_error("degenerate tangency at the initial state", tr);
        }
        cur.z[0] = 0.0;
        cur.z[1] = 0.0;
        cur = run_sticking_phase(sys, cur, t_end, mu, opts, *tr);
      } else if (cur.z[1] < 0.0) {
        cur.z[1] = 0.0;  // grazing start: reversal of a zero is a zero
      }
      tr->final_state = cur;
    }

    while (cur.t < t_end - 1e-13 * std::max(1.0, std::abs(t_end))) {
      smooth_arc arc = flow_smooth(sys, cur, t_end, mu, opts);
      if (!opts_in.store_dense) arc.steps.clear();
      tr->segments.push_back(arc);
      cur = arc.end;
      tr->final_state = cur;
      if (arc.reason == arc_end::reached_t_end) break;

      impact_event ev;
      ev.tau = cur.t;
      ev.z_pre = cur.z;
      ev.approach_speed = -cur.z[1];

      const vec zbar = zbar_of(cur.z);
      const double f1_wall = release_test(sys, cur.t, zbar, mu);
      bool enter_sticking = false;

      if (arc.reason == arc_end::wall_grazing || ev.approach_speed < opts.graze_tol) {
        ev.grazing = true;
        ev.z_post = cur.z;
        ev.z_post[0] = 0.0;
        if (std::abs(f1_wall) <= 1e-9) {
          tr->impacts.push_back(ev);
          throw integration_error(
              "degenerate tangency: f1 = 0 at a grazing contact, t=" + std::to_string(cur.t),
              tr);
        }
        if (f1_wall > 0.0) {
          ev.z_post[1] = std::max(ev.z_post[1], 0.0);  // reversal of a zero is a zero
          tr->impacts.push_back(ev);
          cur.z = ev.z_post;
          continue;
        }
        ev.z_post[1] = 0.0;
        tr->impacts.push_back(ev);
        cur.z = ev.z_post;
        enter_sticking = true;
      } else {
        state post = apply_impact(sys, cur, mu, 10.0 * opts.tol_event + 1e-9);
        ev.z_post = post.z;
        tr->impacts.push_back(ev);
        chatter.add(ev.tau, ev.approach_speed);
        if (static_cast<int>(tr->impacts.size()) > hard_cap &&
            chatter.count() > 4 * opts.max_impacts) {
          throw integration_error("impact cascade without sticking conditions", tr);
        }
        const bool chatter_cap = chatter.count() >= opts.max_impacts &&
                                 chatter.speeds_decreasing() && f1_wall <= 0.0;
        const bool direct_stick = std::abs(post.z[1]) < opts.v_stick && f1_wall <= 0.0;
        cur = post;
        if (chatter_cap || direct_stick) {
          tr->chatter_truncated = tr->chatter_truncated || chatter_cap;
          cur.z[0] = 0.0;
          cur.z[1] = 0.0;
          enter_sticking = true;
        }
      }
      if (!enter_sticking) continue;

      cur = run_sticking_phase(sys, cur, t_end, mu, opts, *tr);
      tr->final_state = cur;
      chatter.recent.clear();
    }
  } catch (integration_error& err) {
    if (err.partial()) throw;
    throw integration_error(err.what(), tr);
  }
  tr->final_state = cur;
  return *tr;
}

trajectory simulate_backward(const system_definition& sys, const state& s0, double t_end,
                             double mu, const integrator_options& opts_in) {
  const auto opts = detail::with_cap(sys, opts_in);
  auto tr = std::make_shared<trajectory>();
  tr->t0 = t_end;
  tr->t1 = s0.t;
  tr->final_state = s0;

  state cur = s0;
  try {
    while (cur.t > t_end + 1e-13 * std::max(1.0, std::abs(t_end))) {
      smooth_arc arc = flow_smooth(sys, cur, t_end, mu, opts);
      if (!opts_in.store_dense) arc.steps.clear();
      tr->segments.push_back(arc);
      cur = arc.end;
      tr->final_state = cur;
      if (arc.reason == arc_end::reached_t_end) break;

      // the state at a backward contact carries the departure velocity v = y1
      const double v = cur.z[1];
      if (v < opts.graze_tol) {
        tr->backward_stop = true;  // grazing or sticking exit: not invertible
        break;
      }
      impact_event ev;
      ev.tau = cur.t;
      ev.z_post = cur.z;
      ev.approach_speed = invert_restitution(sys, v, mu);
      ev.z_pre = cur.z;
      ev.z_pre[1] = -ev.approach_speed;
      tr->impacts.push_back(ev);
      cur.z = ev.z_pre;
      if (tr->impacts.size() > 10000) {
        throw integration_error("backward impact cascade", tr);
      }
    }
  } catch (integration_error& err) {
    if (err.partial()) throw;
    throw integration_error(err.what(), tr);
  }
  tr->final_state = cur;
  return *tr;
}

vec stroboscopic_map(const system_definition& sys, double theta, const vec& z0,
                     double mu, const integrator_options& opts_in) {
  integrator_options opts = opts_in;
  opts.store_dense = false;
  trajectory tr = simulate(sys, state(-theta, z0), sys.period - theta, mu, opts);
  return tr.final_state.z;
}

vec stroboscopic_map_inverse(const system_definition& sys, double theta, const vec& z0,
                             double mu, const integrator_options& opts_in) {
  integrator_options opts = opts_in;
  opts.store_dense = false;
  trajectory tr = simulate_backward(sys, state(sys.period - theta, z0), -theta, mu, opts);
  if (tr.backward_stop) {
    throw integration_error("inverse map not defined: backward run hit a grazing contact");
  }
  return tr.final_state.z;
}

vec stroboscopic_iterate(const system_definition& sys, double theta, const vec& z0,
                         double mu, int m, const integrator_options& opts) {
  vec z = z0;
  for (int i = 0; i < std::abs(m); ++i) {
    z = (m > 0) ? stroboscopic_map(sys, theta, z, mu, opts)
                : stroboscopic_map_inverse(sys, theta, z, mu, opts);
  }
  return z;
}

// --- csv export ------------------------------------------------------------

namespace {

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string trajectory_csv(const trajectory& tr, int samples_per_step) {
  std::string out = "t";
  const int dim = tr.final_state.z.size() ? static_cast<int>(tr.final_state.z.size()) : 2;
  for (int k = 1; k <= dim / 2; ++k) {
    out += ",x" + std::to_string(k) + ",y" + std::to_string(k);
  }
  out += ",segment_id\n";

  auto emit = [&](double t, const vec& z, int seg) {
    append_number(out, t);
    for (int i = 0; i < dim; ++i) {
      out += ',';
      append_number(out, z[i]);
    }
    out += ',';
    out += std::to_string(seg);
    out += '\n';
  };

  int seg_id = 0;
  for (const auto& arc : tr.segments) {
    for (const auto& st : arc.steps) {
      emit(st.t0, st.y0.head(dim), seg_id);
      for (int s = 1; s < samples_per_step; ++s) {
        const double t = st.t0 + (st.t1 - st.t0) * s / samples_per_step;
        emit(t, st.eval(t).head(dim), seg_id);
      }
    }
    if (!arc.steps.empty()) emit(arc.end.t, arc.end.z, seg_id);
    ++seg_id;
  }
  return out;
}

std::string impacts_csv(const trajectory& tr) {
  std::string out = "tau,approach_speed,grazing\n";
  for (const auto& ev : tr.impacts) {
    append_number(out, ev.tau);
    out += ',';
    append_number(out, ev.approach_speed);
    out += ',';
    out += ev.grazing ? '1' : '0';
    out += '\n';
  }
  return out;
}

}  // namespace graze
