#include "graze/chaosdiag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <Eigen/Eigenvalues>

#include "graze/parallel.hpp"

namespace graze {

namespace {

double default_seed_delta(const vec& z_star, double requested) {
  if (requested > 0.0) return requested;
  return 1e-5 * z_star.norm() + 1e-8;
}

vec real_unit_eigenvector(const Eigen::EigenSolver<mat>& es, int idx) {
  vec v = es.eigenvectors().col(idx).real();
  const vec vi = es.eigenvectors().col(idx).imag();
  if (vi.norm() > 1e-7 * (v.norm() + vi.norm())) {
    throw convergence_error("eigendirection is complex: no one-dimensional manifold");
  }
  int dominant = 0;
  v.cwiseAbs().maxCoeff(&dominant);
  if (v[dominant] < 0.0) v = -v;
  return v / v.norm();
}

/// One application of S^{+-power}; returns the new state and the transversal
/// impact count of the realizing orbit, or nothing when the map is not
/// available (escape, non-invertible backward contact).
std::optional<std::pair<vec, int>> apply_power(const system_definition& sys, double theta,
                                               double mu, const vec& z, int power,
                                               bool inverse, double escape_radius,
                                               const integrator_options& iopts) {
  integrator_options opts = iopts;
  opts.store_dense = false;
  vec cur = z;
  int impacts = 0;
  try {
    for (int k = 0; k < power; ++k) {
      if (!inverse) {
        trajectory tr = simulate(sys, state(-theta, cur), sys.period - theta, mu, opts);
        impacts += tr.transversal_impact_count(-theta, sys.period - theta);
        cur = tr.final_state.z;
      } else {
        trajectory tr =
            simulate_backward(sys, state(sys.period - theta, cur), -theta, mu, opts);
        if (tr.backward_stop) return std::nullopt;
        impacts += static_cast<int>(tr.impacts.size());
        cur = tr.final_state.z;
      }
      if (!cur.allFinite() || cur.norm() > escape_radius) return std::nullopt;
    }
  } catch (const integration_error&) {
    return std::nullopt;
  }
  return std::make_pair(cur, impacts);
}

}  // namespace

local_manifold_seeds local_manifolds(const system_definition& sys, double theta, double mu,
                                     const periodic_orbit& orbit, const manifold_options& opts,
                                     const integrator_options& iopts) {
  Eigen::EigenSolver<mat> es(orbit.jacobian);
  const int dim = static_cast<int>(orbit.jacobian.rows());
  int i_max = 0, i_min = 0;
  for (int i = 0; i < dim; ++i) {
    if (std::abs(es.eigenvalues()[i]) > std::abs(es.eigenvalues()[i_max])) i_max = i;
    if (std::abs(es.eigenvalues()[i]) < std::abs(es.eigenvalues()[i_min])) i_min = i;
  }
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) {
    margin = std::min(margin, std::abs(std::abs(es.eigenvalues()[i]) - 1.0));
  }
  if (margin <= 1e-6) {
    throw convergence_error("fixed point not hyperbolic: unit-circle margin " +
                            std::to_string(margin));
  }
  if (std::abs(es.eigenvalues()[i_max]) <= 1.0 || std::abs(es.eigenvalues()[i_min]) >= 1.0) {
    throw convergence_error("fixed point is not a saddle");
  }

  local_manifold_seeds out;
  out.z_star = orbit.z_star;
  out.lambda_plus = es.eigenvalues()[i_max];
  out.lambda_minus = es.eigenvalues()[i_min];
  out.u_plus = real_unit_eigenvector(es, i_max);
  out.u_minus = real_unit_eigenvector(es, i_min);

  integrator_options io = iopts;
  io.store_dense = false;

  // lambda-consistency of the seeds, shrinking the offset until the linear
  // model explains the map
  auto validate = [&](const vec& u, std::complex<double> lam, bool inverse, double& delta,
                      double& residual, int& shrinks) {
    delta = default_seed_delta(orbit.z_star, opts.seed_delta);
    const double lam_eff = inverse ? 1.0 / lam.real() : lam.real();
    for (shrinks = 0; shrinks <= 4; ++shrinks) {
      vec mapped;
      if (!inverse) {
        mapped = stroboscopic_map(sys, theta, orbit.z_star + delta * u, mu, io);
      } else {
        mapped = stroboscopic_map_inverse(sys, theta, orbit.z_star + delta * u, mu, io);
      }
      residual = (mapped - orbit.z_star - lam_eff * delta * u).norm() /
                 (std::abs(lam_eff) * delta);
      if (residual <= 0.1) return;
      delta *= 0.25;
    }
    throw convergence_error("seed validation failed: linear residual " +
                            std::to_string(residual) + " after shrinking");
  };
  validate(out.u_plus, out.lambda_plus, false, out.seed_delta_unstable,
           out.residual_unstable, out.shrink_steps_unstable);
  validate(out.u_minus, out.lambda_minus, true, out.seed_delta_stable, out.residual_stable,
           out.shrink_steps_stable);
  return out;
}

namespace {

struct growth_context {
  const system_definition* sys;
  double theta;
  double mu;
  int power;
  bool inverse;
  double escape_radius;
  const integrator_options* iopts;
  vec z_star;
  vec direction;
  double sign;

  /// Exact iterate of the seed point at offset s: (S^{+-power})^depth.
  std::optional<std::pair<vec, int>> eval(double s, int depth) const {
    vec cur = z_star + sign * s * direction;
    int impacts = 0;
    for (int d = 0; d < depth; ++d) {
      auto nxt = apply_power(*sys, theta, mu, cur, power, inverse, escape_radius, *iopts);
      if (!nxt) return std::nullopt;
      cur = nxt->first;
      impacts = nxt->second;  // count of the last application only
    }
    return std::make_pair(cur, impacts);
  }
};

struct raw_point {
  double s = 0.0;
  vec z;
  int impacts = 0;
  bool valid = false;
};

/// In-order gap refinement between two evaluated source offsets.
void refine_between(const growth_context& ctx, int depth, const manifold_options& opts,
                    raw_point lo, const raw_point& hi, int level,
                    std::vector<raw_point>& out) {
  if (level >= opts.refine_levels ||
      static_cast<int>(out.size()) >= opts.max_points_per_branch) {
    out.push_back(hi);
    return;
  }
  const bool lo_far = lo.valid && (lo.z - ctx.z_star).norm() > opts.curve_radius;
  const bool hi_far = hi.valid && (hi.z - ctx.z_star).norm() > opts.curve_radius;
  const bool need =
      lo.valid && hi.valid && !(lo_far && hi_far) && (hi.z - lo.z).norm() > opts.max_gap;
  if (!need && (lo.valid == hi.valid)) {
    out.push_back(hi);
    return;
  }
  const double s_mid = (lo.s > 0.0 && hi.s > 0.0) ? std::sqrt(lo.s * hi.s)
                                                  : 0.5 * (lo.s + hi.s);
  raw_point mid;
  mid.s = s_mid;
  if (auto v = ctx.eval(s_mid, depth)) {
    mid.z = v->first;
    mid.impacts = v->second;
    mid.valid = true;
  }
  refine_between(ctx, depth, opts, lo, mid, level + 1, out);
  refine_between(ctx, depth, opts, mid, hi, level + 1, out);
}

}  // namespace

manifold_curve grow_manifold(const system_definition& sys, double theta, double mu,
                             const local_manifold_seeds& seeds, bool stable, int depth,
                             const manifold_options& opts_in,
                             const integrator_options& iopts) {
  manifold_options opts = opts_in;
  if (opts.curve_radius <= 0.0) opts.curve_radius = 6.0;

  manifold_curve curve;
  curve.stable = stable;
  curve.z_star = seeds.z_star;
  curve.lambda = stable ? seeds.lambda_minus : seeds.lambda_plus;
  curve.direction = stable ? seeds.u_minus : seeds.u_plus;
  const double lam_fwd = stable ? 1.0 / curve.lambda.real() : curve.lambda.real();
  curve.map_power = (lam_fwd < 0.0) ? 2 : 1;
  const double lam_eff = std::pow(std::abs(lam_fwd), curve.map_power);
  const double delta = stable ? seeds.seed_delta_stable : seeds.seed_delta_unstable;

  growth_context ctx;
  ctx.sys = &sys;
  ctx.theta = theta;
  ctx.mu = mu;
  ctx.power = curve.map_power;
  ctx.inverse = stable;
  ctx.escape_radius = opts.escape_radius;
  ctx.iopts = &iopts;
  ctx.z_star = seeds.z_star;
  ctx.direction = curve.direction;

  for (double sign : {1.0, -1.0}) {
    ctx.sign = sign;
    std::vector<manifold_point> branch;
    double arclength = 0.0;
    vec prev = seeds.z_star;
    int prev_impacts = -1;
    bool done = false;

    for (int d = 0; d <= depth && !done; ++d) {
      // fundamental source interval [delta, delta*lam_eff] mapped d times
      const int n0 = 24;
      std::vector<raw_point> pts;
      {
        raw_point first;
        first.s = delta;
        if (auto v = ctx.eval(delta, d)) {
          first.z = v->first;
          first.impacts = v->second;
          first.valid = true;
        }
        pts.push_back(first);
        raw_point lo = first;
        for (int i = 1; i <= n0; ++i) {
          raw_point hi;
          hi.s = delta * std::pow(lam_eff, static_cast<double>(i) / n0);
          if (auto v = ctx.eval(hi.s, d)) {
            hi.z = v->first;
            hi.impacts = v->second;
            hi.valid = true;
          }
          refine_between(ctx, d, opts, lo, hi, 0, pts);
          lo = hi;
        }
      }
      bool all_outside = true;
      for (auto& rp : pts) {
        if (!rp.valid) {
          if (stable) curve.truncated_backward = true;
          continue;
        }
        if (rp.z.norm() > opts.escape_radius) {
          curve.truncated_escape = true;
          continue;
        }
        const double dist = (rp.z - seeds.z_star).norm();
        if (dist <= opts.curve_radius) all_outside = false;

        manifold_point mp;
        mp.z = rp.z;
        mp.depth = d;
        mp.source_param = rp.s;
        mp.impact_count = rp.impacts;
        if (!branch.empty()) arclength += (rp.z - prev).norm();
        mp.arclength = arclength;
        mp.corner = (prev_impacts >= 0 && d > 0 && rp.impacts != prev_impacts);
        prev = rp.z;
        prev_impacts = rp.impacts;
        branch.push_back(std::move(mp));
        if (static_cast<int>(branch.size()) >= opts.max_points_per_branch) {
          done = true;
          break;
        }
      }
      if (all_outside && d > 0) done = true;
    }
    curve.branches.push_back(std::move(branch));
  }
  return curve;
}

namespace {

struct curve_segment {
  Eigen::Vector2d a, b;
  int depth_a = 0, depth_b = 0;
  double s_a = 0.0, s_b = 0.0;
  double sign = 1.0;
};

std::vector<curve_segment> planar_segments(const manifold_curve& c) {
  std::vector<curve_segment> out;
  double sign = 1.0;
  for (std::size_t bi = 0; bi < c.branches.size(); ++bi, sign = -sign) {
    const auto& br = c.branches[bi];
    for (std::size_t i = 1; i < br.size(); ++i) {
      if (br[i - 1].depth != br[i].depth) continue;  // skip tiling bridges
      curve_segment seg;
      seg.a = br[i - 1].z.head<2>();
      seg.b = br[i].z.head<2>();
      seg.depth_a = br[i - 1].depth;
      seg.depth_b = br[i].depth;
      seg.s_a = br[i - 1].source_param;
      seg.s_b = br[i].source_param;
      seg.sign = (bi == 0) ? 1.0 : -1.0;
      out.push_back(seg);
    }
  }
  return out;
}

/// Forward iterate count per fundamental application of each curve.
int forward_periods(const manifold_curve& c) { return c.map_power; }

struct refine_outcome {
  vec p;
  double residual = 1e300;
  bool ok = false;
  double a = 0.0, b = 0.0;
};

/// Newton on S^{ku}(seed_u(a)) = S^{-ks}(seed_s(b)) through the exact seed
/// parametrizations of both curves.
refine_outcome refine_intersection(const system_definition& sys, double theta, double mu,
                                   const manifold_curve& wu, const manifold_curve& ws,
                                   double a0, double sign_u, int depth_u, double b0,
                                   double sign_s, int depth_s,
                                   const integrator_options& iopts) {
  integrator_options io = iopts;
  io.store_dense = false;
  const int ku = depth_u * forward_periods(wu);
  const int ks = depth_s * forward_periods(ws);
  const double period = sys.period;

  refine_outcome out;
  double a = a0, b = b0;
  double fnorm = 1e300;
  vec pu, ps;

  for (int it = 0; it < 25; ++it) {
    const vec qu = wu.z_star + sign_u * a * wu.direction;
    const vec qs = ws.z_star + sign_s * b * ws.direction;
    map_jacobian_result ru, rs;
    vec ps_point;
    try {
      ru = map_with_jacobian(sys, state(-theta, qu), ku * period - theta, mu, io);
      ps_point = stroboscopic_iterate(sys, theta, qs, mu, -ks, io);
      rs = map_with_jacobian(sys, state(-theta, ps_point), ks * period - theta, mu, io);
    } catch (const integration_error&) {
      return out;
    }
    pu = ru.z_end;
    ps = ps_point;
    const vec F = pu - ps;
    fnorm = F.norm();
    out.p = 0.5 * (pu + ps);
    out.residual = fnorm;
    out.a = a;
    out.b = b;
    if (fnorm <= 1e-11 * (1.0 + out.p.norm())) {
      out.ok = true;
      return out;
    }
    // dds: derivative of the backward point through the forward Jacobian
    Eigen::Matrix2d J;
    const vec du = ru.jac * (sign_u * wu.direction);
    const vec ds = rs.jac.partialPivLu().solve(sign_s * ws.direction);
    J.col(0) = du.head<2>();
    J.col(1) = -ds.head<2>();
    const Eigen::Vector2d step = J.partialPivLu().solve(-F.head<2>());
    if (!step.allFinite()) return out;
    double damping = 1.0;
    // keep parameters positive and inside a sane range
    for (int k = 0; k < 6; ++k) {
      const double an = a + damping * step[0];
      const double bn = b + damping * step[1];
      if (an > 0.0 && bn > 0.0) {
        a = an;
        b = bn;
        break;
      }
      damping *= 0.5;
    }
  }
  out.ok = out.residual <= 1e-9 * (1.0 + out.p.norm());
  return out;
}

std::vector<double> forward_distance_profile(const system_definition& sys, double theta,
                                             double mu, const vec& p, const vec& z_star,
                                             int steps, const integrator_options& iopts) {
  integrator_options io = iopts;
  io.store_dense = false;
  io.rel_tol = std::min(io.rel_tol, 1e-12);
  io.abs_tol = std::min(io.abs_tol, 1e-13);
  std::vector<double> dist;
  vec cur = p;
  dist.push_back((cur - z_star).norm());
  for (int j = 1; j <= steps; ++j) {
    try {
      cur = stroboscopic_map(sys, theta, cur, mu, io);
    } catch (const integration_error&) {
      break;
    }
    dist.push_back((cur - z_star).norm());
  }
  return dist;
}

bool monotone_decreasing(const std::vector<double>& d, int need) {
  if (static_cast<int>(d.size()) < need + 1) return false;
  for (int j = 1; j <= need; ++j) {
    if (!(d[j] < d[j - 1])) return false;
  }
  return true;
}

}  // namespace

std::vector<homoclinic_point> find_homoclinic(const system_definition& sys, double theta,
                                              double mu, const manifold_curve& unstable,
                                              const manifold_curve& stable_curve,
                                              double angle_min,
                                              const integrator_options& iopts) {
  if (unstable.z_star.size() != 2) {
    throw convergence_error("planar homoclinic search needs a one-degree-of-freedom system");
  }
  const vec z_star = unstable.z_star;
  const double exclusion = 10.0 * std::max({1e-8, unstable.branches.empty() ? 0.0 :
                                            unstable.branches[0].empty() ? 0.0 :
                                            unstable.branches[0][0].source_param,
                                            stable_curve.branches.empty() ? 0.0 :
                                            stable_curve.branches[0].empty() ? 0.0 :
                                            stable_curve.branches[0][0].source_param});

  const auto segs_u = planar_segments(unstable);
  const auto segs_s = planar_segments(stable_curve);

  std::vector<homoclinic_point> found;
  for (const auto& su : segs_u) {
    const double ux_lo = std::min(su.a[0], su.b[0]), ux_hi = std::max(su.a[0], su.b[0]);
    const double uy_lo = std::min(su.a[1], su.b[1]), uy_hi = std::max(su.a[1], su.b[1]);
    for (const auto& ss : segs_s) {
      if (std::min(ss.a[0], ss.b[0]) > ux_hi || std::max(ss.a[0], ss.b[0]) < ux_lo ||
          std::min(ss.a[1], ss.b[1]) > uy_hi || std::max(ss.a[1], ss.b[1]) < uy_lo) {
        continue;
      }
      const Eigen::Vector2d r = su.b - su.a;
      const Eigen::Vector2d s = ss.b - ss.a;
      const double denom = r[0] * s[1] - r[1] * s[0];
      const double scale = r.norm() * s.norm();
      if (std::abs(denom) < 1e-14 * scale) continue;
      const Eigen::Vector2d d = ss.a - su.a;
      const double tu = (d[0] * s[1] - d[1] * s[0]) / denom;
      const double ts = (d[0] * r[1] - d[1] * r[0]) / (-denom);
      if (tu < 0.0 || tu > 1.0 || ts < 0.0 || ts > 1.0) continue;
      const Eigen::Vector2d pxy = su.a + tu * r;
      if ((pxy - z_star.head<2>()).norm() <= exclusion) continue;
      double angle = std::acos(std::clamp(std::abs(r.dot(s)) / scale, 0.0, 1.0));
      if (angle < angle_min) continue;

      homoclinic_point hp;
      hp.z = vec(2);
      hp.z << pxy[0], pxy[1];
      hp.angle = angle;
      hp.unstable_depth = su.depth_a;
      hp.unstable_param = su.s_a + tu * (su.s_b - su.s_a);
      hp.stable_depth = ss.depth_a;
      hp.stable_param = ss.s_a + ts * (ss.s_b - ss.s_a);

      auto ref = refine_intersection(sys, theta, mu, unstable, stable_curve,
                                     hp.unstable_param, su.sign, su.depth_a,
                                     hp.stable_param, ss.sign, ss.depth_a, iopts);
      if (!ref.ok) continue;
      hp.z = ref.p;
      hp.refine_residual = ref.residual;
      hp.unstable_param = ref.a;
      hp.stable_param = ref.b;
      if ((hp.z - z_star).norm() <= exclusion) continue;

      hp.forward_distances =
          forward_distance_profile(sys, theta, mu, hp.z, z_star, 5, iopts);
      // backward iterates through the unstable provenance: S^{-j}(p) =
      // S^{ku-j}(seed_u(a))
      {
        integrator_options io = iopts;
        io.store_dense = false;
        const int ku = hp.unstable_depth * forward_periods(unstable);
        const vec qu = z_star + su.sign * hp.unstable_param * unstable.direction;
        std::vector<double> bd;
        bd.push_back((hp.z - z_star).norm());
        for (int j = 1; j <= 5 && ku - j >= 0; ++j) {
          try {
            const vec w = stroboscopic_iterate(sys, theta, qu, mu, ku - j, io);
            bd.push_back((w - z_star).norm());
          } catch (const integration_error&) {
            break;
          }
        }
        hp.backward_distances = std::move(bd);
      }
      hp.validated = monotone_decreasing(hp.forward_distances, 5) &&
                     monotone_decreasing(hp.backward_distances,
                                         std::min<int>(5, static_cast<int>(
                                             hp.backward_distances.size()) - 1));

      bool duplicate = false;
      for (const auto& other : found) {
        if ((other.z - hp.z).norm() < 1e-6 * (1.0 + hp.z.norm())) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) found.push_back(std::move(hp));
    }
  }
  std::sort(found.begin(), found.end(), [](const homoclinic_point& a, const homoclinic_point& b) {
    if (a.z[0] != b.z[0]) return a.z[0] < b.z[0];
    return a.z[1] < b.z[1];
  });
  return found;
}

std::vector<homoclinic_point> find_homoclinic_projected(
    const system_definition& sys, double theta, double mu, const manifold_curve& unstable,
    const periodic_orbit& orbit, int forward_steps, const integrator_options& iopts) {
  integrator_options io = iopts;
  io.store_dense = false;

  // the unstable-mode coefficient after K steps, via the left eigenvector
  Eigen::EigenSolver<mat> es(orbit.jacobian.transpose());
  int i_max = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (std::abs(es.eigenvalues()[i]) > std::abs(es.eigenvalues()[i_max])) i_max = i;
  }
  const vec w_left = es.eigenvectors().col(i_max).real().normalized();

  auto coeff = [&](const vec& q) -> std::optional<double> {
    try {
      const vec r = stroboscopic_iterate(sys, theta, q, mu, forward_steps, io);
      return w_left.dot(r - orbit.z_star);
    } catch (const integration_error&) {
      return std::nullopt;
    }
  };

  std::vector<homoclinic_point> found;
  double sign = 1.0;
  for (const auto& branch : unstable.branches) {
    for (std::size_t i = 1; i < branch.size(); ++i) {
      if (branch[i - 1].depth != branch[i].depth) continue;
      auto ca = coeff(branch[i - 1].z);
      auto cb = coeff(branch[i].z);
      if (!ca || !cb || (*ca > 0) == (*cb > 0)) continue;
      // bisect in the seed parameter at this depth
      growth_context ctx;
      ctx.sys = &sys;
      ctx.theta = theta;
      ctx.mu = mu;
      ctx.power = unstable.map_power;
      ctx.inverse = false;
      ctx.escape_radius = 1e3;
      ctx.iopts = &io;
      ctx.z_star = unstable.z_star;
      ctx.direction = unstable.direction;
      ctx.sign = sign;
      double lo = branch[i - 1].source_param, hi = branch[i].source_param;
      double clo = *ca;
      vec p = branch[i].z;
      for (int it = 0; it < 48; ++it) {
        const double mid = std::sqrt(lo * hi);
        auto pm = ctx.eval(mid, branch[i].depth);
        if (!pm) break;
        auto cm = coeff(pm->first);
        if (!cm) break;
        p = pm->first;
        if ((*cm > 0) == (clo > 0)) {
          lo = mid;
          clo = *cm;
        } else {
          hi = mid;
        }
      }
      homoclinic_point hp;
      hp.z = p;
      hp.unstable_depth = branch[i].depth;
      hp.unstable_param = std::sqrt(lo * hi);
      hp.forward_distances =
          forward_distance_profile(sys, theta, mu, p, unstable.z_star, 5, iopts);
      hp.validated = monotone_decreasing(hp.forward_distances, 3);
      if ((hp.z - unstable.z_star).norm() > 10.0 * branch[0].source_param) {
        found.push_back(std::move(hp));
      }
    }
    sign = -sign;
  }
  return found;
}

lyapunov_result lyapunov_exponent(const system_definition& sys, double theta, double mu,
                                  const vec& z0, const lyapunov_options& lopts,
                                  const integrator_options& iopts) {
  integrator_options io = iopts;
  io.store_dense = false;
  const double period = sys.period;
  const int dim = static_cast<int>(z0.size());

  lyapunov_result out;
  vec z = z0;
  vec v = vec::Ones(dim).normalized();

  std::vector<double> logs;
  std::vector<double> stick_logs;
  logs.reserve(lopts.n_periods);
  double stick_time = 0.0;

  for (int k = 0; k < lopts.burn_in + lopts.n_periods; ++k) {
    double log_growth;
    bool stuck = false;
    try {
      auto res = map_with_jacobian(sys, state(-theta, z), period - theta, mu, io);
      vec w = res.jac * v;
      log_growth = std::log(std::max(w.norm(), 1e-300));
      v = w / std::max(w.norm(), 1e-300);
      z = res.z_end;
    } catch (const integration_error&) {
      // grazing or sticking inside the window: difference the full map
      ++out.fd_fallback_count;
      trajectory tr = simulate(sys, state(-theta, z), period - theta, mu, io);
      if (!tr.sticking.empty()) {
        stuck = true;
        out.sticking_detected = true;
        for (const auto& stint : tr.sticking) stick_time += stint.t_release - stint.t_enter;
      }
      const double delta = lopts.fd_delta * (1.0 + z.norm());
      vec z_pert = z + delta * v;
      if (z_pert[0] < 0.0) z_pert[0] = 0.0;
      const vec mapped = stroboscopic_map(sys, theta, z_pert, mu, io);
      vec w = (mapped - tr.final_state.z) / delta;
      log_growth = std::log(std::max(w.norm(), 1e-300));
      v = (w.norm() > 1e-300) ? vec(w / w.norm()) : vec(vec::Ones(dim).normalized());
      z = tr.final_state.z;
    }
    if (k >= lopts.burn_in) {
      (stuck ? stick_logs : logs).push_back(log_growth / period);
    }
    if (!z.allFinite() || z.norm() > 1e6) {
      throw integration_error("orbit escaped during the exponent estimate");
    }
  }

  out.periods_used = static_cast<int>(logs.size());
  if (!logs.empty()) {
    double mean = 0.0;
    for (double l : logs) mean += l;
    mean /= logs.size();
    out.exponent = mean;

    std::vector<double> block_means;
    for (std::size_t i = 0; i + lopts.block <= logs.size(); i += lopts.block) {
      double b = 0.0;
      for (int j = 0; j < lopts.block; ++j) b += logs[i + j];
      block_means.push_back(b / lopts.block);
    }
    if (block_means.size() >= 2) {
      double bm = 0.0;
      for (double b : block_means) bm += b;
      bm /= block_means.size();
      double var = 0.0;
      for (double b : block_means) var += (b - bm) * (b - bm);
      var /= (block_means.size() - 1);
      out.std_error = std::sqrt(var / block_means.size());
    }
  }
  if (!stick_logs.empty()) {
    double m = 0.0;
    for (double l : stick_logs) m += l;
    out.constrained_exponent = m / stick_logs.size();
  }
  out.sticking_fraction =
      stick_time / (period * std::max(1, lopts.n_periods + lopts.burn_in));
  return out;
}

std::vector<periodic_point> find_periodic_points(const system_definition& sys, double theta,
                                                 double mu, int m,
                                                 const std::vector<vec>& seeds,
                                                 const orbit_options& opts,
                                                 int* failed_seeds, int jobs) {
  integrator_options io = opts.integrator;
  io.graze_tol = std::min(io.graze_tol, opts.jacobian_graze_tol);
  io.store_dense = false;
  const double span_end = m * sys.period - theta;

  struct slot {
    bool ok = false;
    vec z;
    mat jac;
    double residual = 0.0;
  };
  std::vector<slot> results(seeds.size());

  par::for_indexed(
      seeds.size(),
      [&](std::size_t idx) {
        vec z = seeds[idx];
        try {
          for (int it = 0; it < 30; ++it) {
            auto res = map_with_jacobian(sys, state(-theta, z), span_end, mu, io);
            const vec F = res.z_end - z;
            if (F.norm() <= opts.newton_tol) {
              slot s;
              s.ok = true;
              s.z = z;
              s.jac = res.jac;
              s.residual = F.norm();
              results[idx] = std::move(s);
              return;
            }
            const int dim = static_cast<int>(z.size());
            const vec step =
                (res.jac - mat::Identity(dim, dim)).partialPivLu().solve(-F);
            if (!step.allFinite()) return;
            double damping = 1.0;
            vec zn = z + step;
            // keep the iterate in the admissible half-space
            for (int k = 0; k < 8 && zn[0] < 0.0; ++k) {
              damping *= 0.5;
              zn = z + damping * step;
            }
            if (zn[0] < 0.0) return;
            z = zn;
            if (z.norm() > 1e3) return;
          }
        } catch (const integration_error&) {
        } catch (const model_error&) {
        }
      },
      jobs);

  int failures = 0;
  std::vector<periodic_point> accepted;
  std::vector<std::vector<vec>> orbits;  // iterates of each accepted point
  for (const auto& s : results) {
    if (!s.ok) {
      ++failures;
      continue;
    }
    bool dup = false;
    for (const auto& orbit_pts : orbits) {
      for (const auto& q : orbit_pts) {
        if ((q - s.z).norm() < 1e-6 * (1.0 + s.z.norm())) {
          dup = true;
          break;
        }
      }
      if (dup) break;
    }
    if (dup) continue;

    periodic_point pp;
    pp.z = s.z;
    pp.period = m;
    // fresh residual check
    const vec back = stroboscopic_iterate(sys, theta, s.z, mu, m, io);
    pp.residual = (back - s.z).norm();

    Eigen::EigenSolver<mat> es(s.jac);
    bool any_out = false, any_in = false;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
      pp.multipliers.push_back(es.eigenvalues()[i]);
      if (std::abs(es.eigenvalues()[i]) > 1.0) any_out = true;
      if (std::abs(es.eigenvalues()[i]) < 1.0) any_in = true;
    }
    pp.classification = any_out ? (any_in ? -1 : +2) : +1;

    // record the full orbit for deduplication
    std::vector<vec> orbit_pts{s.z};
    try {
      vec cur = s.z;
      for (int j = 1; j < m; ++j) {
        cur = stroboscopic_map(sys, theta, cur, mu, io);
        orbit_pts.push_back(cur);
      }
    } catch (const integration_error&) {
    }
    orbits.push_back(std::move(orbit_pts));
    accepted.push_back(std::move(pp));
  }
  if (failed_seeds) *failed_seeds = failures;

  std::sort(accepted.begin(), accepted.end(), [](const periodic_point& a, const periodic_point& b) {
    if (a.period != b.period) return a.period < b.period;
    for (int i = 0; i < a.z.size(); ++i) {
      if (a.z[i] != b.z[i]) return a.z[i] < b.z[i];
    }
    return false;
  });
  return accepted;
}

std::vector<vec> make_seed_grid(const vec& z_star, const std::vector<vec>& anchors,
                                double half_width, int per_axis) {
  std::vector<vec> seeds;
  const int dim = static_cast<int>(z_star.size());
  for (int i = 0; i < per_axis; ++i) {
    for (int j = 0; j < per_axis; ++j) {
      vec z = z_star;
      const double fx = per_axis > 1 ? static_cast<double>(i) / (per_axis - 1) : 0.5;
      const double fy = per_axis > 1 ? static_cast<double>(j) / (per_axis - 1) : 0.5;
      z[0] = std::max(0.0, z_star[0] + (2.0 * fx - 1.0) * half_width);
      z[1] = z_star[1] + (2.0 * fy - 1.0) * half_width;
      seeds.push_back(z);
    }
  }
  for (const auto& a : anchors) {
    seeds.push_back(a);
    for (double dx : {-0.25 * half_width, 0.25 * half_width}) {
      for (double dy : {-0.25 * half_width, 0.25 * half_width}) {
        vec z = a;
        z[0] = std::max(0.0, a[0] + dx);
        z[1] += dy;
        seeds.push_back(z);
      }
    }
  }
  (void)dim;
  return seeds;
}

std::string manifold_csv(const manifold_curve& curve) {
  std::string out = "branch,arclength";
  const int dim = curve.z_star.size() ? static_cast<int>(curve.z_star.size()) : 2;
  for (int k = 1; k <= dim / 2; ++k) {
    out += ",x" + std::to_string(k) + ",y" + std::to_string(k);
  }
  out += ",depth,corner\n";
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  };
  for (std::size_t b = 0; b < curve.branches.size(); ++b) {
    for (const auto& p : curve.branches[b]) {
      out += std::to_string(b);
      out += ',';
      num(p.arclength);
      for (int i = 0; i < dim; ++i) {
        out += ',';
        num(p.z[i]);
      }
      out += ',';
      out += std::to_string(p.depth);
      out += ',';
      out += p.corner ? '1' : '0';
      out += '\n';
    }
  }
  return out;
}

}  // namespace graze
