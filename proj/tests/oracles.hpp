#pragma once

// Test-only oracles, independent of the library's computation paths:
// finite-difference Jacobians, a scaling-and-squaring matrix exponential and
// the closed forms of the linear fixtures.

#include <cmath>
#include <functional>

#include "graze/model.hpp"

namespace oracles {

using graze::mat;
using graze::vec;

/// Central-difference Jacobian of an arbitrary map.
inline mat fd_jacobian(const std::function<vec(const vec&)>& map, const vec& x, double h) {
  const vec fx = map(x);
  mat out(fx.size(), x.size());
  for (int j = 0; j < x.size(); ++j) {
    vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    out.col(j) = (map(xp) - map(xm)) / (2.0 * h);
  }
  return out;
}

/// Matrix exponential by scaling and squaring with a plain Taylor series;
/// deliberately naive and independent of any library routine.
inline mat expm(const mat& m) {
  int squarings = 0;
  mat a = m;
  while (a.norm() > 0.5) {
    a *= 0.5;
    ++squarings;
  }
  mat result = mat::Identity(m.rows(), m.cols());
  mat term = result;
  for (int k = 1; k < 40; ++k) {
    term = term * a / static_cast<double>(k);
    result += term;
    if (term.norm() < 1e-18 * result.norm()) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

/// Damped linear oscillator xdd + 2 zeta xd + k x = 0: fundamental matrix.
inline mat damped_oscillator_fundamental(double zeta, double k, double t) {
  const double wd = std::sqrt(k - zeta * zeta);
  const double e = std::exp(-zeta * t);
  const double c = std::cos(wd * t), s = std::sin(wd * t);
  mat out(2, 2);
  out(0, 0) = e * (c + zeta / wd * s);
  out(0, 1) = e * s / wd;
  out(1, 0) = -e * k / wd * s;
  out(1, 1) = e * (c - zeta / wd * s);
  return out;
}

/// Particular + homogeneous closed form of the forced oscillator
/// xdd + 2 zeta xd + k x = b + a cos(omega t), evaluated at time t from the
/// initial state (x0, y0) at time t0.
struct forced_oscillator_solution {
  double zeta, k, b, a, omega;

  double ampl() const {
    const double d1 = k - omega * omega, d2 = 2.0 * zeta * omega;
    return a / std::sqrt(d1 * d1 + d2 * d2);
  }
  double phase() const { return std::atan2(2.0 * zeta * omega, k - omega * omega); }

  vec particular(double t) const {
    vec out(2);
    out[0] = b / k + ampl() * std::cos(omega * t - phase());
    out[1] = -ampl() * omega * std::sin(omega * t - phase());
    return out;
  }

  vec eval(double t0, const vec& z0, double t) const {
    const vec h0 = z0 - particular(t0);
    // rotate the homogeneous part forward
    const mat phi = damped_oscillator_fundamental(zeta, k, t - t0);
    return vec(phi * h0 + particular(t));
  }
};

/// Closed-form single-impact periodic orbit of f1 = -g + a cos(omega t):
/// impact speed Y and impact phase t0 (two roots; validity checked by the
/// caller against the simulation).
struct ballistic_orbit {
  double gravity, a, omega, rest;
  double period() const { return 2.0 * M_PI / omega; }
  double speed() const { return gravity * period() / (1.0 + rest); }
  double sin_phase() const {
    return M_PI * gravity * (rest - 1.0) / (a * (1.0 + rest));
  }
  /// Free flight from the post-impact state at t0 (x=0, y=rest*Y).
  vec eval(double t0, double t) const {
    const double dt = t - t0;
    const double v0 = rest * speed();
    vec out(2);
    out[0] = v0 * dt - 0.5 * gravity * dt * dt -
             (a / (omega * omega)) * (std::cos(omega * t) - std::cos(omega * t0)) -
             (a / omega) * std::sin(omega * t0) * dt;
    out[1] = v0 - gravity * dt - (a / omega) * (std::sin(omega * t) - std::sin(omega * t0));
    return out;
  }
};

}  // namespace oracles
