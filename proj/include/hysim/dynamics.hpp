#pragma once

// Affine mode dynamics of the two-display-case refrigeration model.
//
// In mode (delta1, delta2) the state x = (T1, T2, P) evolves as
//
//   dT_i/dt = -a T_i + b - delta_i (c T_i - d P - e)
//   dP/dt   = -alpha P + beta + valve_gain (delta1 + delta2)
//
// Units are seconds, degrees Celsius and bar throughout.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hysim {

/// Valve configuration of both display cases; 0 = closed, 1 = open.
struct Mode {
  int delta1 = 0;
  int delta2 = 0;

  constexpr Mode() = default;
  constexpr Mode(int d1, int d2) : delta1(d1), delta2(d2) {
    if ((d1 != 0 && d1 != 1) || (d2 != 0 && d2 != 1)) {
      throw std::invalid_argument("Mode: valve flags must be 0 or 1");
    }
  }

  constexpr int operator[](int axis) const { return axis == 1 ? delta1 : delta2; }
  constexpr int open_valves() const { return delta1 + delta2; }
  constexpr int index() const { return delta1 + 2 * delta2; }

  friend constexpr bool operator==(const Mode&, const Mode&) = default;

  static constexpr std::array<Mode, 4> all() {
    return {Mode{0, 0}, Mode{1, 0}, Mode{0, 1}, Mode{1, 1}};
  }
};

struct State {
  double T1 = 0.0;
  double T2 = 0.0;
  double P = 0.0;

  constexpr double temperature(int axis) const { return axis == 1 ? T1 : T2; }
  constexpr double& temperature(int axis) { return axis == 1 ? T1 : T2; }

  bool finite() const {
    return std::isfinite(T1) && std::isfinite(T2) && std::isfinite(P);
  }

  friend constexpr bool operator==(const State&, const State&) = default;

  friend constexpr State operator+(const State& l, const State& r) {
    return {l.T1 + r.T1, l.T2 + r.T2, l.P + r.P};
  }
  friend constexpr State operator-(const State& l, const State& r) {
    return {l.T1 - r.T1, l.T2 - r.T2, l.P - r.P};
  }
  friend constexpr State operator*(double s, const State& x) {
    return {s * x.T1, s * x.T2, s * x.P};
  }
};

/// Time derivative of a State; same layout.
using StateDerivative = State;

inline double max_abs_difference(const State& l, const State& r) {
  return std::max({std::abs(l.T1 - r.T1), std::abs(l.T2 - r.T2), std::abs(l.P - r.P)});
}

/// Coefficients of the reduced affine model.
struct ReducedCoefficients {
  double a = 0.0019;
  double b = 0.0244;
  double c = -0.0012;
  double d = -0.0506;
  double e = -0.1065;
  double alpha = 0.056;
  double beta = 0.0038;
  double valve_gain = 1.0;

  static constexpr ReducedCoefficients canonical() { return {}; }

  void validate() const {
    const std::array<double, 8> all{a, b, c, d, e, alpha, beta, valve_gain};
    for (double v : all) {
      if (!std::isfinite(v)) throw std::invalid_argument("ReducedCoefficients: non-finite coefficient");
    }
    if (!(a > 0.0)) throw std::invalid_argument("ReducedCoefficients: a must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("ReducedCoefficients: alpha must be positive");
  }

  /// Decay rate of T_i in a mode with valve flag `delta`.
  constexpr double temperature_rate(int delta) const { return a + delta * c; }
  /// Constant forcing of T_i in a mode with valve flag `delta`.
  constexpr double temperature_forcing(int delta) const { return b + delta * e; }
  /// Coupling of T_i to P in a mode with valve flag `delta`.
  constexpr double pressure_coupling(int delta) const { return delta * d; }
  /// Asymptotic pressure in mode m.
  constexpr double pressure_fixed_point(Mode m) const {
    return (beta + valve_gain * m.open_valves()) / alpha;
  }
};

/// Physical process parameters of one display case, the compressor and the
/// suction manifold. Both display cases share the same values.
struct PhysicalParameters {
  double UA_wall_ref_max = 500.0;
  double UA_goods_air = 300.0;
  double UA_air_wall = 500.0;
  double T_g0 = 3.0;
  double m_dot_0 = 1.0;
  double m_dot_r_const = 0.2;
  double Q_dot_load = 3000.0;
  double M_wall = 260.0;
  double C_p_wall = 385.0;
  double grad_rho_suc0 = 4.6;
  double V_dot_comp = 0.28;
  double V_suc = 5.0;
  double T_lower = 0.0;
  double T_upper = 5.0;
  double a_T = -16.2072;
  double b_T = -41.9095;
  double a_rho = 4.6;
  double b_rho = 0.4;

  static constexpr PhysicalParameters table_defaults() { return {}; }

  void validate() const {
    const std::array<std::pair<const char*, double>, 7> positive{{
        {"UA_wall_ref_max", UA_wall_ref_max},
        {"UA_goods_air", UA_goods_air},
        {"UA_air_wall", UA_air_wall},
        {"M_wall", M_wall},
        {"C_p_wall", C_p_wall},
        {"V_suc", V_suc},
        {"grad_rho_suc0", grad_rho_suc0},
    }};
    for (const auto& [name, v] : positive) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string("PhysicalParameters: ") + name + " must be positive");
      }
    }
    if (!(V_dot_comp > 0.0)) throw std::invalid_argument("PhysicalParameters: V_dot_comp must be positive");
    if (!(m_dot_0 > 0.0)) throw std::invalid_argument("PhysicalParameters: m_dot_0 must be positive");
    if (!(T_lower < T_upper)) throw std::invalid_argument("PhysicalParameters: T_lower must be below T_upper");
  }
};

inline StateDerivative vector_field(const State& x, Mode m, const ReducedCoefficients& k) {
  if (!x.finite()) throw std::domain_error("vector_field: non-finite state");
  const auto dT = [&](double T, int delta) {
    return -k.a * T + k.b - delta * (k.c * T - k.d * x.P - k.e);
  };
  return {dT(x.T1, m.delta1), dT(x.T2, m.delta2),
          -k.alpha * x.P + k.beta + k.valve_gain * m.open_valves()};
}

namespace detail {

// (1 - exp(-r t)) / r, continuous through r = 0.
inline double decay_integral(double r, double t) {
  if (std::abs(r * t) < 1e-300 || r == 0.0) return t;
  return -std::expm1(-r * t) / r;
}

// (exp(-alpha t) - exp(-k t)) / (k - alpha), with the t exp(-k t) limit when
// the two rates coincide.
inline double exponential_divided_difference(double k, double alpha, double t,
                                             double resonance_gap) {
  const double gap = k - alpha;
  if (std::abs(gap) < resonance_gap) return t * std::exp(-k * t);
  return std::exp(-k * t) * std::expm1(gap * t) / gap;
}

}  // namespace detail

/// Gap |(a + delta c) - alpha| below which the resonant closed form is used.
inline constexpr double kResonanceGap = 1e-9;

/// Closed-form solution of the mode-m affine system after time t.
inline State propagate_exact(const State& x0, Mode m, const ReducedCoefficients& k, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("propagate_exact: t must be non-negative");
  if (!x0.finite()) throw std::domain_error("propagate_exact: non-finite state");
  if (t == 0.0) return x0;

  const double p_star = k.pressure_fixed_point(m);
  const double p_offset = x0.P - p_star;
  const double p_decay = std::exp(-k.alpha * t);

  const auto temperature = [&](double T0, int delta) {
    const double rate = k.temperature_rate(delta);
    const double forcing = k.temperature_forcing(delta) + k.pressure_coupling(delta) * p_star;
    const double coupling = k.pressure_coupling(delta) * p_offset;
    return T0 * std::exp(-rate * t) + forcing * detail::decay_integral(rate, t) +
           coupling * detail::exponential_divided_difference(rate, k.alpha, t, kResonanceGap);
  };

  return {temperature(x0.T1, m.delta1), temperature(x0.T2, m.delta2),
          p_star + p_offset * p_decay};
}

/// One classical fourth-order Runge-Kutta step.
inline State rk4_step(const State& x, Mode m, const ReducedCoefficients& k, double dt) {
  const State k1 = vector_field(x, m, k);
  const State k2 = vector_field(x + (0.5 * dt) * k1, m, k);
  const State k3 = vector_field(x + (0.5 * dt) * k2, m, k);
  const State k4 = vector_field(x + dt * k3, m, k);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Returns the n + 1 states x0, x(dt), ..., x(n dt).
inline std::vector<State> propagate_rk4(const State& x0, Mode m, const ReducedCoefficients& k,
                                        double dt, std::size_t n) {
  if (!(dt > 0.0)) throw std::invalid_argument("propagate_rk4: dt must be positive");
  if (n < 1) throw std::invalid_argument("propagate_rk4: need at least one step");
  if (!x0.finite()) throw std::domain_error("propagate_rk4: non-finite state");
  std::vector<State> arc;
  arc.reserve(n + 1);
  arc.push_back(x0);
  for (std::size_t i = 0; i < n; ++i) arc.push_back(rk4_step(arc.back(), m, k, dt));
  return arc;
}

/// Equilibrium of mode m.
inline State fixed_point(Mode m, const ReducedCoefficients& k) {
  const double p = k.pressure_fixed_point(m);
  const auto T = [&](int delta) {
    return (k.temperature_forcing(delta) + k.pressure_coupling(delta) * p) / k.temperature_rate(delta);
  };
  return {T(m.delta1), T(m.delta2), p};
}

/// Expands the physical energy and mass balances into reduced coefficients.
///
/// The wall temperature is eliminated through
///   T_wall = (1 + UA_ga / UA_aw) T - (UA_ga T_g0 + Q_load) / UA_aw,
/// so the evaporator term UA_wr (T_wall - a_T P - b_T) becomes affine in (T, P).
inline ReducedCoefficients reduce_physical(const PhysicalParameters& p) {
  p.validate();
  const double wall_ratio = 1.0 + p.UA_goods_air / p.UA_air_wall;
  const double denom = wall_ratio * p.M_wall * p.C_p_wall;
  const double manifold = p.V_suc * p.grad_rho_suc0;
  if (denom == 0.0 || manifold == 0.0) throw std::invalid_argument("reduce_physical: zero denominator");

  const double heat_in = p.UA_goods_air * p.T_g0 + p.Q_dot_load;
  ReducedCoefficients k;
  k.a = p.UA_goods_air / denom;
  k.b = heat_in / denom;
  k.c = p.UA_wall_ref_max * wall_ratio / denom;
  k.d = p.UA_wall_ref_max * p.a_T / denom;
  k.e = p.UA_wall_ref_max * (heat_in / p.UA_air_wall + p.b_T) / denom;
  k.alpha = p.V_dot_comp * p.a_rho / manifold;
  k.beta = (p.m_dot_r_const - p.V_dot_comp * p.b_rho) / manifold;
  k.valve_gain = p.m_dot_0 / manifold;
  return k;
}

}  // namespace hysim
