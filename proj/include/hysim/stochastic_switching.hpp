#pragma once

// Switching under measurement noise.
//
// Each switching surface is thickened to an eps-neighborhood. Along a
// trajectory, the signed offset u to the surface is treated as the argument
// of the hazard of a Uniform[-eps, eps] law, h(u) = 1 / (eps - u). A switch
// fires at the first sample where the integrated hazard exceeds an Exp(1)
// target, so a trajectory crossing the neighborhood along its normal
// switches at a uniformly distributed offset.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

#include "hysim/dynamics.hpp"
#include "hysim/hybrid_core.hpp"

namespace hysim {

struct NoiseModel {
  double epsilon = 0.1;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw std::invalid_argument("NoiseModel: epsilon must be positive");
    }
  }
};

inline constexpr double kInfiniteHazard = std::numeric_limits<double>::infinity();

/// P(U >= u) for U ~ Uniform[-eps, eps].
inline double survivor(double u, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("survivor: eps must be positive");
  if (u < -eps) return 1.0;
  if (u > eps) return 0.0;
  return 1.0 - (u + eps) / (2.0 * eps);
}

/// Conditional intensity of U ~ Uniform[-eps, eps]. Returns +inf for u >= eps,
/// meaning the switch is certain.
inline double hazard(double u, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("hazard: eps must be positive");
  if (u < -eps) return 0.0;
  if (u >= eps) return kInfiniteHazard;
  return 1.0 / (eps - u);
}

/// Signed orthogonal distance from x to the active switching facet of axis i
/// in mode m; negative inside the mode's box, positive outside.
inline double signed_distance(const State& x, Mode m, int axis, const Box& box) {
  return facet_offset(x, guard_facet(m, axis), box);
}

/// Seeded 64-bit stream. Identical (seed, stream) pairs give identical
/// variate sequences on every platform; variates are derived from raw
/// engine output rather than the implementation-defined std distributions.
class RandomSource {
 public:
  RandomSource(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x68797369u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Exp(1), strictly positive.
  double exponential() {
    double v;
    do {
      v = -std::log1p(-uniform());
    } while (!(v > 0.0));
    return v;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

/// Integrated-hazard state for one switching surface.
struct SwitchClock {
  Facet surface;
  double target = 1.0;
  double accumulated = 0.0;
  bool armed = false;

  void disarm() {
    armed = false;
    accumulated = 0.0;
  }
};

/// Hazard values are capped at 1e3 / dt inside the trapezoid rule; beyond it
/// the next sample is close enough to eps that the sentinel takes over.
inline double hazard_cap(double dt) { return 1.0 / (dt * 1e-3); }

/// Trapezoid approximation of the hazard integral in u over [u_from, u_to],
/// restricted to the neighborhood. Never negative.
inline double hazard_increment(double u_from, double u_to, double eps, double cap) {
  if (u_to <= u_from || u_to < -eps) return 0.0;
  const double lo = std::max(u_from, -eps);
  const double h_lo = std::min(hazard(lo, eps), cap);
  const double h_hi = std::min(hazard(u_to, eps), cap);
  return 0.5 * (u_to - lo) * (h_lo + h_hi);
}

struct StochasticOptions {
  double dt = 0.1;
  /// Stop after this many events (0 = unlimited).
  std::size_t max_events = 0;
};

/// Picks the firing axis among simultaneously expired clocks with
/// probability proportional to the hazard at the firing sample.
inline int choose_axis(double h1, double h2, RandomSource& rng) {
  const bool inf1 = std::isinf(h1);
  const bool inf2 = std::isinf(h2);
  if (inf1 && inf2) return rng.uniform() < 0.5 ? 1 : 2;
  if (inf1) return 1;
  if (inf2) return 2;
  const double total = h1 + h2;
  if (!(total > 0.0)) return rng.uniform() < 0.5 ? 1 : 2;
  return rng.uniform() * total < h1 ? 1 : 2;
}

/// Stochastic executor: fixed-step RK4, one independent clock per axis, the
/// first clock to exceed its Exp(1) target fires at that sample. Every mode
/// change disarms both clocks; they re-arm with fresh targets on entering a
/// neighborhood again.
template <TrajectoryObserver Observer>
RunSummary run_stochastic(const SystemModel& model, const State& x0, std::optional<Mode> m0,
                          double horizon, const NoiseModel& noise, RandomSource& rng,
                          Observer& observer, const StochasticOptions& opt = {}) {
  model.validate();
  noise.validate();
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("run_stochastic: horizon must be positive and finite");
  }
  if (!(opt.dt > 0.0)) throw std::invalid_argument("run_stochastic: dt must be positive");
  if (!x0.finite()) throw std::domain_error("run_stochastic: non-finite initial state");
  const double eps = noise.epsilon;
  for (int axis : {1, 2}) {
    if (!(eps < 0.5 * model.box.width(axis))) {
      throw std::invalid_argument(
          "run_stochastic: epsilon must be below half the temperature band so opposite "
          "neighborhoods do not overlap");
    }
  }
  if (!m0 && !model.box.interior(x0)) {
    throw std::invalid_argument(
        "run_stochastic: initial temperatures must be interior when the mode is defaulted");
  }

  const auto& k = model.coefficients;
  const double cap = hazard_cap(opt.dt);
  Mode mode = m0.value_or(Mode{0, 0});
  State x = x0;
  std::size_t interval = 1;
  RunSummary summary;
  summary.negative_pressure = x0.P < 0.0;

  std::array<SwitchClock, 2> clocks{};
  const auto reset_clocks = [&] {
    for (int axis : {1, 2}) {
      auto& c = clocks[axis - 1];
      c.surface = guard_facet(mode, axis);
      c.disarm();
    }
  };
  reset_clocks();

  observer.on_sample(Sample{0.0, interval, x, mode});
  ++summary.samples;

  const auto steps = static_cast<std::uint64_t>(std::ceil(horizon / opt.dt - 1e-9));
  double t = 0.0;
  for (std::uint64_t n = 1; n <= steps; ++n) {
    const double t_next = std::min(static_cast<double>(n) * opt.dt, horizon);
    const double h = t_next - t;
    const State x_next = rk4_step(x, mode, k, h);
    if (!x_next.finite()) throw std::domain_error("run_stochastic: state diverged");

    for (int axis : {1, 2}) {
      const double travel = std::abs(x_next.temperature(axis) - x.temperature(axis));
      if (facet_offset(x_next, clocks[axis - 1].surface, model.box) > eps + travel) {
        throw std::runtime_error(
            "run_stochastic: state crossed a switching neighborhood without firing; reduce dt");
      }
    }

    std::array<bool, 2> expired{false, false};
    std::array<double, 2> h_next{0.0, 0.0};
    std::array<double, 2> u_next{0.0, 0.0};
    for (int axis : {1, 2}) {
      auto& c = clocks[axis - 1];
      const double u_prev = facet_offset(x, c.surface, model.box);
      u_next[axis - 1] = facet_offset(x_next, c.surface, model.box);
      h_next[axis - 1] = hazard(u_next[axis - 1], eps);
      if (u_next[axis - 1] < -eps) continue;
      if (!c.armed) {
        c.armed = true;
        c.accumulated = 0.0;
        c.target = rng.exponential();
      }
      if (std::isinf(h_next[axis - 1])) {
        expired[axis - 1] = true;
        continue;
      }
      c.accumulated += hazard_increment(u_prev, u_next[axis - 1], eps, cap);
      expired[axis - 1] = c.accumulated > c.target;
    }

    x = x_next;
    t = t_next;
    observer.on_sample(Sample{t, interval, x, mode});
    ++summary.samples;
    if (x.P < 0.0) summary.negative_pressure = true;

    if (expired[0] || expired[1]) {
      const int axis = expired[0] && expired[1] ? choose_axis(h_next[0], h_next[1], rng)
                                                : (expired[0] ? 1 : 2);
      const Facet f = clocks[axis - 1].surface;
      const Mode next = label(axis, mode);
      ++interval;
      observer.on_event(SwitchEvent{t, interval, f, mode, next, x, u_next[axis - 1]});
      mode = next;
      ++summary.events;
      reset_clocks();
      // The other surface may already be past its neighborhood; its switch
      // is certain and happens at the same instant.
      const int other = axis == 1 ? 2 : 1;
      const double u_other = facet_offset(x, clocks[other - 1].surface, model.box);
      if (std::isinf(hazard(u_other, eps)) &&
          (opt.max_events == 0 || summary.events < opt.max_events)) {
        const Facet fo = clocks[other - 1].surface;
        const Mode after = label(other, mode);
        ++interval;
        observer.on_event(SwitchEvent{t, interval, fo, mode, after, x, u_other});
        mode = after;
        ++summary.events;
        reset_clocks();
      }
      if (opt.max_events != 0 && summary.events >= opt.max_events) break;
    }
  }

  summary.t_end = t;
  summary.final_state = x;
  summary.final_mode = mode;
  return summary;
}

inline HybridTrajectory run_stochastic(const SystemModel& model, const State& x0,
                                       std::optional<Mode> m0, double horizon,
                                       const NoiseModel& noise, RandomSource& rng,
                                       const StochasticOptions& opt = {}) {
  HybridTrajectory traj;
  traj.horizon = horizon;
  traj.initial_mode = m0.value_or(Mode{0, 0});
  TrajectoryRecorder recorder(traj);
  traj.summary = run_stochastic(model, x0, m0, horizon, noise, rng, recorder, opt);
  return traj;
}

}  // namespace hysim
