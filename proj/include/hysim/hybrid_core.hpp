#pragma once

// Hybrid-system skeleton: the box Q = [T1l,T1u] x [T2l,T2u] x R+, its four
// switching facets, label and reset maps, hybrid time domains, trajectories,
// and the deterministic hysteresis executor.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "hysim/dynamics.hpp"

namespace hysim {

struct Box {
  double T1_lower = 0.0;
  double T1_upper = 5.0;
  double T2_lower = 0.0;
  double T2_upper = 5.0;

  constexpr double lower(int axis) const { return axis == 1 ? T1_lower : T2_lower; }
  constexpr double upper(int axis) const { return axis == 1 ? T1_upper : T2_upper; }
  constexpr double width(int axis) const { return upper(axis) - lower(axis); }

  void validate() const {
    if (!std::isfinite(T1_lower) || !std::isfinite(T1_upper) || !std::isfinite(T2_lower) ||
        !std::isfinite(T2_upper)) {
      throw std::invalid_argument("Box: bounds must be finite");
    }
    if (!(T1_lower < T1_upper)) throw std::invalid_argument("Box: T1 lower bound must be below upper bound");
    if (!(T2_lower < T2_upper)) throw std::invalid_argument("Box: T2 lower bound must be below upper bound");
  }

  bool contains(const State& x) const {
    return x.T1 >= T1_lower && x.T1 <= T1_upper && x.T2 >= T2_lower && x.T2 <= T2_upper;
  }
  bool interior(const State& x) const {
    return x.T1 > T1_lower && x.T1 < T1_upper && x.T2 > T2_lower && x.T2 < T2_upper;
  }
};

enum class Side : int { lower = 0, upper = 1 };

struct Facet {
  int axis = 1;
  Side side = Side::upper;

  friend constexpr bool operator==(const Facet&, const Facet&) = default;

  constexpr double bound(const Box& box) const {
    return side == Side::upper ? box.upper(axis) : box.lower(axis);
  }
};

inline void check_axis(int axis) {
  if (axis != 1 && axis != 2) throw std::invalid_argument("axis index must be 1 or 2");
}

/// l(i, m): flips valve flag i modulo 2.
inline Mode label(int axis, Mode m) {
  check_axis(axis);
  return axis == 1 ? Mode{1 - m.delta1, m.delta2} : Mode{m.delta1, 1 - m.delta2};
}

/// The facet of axis i where mode m switches: upper while the valve is
/// closed, lower while it is open.
inline Facet guard_facet(Mode m, int axis) {
  check_axis(axis);
  return {axis, m[axis] == 0 ? Side::upper : Side::lower};
}

/// Signed offset of x past the facet's affine hull: negative inside the box,
/// positive outside.
inline double facet_offset(const State& x, const Facet& f, const Box& box) {
  const double T = x.temperature(f.axis);
  return f.side == Side::upper ? T - box.upper(f.axis) : box.lower(f.axis) - T;
}

/// Switching sequence t0 <= t1 <= ... <= tk; interval i is [t_{i-1}, t_i].
struct HybridTimeDomain {
  std::vector<double> switching_sequence;

  std::size_t intervals() const {
    return switching_sequence.empty() ? 0 : switching_sequence.size() - 1;
  }
  bool infinite() const {
    return !switching_sequence.empty() && std::isinf(switching_sequence.back());
  }
  std::pair<double, double> interval(std::size_t i) const {
    if (i < 1 || i > intervals()) throw std::out_of_range("HybridTimeDomain: interval index");
    return {switching_sequence[i - 1], switching_sequence[i]};
  }
  bool well_formed() const {
    if (switching_sequence.size() < 2) return false;
    for (std::size_t i = 1; i < switching_sequence.size(); ++i) {
      if (!(switching_sequence[i] >= switching_sequence[i - 1])) return false;
    }
    return true;
  }
};

struct Sample {
  double t = 0.0;
  std::size_t interval = 1;
  State x;
  Mode mode;
};

/// A discrete transition R_i(m)(x, m) = (x, l(i, m)). `interval` is the
/// index of the interval the transition opens.
struct SwitchEvent {
  double t = 0.0;
  std::size_t interval = 2;
  Facet facet;
  Mode from;
  Mode to;
  State x;
  // Stochastic runs only: signed offset at the firing sample.
  std::optional<double> u_at_fire;

  int fired_axis() const { return facet.axis; }
};

/// Observers receive every sample (including arc end points) and every event.
template <class T>
concept TrajectoryObserver = requires(T& o, const Sample& s, const SwitchEvent& e) {
  o.on_sample(s);
  o.on_event(e);
};

struct NullObserver {
  void on_sample(const Sample&) {}
  void on_event(const SwitchEvent&) {}
};

template <TrajectoryObserver... Os>
struct TeeObserver {
  std::tuple<Os&...> sinks;
  explicit TeeObserver(Os&... os) : sinks(os...) {}
  void on_sample(const Sample& s) {
    std::apply([&](auto&... o) { (o.on_sample(s), ...); }, sinks);
  }
  void on_event(const SwitchEvent& e) {
    std::apply([&](auto&... o) { (o.on_event(e), ...); }, sinks);
  }
};

struct RunSummary {
  double t_end = 0.0;
  State final_state;
  Mode final_mode;
  std::size_t events = 0;
  std::size_t samples = 0;
  // Deterministic only: the final mode's equilibrium never reaches a guard.
  bool no_more_events = false;
  bool negative_pressure = false;
};

struct HybridTrajectory {
  double t0 = 0.0;
  double horizon = 0.0;
  Mode initial_mode;
  std::vector<Sample> samples;
  std::vector<SwitchEvent> events;
  RunSummary summary;

  HybridTimeDomain domain() const {
    HybridTimeDomain d;
    d.switching_sequence.reserve(events.size() + 2);
    d.switching_sequence.push_back(t0);
    for (const auto& e : events) d.switching_sequence.push_back(e.t);
    d.switching_sequence.push_back(summary.t_end);
    return d;
  }

  /// Mode active on interval i (1-based).
  Mode interval_mode(std::size_t i) const {
    if (i < 1 || i > events.size() + 1) throw std::out_of_range("HybridTrajectory: interval index");
    return i == 1 ? initial_mode : events[i - 2].to;
  }
};

/// Observer that stores the full trajectory. `sample_stride` keeps every
/// n-th sample; samples that coincide with events are always kept.
class TrajectoryRecorder {
 public:
  explicit TrajectoryRecorder(HybridTrajectory& out, std::size_t sample_stride = 1)
      : out_(out), stride_(sample_stride == 0 ? 1 : sample_stride) {}

  void on_sample(const Sample& s) {
    if (count_++ % stride_ == 0) {
      out_.samples.push_back(s);
    } else {
      pending_ = s;
    }
  }
  void on_event(const SwitchEvent& e) {
    if (pending_ && pending_->t == e.t) out_.samples.push_back(*pending_);
    pending_.reset();
    out_.events.push_back(e);
  }

 private:
  HybridTrajectory& out_;
  std::size_t stride_;
  std::size_t count_ = 0;
  std::optional<Sample> pending_;
};

/// Observer that keeps only the events.
struct EventRecorder {
  std::vector<SwitchEvent> events;
  void on_sample(const Sample&) {}
  void on_event(const SwitchEvent& e) { events.push_back(e); }
};

struct SystemModel {
  ReducedCoefficients coefficients;
  Box box;

  void validate() const {
    coefficients.validate();
    box.validate();
  }
};

struct DeterministicOptions {
  /// Output sampling step; events are located independently of it.
  double dt = 0.1;
  /// Event location tolerance on |T_i - bound|.
  double event_tolerance = 1e-10;
  /// Stop after this many events (0 = unlimited).
  std::size_t max_events = 0;
};

namespace detail {

struct Crossing {
  double t;
  State x;
};

// Bisection on the closed-form flow for the first time facet f is reached in
// (lo, hi]. Requires offset(lo) < 0 <= offset(hi).
inline Crossing locate_crossing(const SystemModel& model, const State& arc_start,
                                double arc_t0, Mode m, const Facet& f, double lo, double hi,
                                double tol) {
  const auto at = [&](double t) { return propagate_exact(arc_start, m, model.coefficients, t - arc_t0); };
  State x_hi = at(hi);
  if (std::abs(facet_offset(x_hi, f, model.box)) <= tol) return {hi, x_hi};
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const State x_mid = at(mid);
    const double g = facet_offset(x_mid, f, model.box);
    if (std::abs(g) <= tol) return {mid, x_mid};
    if (g < 0.0) {
      lo = mid;
    } else {
      hi = mid;
      x_hi = x_mid;
    }
  }
  return {hi, x_hi};
}

// True when no active guard of mode m is reached by its equilibrium.
inline bool mode_never_switches(const SystemModel& model, Mode m) {
  const State eq = fixed_point(m, model.coefficients);
  for (int axis : {1, 2}) {
    if (facet_offset(eq, guard_facet(m, axis), model.box) >= 0.0) return false;
  }
  return true;
}

}  // namespace detail

/// Executes the hysteresis law: each mode is followed in closed form,
/// guard crossings are located by bisection, and each crossing applies the
/// reset (state kept, valve flag flipped). Coincident crossings fire as two
/// events at the same instant, axis 1 first.
template <TrajectoryObserver Observer>
RunSummary run_deterministic(const SystemModel& model, const State& x0, std::optional<Mode> m0,
                             double horizon, Observer& observer,
                             const DeterministicOptions& opt = {}) {
  model.validate();
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("run_deterministic: horizon must be positive and finite");
  }
  if (!(opt.dt > 0.0)) throw std::invalid_argument("run_deterministic: dt must be positive");
  if (!x0.finite()) throw std::domain_error("run_deterministic: non-finite initial state");
  if (m0) {
    if (!model.box.contains(x0)) {
      throw std::invalid_argument("run_deterministic: initial temperatures must lie in the box");
    }
  } else if (!model.box.interior(x0)) {
    throw std::invalid_argument(
        "run_deterministic: initial temperatures must be interior when the mode is defaulted");
  }

  const double t0 = 0.0;
  Mode mode = m0.value_or(Mode{0, 0});
  State arc_start = x0;
  double arc_t0 = t0;
  std::size_t interval = 1;
  RunSummary summary;
  summary.negative_pressure = x0.P < 0.0;

  const auto emit_sample = [&](double t, const State& x) {
    observer.on_sample(Sample{t, interval, x, mode});
    ++summary.samples;
    if (x.P < 0.0) summary.negative_pressure = true;
  };
  const auto fire = [&](double t, const State& x, int axis) {
    const Facet f = guard_facet(mode, axis);
    const Mode next = label(axis, mode);
    ++interval;
    observer.on_event(SwitchEvent{t, interval, f, mode, next, x, std::nullopt});
    mode = next;
    ++summary.events;
  };

  // An initial state already on an active guard switches at t0.
  emit_sample(t0, x0);
  for (int axis : {1, 2}) {
    if (facet_offset(x0, guard_facet(mode, axis), model.box) >= -opt.event_tolerance) {
      fire(t0, x0, axis);
    }
  }

  std::uint64_t grid = 1;
  double t_prev = t0;
  bool stop = false;
  while (!stop) {
    const double t_next = std::min(t0 + static_cast<double>(grid) * opt.dt, horizon);
    const State x_next = propagate_exact(arc_start, mode, model.coefficients, t_next - arc_t0);

    std::optional<detail::Crossing> first;
    int first_axis = 0;
    for (int axis : {1, 2}) {
      const Facet f = guard_facet(mode, axis);
      if (facet_offset(x_next, f, model.box) < 0.0) continue;
      const auto c = detail::locate_crossing(model, arc_start, arc_t0, mode, f, t_prev, t_next,
                                             opt.event_tolerance);
      if (!first || c.t < first->t) {
        first = c;
        first_axis = axis;
      }
    }

    if (!first) {
      emit_sample(t_next, x_next);
      t_prev = t_next;
      ++grid;
      if (t_next >= horizon) break;
      continue;
    }

    const double te = first->t;
    const State xe = first->x;
    emit_sample(te, xe);
    const int other = first_axis == 1 ? 2 : 1;
    const bool simultaneous =
        facet_offset(xe, guard_facet(mode, other), model.box) >= -opt.event_tolerance;
    if (simultaneous) {
      fire(te, xe, 1);
      fire(te, xe, 2);
    } else {
      fire(te, xe, first_axis);
    }
    arc_start = xe;
    arc_t0 = te;
    t_prev = te;
    while (t0 + static_cast<double>(grid) * opt.dt <= te) ++grid;
    if (opt.max_events != 0 && summary.events >= opt.max_events) stop = true;
    if (te >= horizon) stop = true;
  }

  summary.t_end = t_prev;
  summary.final_state = propagate_exact(arc_start, mode, model.coefficients, t_prev - arc_t0);
  summary.final_mode = mode;
  summary.no_more_events = detail::mode_never_switches(model, mode);
  return summary;
}

inline HybridTrajectory run_deterministic(const SystemModel& model, const State& x0,
                                          std::optional<Mode> m0, double horizon,
                                          const DeterministicOptions& opt = {}) {
  HybridTrajectory traj;
  traj.t0 = 0.0;
  traj.horizon = horizon;
  traj.initial_mode = m0.value_or(Mode{0, 0});
  TrajectoryRecorder recorder(traj);
  traj.summary = run_deterministic(model, x0, m0, horizon, recorder, opt);
  return traj;
}

struct PeriodicCertificate {
  double period = 0.0;
  int shift = 0;
  State anchor;
  double anchor_time = 0.0;
  double max_error = 0.0;
};

/// Events that share a time stamp form one switching instant; a corner hit
/// on both axes is a single discrete transition of the identified system.
struct SwitchInstant {
  double t = 0.0;
  State x;
  std::vector<Facet> facets;
};

inline std::vector<SwitchInstant> group_instants(const std::vector<SwitchEvent>& events) {
  std::vector<SwitchInstant> out;
  for (const auto& e : events) {
    if (!out.empty() && out.back().t == e.t) {
      out.back().facets.push_back(e.facet);
    } else {
      out.push_back({e.t, e.x, {e.facet}});
    }
  }
  return out;
}

struct PeriodOptions {
  double tol_rec = 1e-6;
  int max_shift = 4;
};

/// Looks for (T, l)-periodic recurrence in the tail of the event sequence.
/// l counts switching instants; the smallest l whose tail recurs within
/// tol_rec wins.
inline std::optional<PeriodicCertificate> detect_period(const std::vector<SwitchEvent>& events,
                                                        const PeriodOptions& opt = {}) {
  if (events.size() < 6) return std::nullopt;
  const auto inst = group_instants(events);
  const std::size_t n = inst.size();
  for (int l = 1; l <= opt.max_shift; ++l) {
    const std::size_t shift = static_cast<std::size_t>(l);
    if (n < 3 * shift) continue;
    const std::size_t pairs = std::min(n - shift, 2 * shift);
    double err = 0.0;
    double period_sum = 0.0;
    bool facets_match = true;
    for (std::size_t p = 0; p < pairs; ++p) {
      const auto& late = inst[n - 1 - p];
      const auto& early = inst[n - 1 - p - shift];
      if (late.facets != early.facets) {
        facets_match = false;
        break;
      }
      err = std::max(err, max_abs_difference(late.x, early.x));
      period_sum += late.t - early.t;
    }
    if (!facets_match || err > opt.tol_rec) continue;

    PeriodicCertificate cert;
    cert.shift = l;
    cert.period = period_sum / static_cast<double>(pairs);
    cert.max_error = err;
    // Prefer the latest instant where every crossed facet is a lower bound.
    std::size_t anchor = n - 1;
    for (std::size_t p = 0; p < shift; ++p) {
      const auto& cand = inst[n - 1 - p];
      bool all_lower = true;
      for (const auto& f : cand.facets) all_lower = all_lower && f.side == Side::lower;
      if (all_lower) {
        anchor = n - 1 - p;
        break;
      }
    }
    cert.anchor = inst[anchor].x;
    cert.anchor_time = inst[anchor].t;
    return cert;
  }
  return std::nullopt;
}

inline std::optional<PeriodicCertificate> detect_period(const HybridTrajectory& traj,
                                                        const PeriodOptions& opt = {}) {
  return detect_period(traj.events, opt);
}

}  // namespace hysim
