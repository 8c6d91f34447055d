#pragma once

// Curve-intensity estimation and synchronization analysis.
//
// The curve intensity of a region A over a time interval I is the mean
// sojourn of trajectories in A during I. It is estimated by counting sample
// points per bin and dividing by the ensemble size. The four mode copies of
// the box are identified, so samples are binned by continuous state only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hysim/hybrid_core.hpp"
#include "hysim/parallel.hpp"
#include "hysim/stochastic_switching.hpp"

namespace hysim {

enum class Plane { t1t2, t1p };

inline std::string_view to_string(Plane p) { return p == Plane::t1t2 ? "t1t2" : "t1p"; }

inline Plane parse_plane(std::string_view s) {
  if (s == "t1t2") return Plane::t1t2;
  if (s == "t1p") return Plane::t1p;
  throw std::invalid_argument("unknown plane '" + std::string(s) + "' (expected t1t2 or t1p)");
}

inline std::pair<double, double> project(const State& x, Plane p) {
  return p == Plane::t1t2 ? std::pair{x.T1, x.T2} : std::pair{x.T1, x.P};
}

struct Rect {
  double x_min = -0.5;
  double x_max = 5.5;
  double y_min = -0.5;
  double y_max = 5.5;

  static Rect default_for(Plane p) {
    return p == Plane::t1t2 ? Rect{-0.5, 5.5, -0.5, 5.5} : Rect{-0.5, 5.5, 0.0, 20.0};
  }
};

/// Half-open time window [begin, end); begin == end is empty.
struct TimeInterval {
  double begin = 0.0;
  double end = 0.0;
  bool contains(double t) const { return t >= begin && t < end; }
};

/// 2D histogram of sample points over one projection of the identified state
/// space. Samples outside the bounds go to the overflow counter.
class IntensityGrid {
 public:
  IntensityGrid(Plane plane, Rect bounds, double bin_x, double bin_y)
      : plane_(plane), bounds_(bounds), bin_x_(bin_x), bin_y_(bin_y) {
    if (!(bin_x > 0.0) || !(bin_y > 0.0)) throw std::invalid_argument("IntensityGrid: bin width must be positive");
    if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
      throw std::invalid_argument("IntensityGrid: empty bounds");
    }
    nx_ = static_cast<std::size_t>(std::ceil((bounds.x_max - bounds.x_min) / bin_x - 1e-9));
    ny_ = static_cast<std::size_t>(std::ceil((bounds.y_max - bounds.y_min) / bin_y - 1e-9));
    counts_.assign(nx_ * ny_, 0);
  }

  Plane plane() const { return plane_; }
  const Rect& bounds() const { return bounds_; }
  double bin_x() const { return bin_x_; }
  double bin_y() const { return bin_y_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::uint64_t overflow() const { return overflow_; }
  std::uint64_t n_traj() const { return n_traj_; }
  void set_n_traj(std::uint64_t n) { n_traj_ = n; }

  std::uint64_t count(std::size_t ix, std::size_t iy) const { return counts_.at(iy * nx_ + ix); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  std::uint64_t total_in_bounds() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  std::uint64_t max_count() const {
    return counts_.empty() ? 0 : *std::max_element(counts_.begin(), counts_.end());
  }

  /// Estimate of E[Z(A_i, I)] for bin (ix, iy).
  double estimate(std::size_t ix, std::size_t iy) const {
    if (n_traj_ == 0) throw std::logic_error("IntensityGrid: estimate of an empty ensemble");
    return static_cast<double>(count(ix, iy)) / static_cast<double>(n_traj_);
  }

  double center_x(std::size_t ix) const { return bounds_.x_min + (static_cast<double>(ix) + 0.5) * bin_x_; }
  double center_y(std::size_t iy) const { return bounds_.y_min + (static_cast<double>(iy) + 0.5) * bin_y_; }

  std::optional<std::pair<std::size_t, std::size_t>> bin_of(double px, double py) const {
    if (!(px >= bounds_.x_min && px < bounds_.x_max && py >= bounds_.y_min && py < bounds_.y_max)) {
      return std::nullopt;
    }
    const auto ix = std::min(nx_ - 1, static_cast<std::size_t>((px - bounds_.x_min) / bin_x_));
    const auto iy = std::min(ny_ - 1, static_cast<std::size_t>((py - bounds_.y_min) / bin_y_));
    return std::pair{ix, iy};
  }

  void add(const State& x) {
    const auto [px, py] = project(x, plane_);
    if (const auto bin = bin_of(px, py)) {
      ++counts_[bin->second * nx_ + bin->first];
    } else {
      ++overflow_;
    }
  }

  bool same_geometry(const IntensityGrid& o) const {
    return plane_ == o.plane_ && nx_ == o.nx_ && ny_ == o.ny_ && bin_x_ == o.bin_x_ &&
           bin_y_ == o.bin_y_ && bounds_.x_min == o.bounds_.x_min && bounds_.y_min == o.bounds_.y_min &&
           bounds_.x_max == o.bounds_.x_max && bounds_.y_max == o.bounds_.y_max;
  }

  /// Adds another ensemble's counts; the result estimates over n1 + n2
  /// trajectories.
  void merge(const IntensityGrid& o) {
    if (!same_geometry(o)) throw std::invalid_argument("IntensityGrid: cannot merge grids of different geometry");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    overflow_ += o.overflow_;
    n_traj_ += o.n_traj_;
  }

 private:
  Plane plane_;
  Rect bounds_;
  double bin_x_;
  double bin_y_;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t overflow_ = 0;
  std::uint64_t n_traj_ = 0;
};

/// Streams samples of one trajectory into a grid. Event notifications carry
/// no new sample points and are ignored.
class GridAccumulator {
 public:
  GridAccumulator(IntensityGrid& grid, TimeInterval interval) : grid_(grid), interval_(interval) {}

  void on_sample(const Sample& s) {
    if (interval_.contains(s.t)) {
      grid_.add(s.x);
      ++in_interval_;
    }
  }
  void on_event(const SwitchEvent&) {}

  std::uint64_t samples_in_interval() const { return in_interval_; }

 private:
  IntensityGrid& grid_;
  TimeInterval interval_;
  std::uint64_t in_interval_ = 0;
};

struct GridSettings {
  Plane plane = Plane::t1t2;
  Rect bounds = Rect::default_for(Plane::t1t2);
  double bin_width_x = 0.05;
  double bin_width_y = 0.05;
};

inline IntensityGrid accumulate_intensity(const std::vector<HybridTrajectory>& trajs,
                                          const GridSettings& g, TimeInterval interval) {
  if (trajs.empty()) throw std::invalid_argument("accumulate_intensity: empty ensemble");
  IntensityGrid grid(g.plane, g.bounds, g.bin_width_x, g.bin_width_y);
  for (const auto& traj : trajs) {
    GridAccumulator acc(grid, interval);
    for (const auto& s : traj.samples) acc.on_sample(s);
  }
  grid.set_n_traj(trajs.size());
  return grid;
}

struct SyncThresholds {
  double dt_sync = 1.0;
  double p_ref = 15.23;
  double p_tol = 0.5;

  void validate() const {
    if (!(dt_sync > 0.0)) throw std::invalid_argument("SyncThresholds: dt_sync must be positive");
    if (!(p_tol >= 0.0)) throw std::invalid_argument("SyncThresholds: p_tol must be non-negative");
  }
};

struct Histogram {
  double lo = 0.0;
  double width = 0.5;
  std::vector<std::uint64_t> counts;
  std::uint64_t overflow = 0;

  void add(double v) {
    const double pos = (v - lo) / width;
    if (pos >= 0.0 && pos < static_cast<double>(counts.size())) {
      ++counts[static_cast<std::size_t>(pos)];
    } else {
      ++overflow;
    }
  }
  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width; }
  std::uint64_t total() const {
    std::uint64_t s = overflow;
    for (auto c : counts) s += c;
    return s;
  }
  /// Sum of counts in bins whose centers fall in [a, b].
  std::uint64_t mass(double a, double b) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (center(i) >= a && center(i) <= b) s += counts[i];
    }
    return s;
  }
};

struct Episode {
  double start = 0.0;
  double end = 0.0;
};

struct SyncReport {
  std::vector<Episode> episodes;
  double prevalence = 0.0;
  // Classification window: first valve closing to the end of the run.
  double window_start = 0.0;
  double window_end = 0.0;
  std::size_t synchronized_pairs = 0;
  // Pressure at every valve-closing (lower-facet) event.
  Histogram peak_histogram{0.0, 0.5, std::vector<std::uint64_t>(80, 0), 0};

  std::size_t episode_count() const { return episodes.size(); }
};

namespace detail {

struct Closing {
  double t;
  double P;
};

inline std::size_t nearest(const std::vector<Closing>& v, double t) {
  auto it = std::lower_bound(v.begin(), v.end(), t, [](const Closing& c, double x) { return c.t < x; });
  if (it == v.end()) return v.size() - 1;
  if (it == v.begin()) return 0;
  const auto prev = std::prev(it);
  return (t - prev->t) <= (it->t - t) ? static_cast<std::size_t>(prev - v.begin())
                                      : static_cast<std::size_t>(it - v.begin());
}

}  // namespace detail

/// Classifies synchronized operation from the valve-closing events.
///
/// Axis-1 and axis-2 closings that are mutually nearest and within dt_sync
/// form a pair; a pair is synchronized when the pressure at its later
/// closing is within p_tol of p_ref. A synchronized pair covers time from
/// its earlier closing until the next closing of either valve. Prevalence
/// is the covered fraction of [first closing, t_end].
inline SyncReport classify_synchronization(const std::vector<SwitchEvent>& events, double t_end,
                                           const SyncThresholds& th = {}) {
  th.validate();
  SyncReport rep;
  std::vector<detail::Closing> close1, close2, all;
  for (const auto& e : events) {
    if (e.facet.side != Side::lower) continue;
    const detail::Closing c{e.t, e.x.P};
    (e.facet.axis == 1 ? close1 : close2).push_back(c);
    all.push_back(c);
    rep.peak_histogram.add(e.x.P);
  }
  if (all.empty()) {
    rep.window_start = rep.window_end = t_end;
    return rep;
  }
  rep.window_start = all.front().t;
  rep.window_end = std::max(t_end, rep.window_start);
  if (close1.empty() || close2.empty()) return rep;

  std::vector<Episode> covered;
  for (std::size_t i = 0; i < close1.size(); ++i) {
    const std::size_t j = detail::nearest(close2, close1[i].t);
    if (detail::nearest(close1, close2[j].t) != i) continue;
    const double t_a = std::min(close1[i].t, close2[j].t);
    const double t_b = std::max(close1[i].t, close2[j].t);
    if (t_b - t_a > th.dt_sync) continue;
    const double p_late = close1[i].t >= close2[j].t ? close1[i].P : close2[j].P;
    if (std::abs(p_late - th.p_ref) > th.p_tol) continue;
    ++rep.synchronized_pairs;
    auto next = std::upper_bound(all.begin(), all.end(), t_b,
                                 [](double x, const detail::Closing& c) { return x < c.t; });
    const double until = next == all.end() ? rep.window_end : std::min(next->t, rep.window_end);
    covered.push_back({t_a, until});
  }

  std::sort(covered.begin(), covered.end(), [](const Episode& a, const Episode& b) { return a.start < b.start; });
  for (const auto& ep : covered) {
    if (!rep.episodes.empty() && ep.start <= rep.episodes.back().end) {
      rep.episodes.back().end = std::max(rep.episodes.back().end, ep.end);
    } else {
      rep.episodes.push_back(ep);
    }
  }
  double total = 0.0;
  for (const auto& ep : rep.episodes) total += ep.end - ep.start;
  const double window = rep.window_end - rep.window_start;
  rep.prevalence = window > 0.0 ? std::clamp(total / window, 0.0, 1.0) : 0.0;
  return rep;
}

inline SyncReport classify_synchronization(const HybridTrajectory& traj, const SyncThresholds& th = {}) {
  return classify_synchronization(traj.events, traj.summary.t_end, th);
}

struct EnsembleSpec {
  SystemModel model;
  State x0{2.5, 2.5, 5.0};
  std::optional<Mode> m0;
  double horizon = 1e6;
  double dt = 0.1;
  std::size_t n_traj = 10;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

/// Intensity grids of a seeded stochastic ensemble, accumulated without
/// storing trajectories. Trajectory j uses stream (seed, j); per-trajectory
/// grids are merged in index order.
inline std::vector<IntensityGrid> ensemble_intensity(const EnsembleSpec& spec, const NoiseModel& noise,
                                                     const std::vector<GridSettings>& planes,
                                                     TimeInterval interval) {
  if (spec.n_traj == 0) throw std::invalid_argument("ensemble_intensity: empty ensemble");
  std::vector<std::vector<IntensityGrid>> partial(spec.n_traj);
  parallel_for(spec.n_traj, spec.threads, [&](std::size_t j) {
    std::vector<IntensityGrid> grids;
    for (const auto& g : planes) grids.emplace_back(g.plane, g.bounds, g.bin_width_x, g.bin_width_y);
    struct Fan {
      std::vector<IntensityGrid>& grids;
      TimeInterval interval;
      void on_sample(const Sample& s) {
        if (!interval.contains(s.t)) return;
        for (auto& g : grids) g.add(s.x);
      }
      void on_event(const SwitchEvent&) {}
    } fan{grids, interval};
    RandomSource rng(spec.seed, j);
    run_stochastic(spec.model, spec.x0, spec.m0, spec.horizon, noise, rng, fan, {spec.dt, 0});
    for (auto& g : grids) g.set_n_traj(1);
    partial[j] = std::move(grids);
  });
  std::vector<IntensityGrid> out = std::move(partial[0]);
  for (std::size_t j = 1; j < partial.size(); ++j) {
    for (std::size_t p = 0; p < out.size(); ++p) out[p].merge(partial[j][p]);
  }
  return out;
}

struct SweepRow {
  double eps = 0.0;
  double mean_prevalence = 0.0;
  double stderr_prevalence = 0.0;
  double mean_episodes = 0.0;
  std::size_t n_traj = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
};

/// f(eps) estimates: the deterministic row (eps = 0) first, then one row per
/// eps with the ensemble mean prevalence and its standard error. Every eps
/// reuses streams (seed, 0..n_traj-1).
inline std::vector<SweepRow> prevalence_sweep(const EnsembleSpec& spec, const std::vector<double>& eps_list,
                                              const SyncThresholds& th = {}) {
  if (eps_list.empty()) throw std::invalid_argument("prevalence_sweep: eps list is empty");
  for (double e : eps_list) {
    if (!(e > 0.0)) throw std::invalid_argument("prevalence_sweep: every eps must be positive");
  }
  if (spec.n_traj == 0) throw std::invalid_argument("prevalence_sweep: n_traj must be positive");
  th.validate();

  std::vector<SweepRow> rows;
  {
    EventRecorder ev;
    const auto s = run_deterministic(spec.model, spec.x0, spec.m0, spec.horizon, ev, {spec.dt, 1e-10, 0});
    const auto rep = classify_synchronization(ev.events, s.t_end, th);
    rows.push_back({0.0, rep.prevalence, 0.0, static_cast<double>(rep.episode_count()), 1, spec.horizon, spec.seed});
  }

  const std::size_t n = spec.n_traj;
  std::vector<SyncReport> reports(eps_list.size() * n);
  parallel_for(reports.size(), spec.threads, [&](std::size_t idx) {
    const std::size_t e = idx / n;
    const std::size_t j = idx % n;
    RandomSource rng(spec.seed, j);
    EventRecorder ev;
    const auto s = run_stochastic(spec.model, spec.x0, spec.m0, spec.horizon, NoiseModel{eps_list[e]}, rng, ev,
                                  {spec.dt, 0});
    reports[idx] = classify_synchronization(ev.events, s.t_end, th);
  });

  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    double sum = 0.0;
    double episodes = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      sum += reports[e * n + j].prevalence;
      episodes += static_cast<double>(reports[e * n + j].episode_count());
    }
    const double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = reports[e * n + j].prevalence - mean;
      var += d * d;
    }
    const double se = n > 1 ? std::sqrt(var / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    rows.push_back({eps_list[e], mean, se, episodes / static_cast<double>(n), n, spec.horizon, spec.seed});
  }
  return rows;
}

}  // namespace hysim
