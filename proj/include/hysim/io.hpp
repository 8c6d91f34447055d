#pragma once

// File formats: trajectory CSV, intensity grid CSV / PGM, sweep CSV.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hysim/hybrid_core.hpp"
#include "hysim/intensity_analysis.hpp"

namespace hysim::io {

/// Shortest round-trip-safe text for a double (17 significant digits).
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kTrajectoryHeader = "t,interval,T1,T2,P,delta1,delta2";
inline constexpr const char* kStochasticHeader = "t,interval,T1,T2,P,delta1,delta2,fired_axis,u_at_fire";

/// Streaming trajectory CSV writer. One row per sample; each event adds a
/// row with the same t, the new interval and the new valve flags. With
/// `annotate`, event rows carry fired_axis and u_at_fire.
class TrajectoryCsvWriter {
 public:
  TrajectoryCsvWriter(std::ostream& out, bool annotate, std::size_t stride = 1)
      : out_(out), annotate_(annotate), stride_(stride == 0 ? 1 : stride) {
    out_ << (annotate_ ? kStochasticHeader : kTrajectoryHeader) << '\n';
  }

  void on_sample(const Sample& s) {
    if (count_++ % stride_ == 0) {
      write_sample(s);
      pending_.reset();
    } else {
      pending_ = s;
    }
  }

  void on_event(const SwitchEvent& e) {
    if (pending_ && pending_->t == e.t) write_sample(*pending_);
    pending_.reset();
    out_ << fmt(e.t) << ',' << e.interval << ',' << fmt(e.x.T1) << ',' << fmt(e.x.T2) << ','
         << fmt(e.x.P) << ',' << e.to.delta1 << ',' << e.to.delta2;
    if (annotate_) {
      out_ << ',' << e.fired_axis() << ',' << (e.u_at_fire ? fmt(*e.u_at_fire) : std::string());
    }
    out_ << '\n';
  }

 private:
  void write_sample(const Sample& s) {
    out_ << fmt(s.t) << ',' << s.interval << ',' << fmt(s.x.T1) << ',' << fmt(s.x.T2) << ','
         << fmt(s.x.P) << ',' << s.mode.delta1 << ',' << s.mode.delta2;
    if (annotate_) out_ << ",,";
    out_ << '\n';
  }

  std::ostream& out_;
  bool annotate_;
  std::size_t stride_;
  std::size_t count_ = 0;
  std::optional<Sample> pending_;
};

inline void write_trajectory_csv(std::ostream& out, const HybridTrajectory& traj, bool annotate) {
  TrajectoryCsvWriter w(out, annotate);
  std::size_t ev = 0;
  for (const auto& s : traj.samples) {
    while (ev < traj.events.size() && traj.events[ev].t < s.t) w.on_event(traj.events[ev++]);
    w.on_sample(s);
    while (ev < traj.events.size() && traj.events[ev].t == s.t) w.on_event(traj.events[ev++]);
  }
  while (ev < traj.events.size()) w.on_event(traj.events[ev++]);
}

/// Reads a trajectory CSV written by TrajectoryCsvWriter. Event rows are
/// recognized by a repeated t with a changed interval.
inline HybridTrajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trajectory CSV: empty file");
  if (line.rfind(kTrajectoryHeader, 0) != 0) throw std::runtime_error("trajectory CSV: unexpected header");

  HybridTrajectory traj;
  bool first = true;
  Sample last;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() < 7) throw std::runtime_error("trajectory CSV: short row at line " + std::to_string(lineno));
    try {
      Sample s;
      s.t = std::stod(cols[0]);
      s.interval = std::stoul(cols[1]);
      s.x = {std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])};
      s.mode = Mode{std::stoi(cols[5]), std::stoi(cols[6])};
      if (first) {
        traj.t0 = s.t;
        traj.initial_mode = s.mode;
        traj.samples.push_back(s);
        first = false;
      } else if (s.interval != last.interval) {
        SwitchEvent e;
        e.t = s.t;
        e.interval = s.interval;
        e.from = last.mode;
        e.to = s.mode;
        e.x = s.x;
        const int axis = s.mode.delta1 != last.mode.delta1 ? 1 : 2;
        e.facet = guard_facet(last.mode, axis);
        if (cols.size() >= 9 && !cols[8].empty()) e.u_at_fire = std::stod(cols[8]);
        traj.events.push_back(e);
      } else {
        traj.samples.push_back(s);
      }
      last = s;
    } catch (const std::logic_error&) {
      throw std::runtime_error("trajectory CSV: malformed row at line " + std::to_string(lineno));
    }
  }
  if (first) throw std::runtime_error("trajectory CSV: no rows");
  traj.summary.t_end = last.t;
  traj.horizon = last.t;
  traj.summary.final_state = last.x;
  traj.summary.final_mode = last.mode;
  traj.summary.events = traj.events.size();
  traj.summary.samples = traj.samples.size();
  return traj;
}

/// Matrix of per-bin estimates. First row: empty cell then x bin centers;
/// each following row: y bin center then estimates, y descending.
inline void write_grid_csv(std::ostream& out, const IntensityGrid& g) {
  const double n = g.n_traj() == 0 ? 1.0 : static_cast<double>(g.n_traj());
  out << (g.plane() == Plane::t1t2 ? "T2\\T1" : "P\\T1");
  for (std::size_t ix = 0; ix < g.nx(); ++ix) out << ',' << fmt(g.center_x(ix));
  out << '\n';
  for (std::size_t r = 0; r < g.ny(); ++r) {
    const std::size_t iy = g.ny() - 1 - r;
    out << fmt(g.center_y(iy));
    for (std::size_t ix = 0; ix < g.nx(); ++ix) out << ',' << fmt(static_cast<double>(g.count(ix, iy)) / n);
    out << '\n';
  }
}

/// Plain (P2) 8-bit PGM, counts scaled linearly so the maximum maps to 255.
inline void write_grid_pgm(std::ostream& out, const IntensityGrid& g) {
  const std::uint64_t max = g.max_count();
  out << "P2\n# max_count " << max << " n_traj " << g.n_traj() << " plane " << to_string(g.plane()) << '\n';
  out << g.nx() << ' ' << g.ny() << "\n255\n";
  for (std::size_t r = 0; r < g.ny(); ++r) {
    const std::size_t iy = g.ny() - 1 - r;
    for (std::size_t ix = 0; ix < g.nx(); ++ix) {
      const std::uint64_t c = g.count(ix, iy);
      const auto level = max == 0 ? 0u : static_cast<unsigned>((c * 255 + max / 2) / max);
      out << level << (ix + 1 == g.nx() ? '\n' : ' ');
    }
  }
}

inline constexpr const char* kSweepHeader = "eps,mean_prevalence,stderr,n_traj,horizon,seed";

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepHeader << '\n';
  for (const auto& r : rows) {
    out << fmt(r.eps) << ',' << fmt(r.mean_prevalence) << ',' << fmt(r.stderr_prevalence) << ',' << r.n_traj
        << ',' << fmt(r.horizon) << ',' << r.seed << '\n';
  }
}

}  // namespace hysim::io
