#include <gtest/gtest.h>

#include <cmath>

#include "hysim/intensity_analysis.hpp"

using namespace hysim;

namespace {

const SystemModel kModel{};

HybridTrajectory synthetic(std::vector<State> pts, double dt = 1.0) {
  HybridTrajectory traj;
  for (std::size_t i = 0; i < pts.size(); ++i) traj.samples.push_back({static_cast<double>(i) * dt, 0, pts[i], {0, 0}});
  traj.summary.t_end = traj.samples.back().t;
  return traj;
}

SwitchEvent closing(int axis, double t, double P) {
  SwitchEvent e;
  e.t = t;
  e.facet = {axis, Side::lower};
  e.x = {0.0, 0.0, P};
  return e;
}

SwitchEvent opening(int axis, double t, double P) {
  SwitchEvent e = closing(axis, t, P);
  e.facet.side = Side::upper;
  e.x.T1 = e.x.T2 = 5.0;
  return e;
}

}  // namespace

TEST(Plane, ParseAndProject) {
  EXPECT_EQ(parse_plane("t1t2"), Plane::t1t2);
  EXPECT_EQ(parse_plane("t1p"), Plane::t1p);
  EXPECT_THROW(parse_plane("xy"), std::invalid_argument);
  EXPECT_EQ(project({1, 2, 3}, Plane::t1t2), (std::pair{1.0, 2.0}));
  EXPECT_EQ(project({1, 2, 3}, Plane::t1p), (std::pair{1.0, 3.0}));
}

TEST(IntensityGrid, GeometryAndValidation) {
  IntensityGrid g(Plane::t1t2, Rect::default_for(Plane::t1t2), 0.05, 0.05);
  EXPECT_EQ(g.nx(), 120u);
  EXPECT_EQ(g.ny(), 120u);
  IntensityGrid p(Plane::t1p, Rect::default_for(Plane::t1p), 0.05, 0.05);
  EXPECT_EQ(p.ny(), 400u);
  EXPECT_THROW(IntensityGrid(Plane::t1t2, {}, 0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(IntensityGrid(Plane::t1t2, {1, 1, 0, 1}, 0.1, 0.1), std::invalid_argument);
}

TEST(IntensityGrid, IdenticalTrajectoriesGiveSampleCounts) {
  // Three copies of the same path: the estimate equals one path's count.
  const auto t = synthetic({{1.02, 1.02, 0}, {1.03, 1.04, 0}, {2.51, 3.01, 0}, {6.0, 1.0, 0}});
  const auto g = accumulate_intensity({t, t, t}, {}, {0.0, 10.0});
  EXPECT_EQ(g.n_traj(), 3u);
  const auto b = g.bin_of(1.02, 1.02).value();
  EXPECT_DOUBLE_EQ(g.estimate(b.first, b.second), 2.0);
  const auto c = g.bin_of(2.51, 3.01).value();
  EXPECT_DOUBLE_EQ(g.estimate(c.first, c.second), 1.0);
  EXPECT_EQ(g.overflow(), 3u);
}

TEST(IntensityGrid, EmptyBinEstimatesZero) {
  const auto g = accumulate_intensity({synthetic({{1, 1, 0}})}, {}, {0.0, 1.0});
  const auto b = g.bin_of(4.0, 0.2).value();
  EXPECT_EQ(g.estimate(b.first, b.second), 0.0);
  IntensityGrid empty(Plane::t1t2, {}, 0.1, 0.1);
  EXPECT_THROW(empty.estimate(0, 0), std::logic_error);
}

TEST(IntensityGrid, HalfOpenInterval) {
  const auto t = synthetic({{1, 1, 0}, {1, 1, 0}, {1, 1, 0}, {1, 1, 0}});
  // Samples at t = 0, 1, 2, 3; [1, 3) keeps two.
  const auto g = accumulate_intensity({t}, {}, {1.0, 3.0});
  EXPECT_EQ(g.total_in_bounds(), 2u);
  EXPECT_EQ(accumulate_intensity({t}, {}, {2.0, 2.0}).total_in_bounds(), 0u);
}

TEST(IntensityGrid, MergeIsAdditive) {
  const auto a = synthetic({{1, 1, 0}, {2, 2, 0}});
  const auto b = synthetic({{1, 1, 0}, {9, 9, 0}, {3, 3, 0}});
  auto ga = accumulate_intensity({a}, {}, {0, 10});
  const auto gb = accumulate_intensity({b}, {}, {0, 10});
  const auto both = accumulate_intensity({a, b}, {}, {0, 10});
  ga.merge(gb);
  EXPECT_EQ(ga.counts(), both.counts());
  EXPECT_EQ(ga.overflow(), both.overflow());
  EXPECT_EQ(ga.n_traj(), 2u);
  IntensityGrid other(Plane::t1p, Rect::default_for(Plane::t1p), 0.05, 0.05);
  EXPECT_THROW(ga.merge(other), std::invalid_argument);
}

TEST(IntensityGrid, CountConservationOnStochasticRun) {
  RandomSource rng(3, 0);
  const auto traj = run_stochastic(kModel, {2.5, 2.5, 5.0}, std::nullopt, 5000.0, {0.1}, rng);
  const TimeInterval I{1000.0, 4000.0};
  std::size_t in_interval = 0;
  for (const auto& s : traj.samples) in_interval += I.contains(s.t);
  for (Plane p : {Plane::t1t2, Plane::t1p}) {
    const auto g = accumulate_intensity({traj}, {p, Rect::default_for(p), 0.05, 0.05}, I);
    EXPECT_EQ(g.total_in_bounds() + g.overflow(), in_interval);
  }
}

TEST(IntensityGrid, DeterministicMassStaysOnDiagonal) {
  const auto traj = run_deterministic(kModel, {2.5, 2.5, 5.0}, std::nullopt, 5000.0);
  const double w = 0.05;
  const auto g = accumulate_intensity({traj}, {Plane::t1t2, Rect::default_for(Plane::t1t2), w, w}, {0, 5000});
  std::uint64_t off = 0;
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    for (std::size_t iy = 0; iy < g.ny(); ++iy) {
      if (std::abs(g.center_x(ix) - g.center_y(iy)) > w + 1e-12) off += g.count(ix, iy);
    }
  }
  EXPECT_EQ(off, 0u);
  EXPECT_GT(g.total_in_bounds(), 40000u);
}

TEST(Classification, DeterministicCycleFullySynchronized) {
  const auto traj = run_deterministic(kModel, {2.5, 2.5, 5.0}, std::nullopt, 20000.0);
  const auto rep = classify_synchronization(traj);
  EXPECT_DOUBLE_EQ(rep.prevalence, 1.0);
  EXPECT_EQ(rep.episode_count(), 1u);
  EXPECT_GT(rep.synchronized_pairs, 60u);
  // Every closing pressure falls in the 15.0-15.5 bar bin.
  EXPECT_EQ(rep.peak_histogram.counts[30], rep.peak_histogram.total());
}

TEST(Classification, FarApartClosingsAreNotSynchronized) {
  std::vector<SwitchEvent> ev;
  for (int k = 0; k < 20; ++k) {
    ev.push_back(closing(1, 100.0 + 270.0 * k, 15.2));
    ev.push_back(closing(2, 235.0 + 270.0 * k, 15.2));
  }
  const auto rep = classify_synchronization(ev, 6000.0);
  EXPECT_EQ(rep.prevalence, 0.0);
  EXPECT_EQ(rep.synchronized_pairs, 0u);
  EXPECT_EQ(rep.peak_histogram.total(), 40u);
}

TEST(Classification, PressureGateAndCoverage) {
  // Pairs at 100 and 400 (close in time); only the first hits p_ref.
  std::vector<SwitchEvent> ev{opening(1, 50, 1), opening(2, 50, 1),
                              closing(1, 100.0, 15.2), closing(2, 100.4, 15.3),
                              closing(1, 400.0, 9.8), closing(2, 400.2, 9.9)};
  const auto rep = classify_synchronization(ev, 1000.0);
  EXPECT_EQ(rep.synchronized_pairs, 1u);
  ASSERT_EQ(rep.episode_count(), 1u);
  EXPECT_DOUBLE_EQ(rep.episodes[0].start, 100.0);
  EXPECT_DOUBLE_EQ(rep.episodes[0].end, 400.0);
  EXPECT_DOUBLE_EQ(rep.window_start, 100.0);
  EXPECT_NEAR(rep.prevalence, 300.0 / 900.0, 1e-15);
  EXPECT_EQ(rep.peak_histogram.counts[19], 2u);
}

TEST(Classification, SymmetricUnderValveRelabeling) {
  RandomSource rng(8, 1);
  const auto traj = run_stochastic(kModel, {2.5, 2.5, 5.0}, std::nullopt, 2e4, {0.1}, rng);
  auto swapped = traj.events;
  for (auto& e : swapped) {
    e.facet.axis = e.facet.axis == 1 ? 2 : 1;
    std::swap(e.x.T1, e.x.T2);
  }
  const auto a = classify_synchronization(traj.events, traj.summary.t_end);
  const auto b = classify_synchronization(swapped, traj.summary.t_end);
  EXPECT_DOUBLE_EQ(a.prevalence, b.prevalence);
  EXPECT_EQ(a.synchronized_pairs, b.synchronized_pairs);
  EXPECT_EQ(a.peak_histogram.counts, b.peak_histogram.counts);
}

TEST(Classification, NoEvents) {
  const auto rep = classify_synchronization(std::vector<SwitchEvent>{}, 100.0);
  EXPECT_EQ(rep.prevalence, 0.0);
  EXPECT_THROW(classify_synchronization(std::vector<SwitchEvent>{}, 1.0, {0.0, 15.0, 0.5}), std::invalid_argument);
}

TEST(Ensemble, ThreadCountDoesNotChangeGrids) {
  EnsembleSpec spec;
  spec.horizon = 4000.0;
  spec.n_traj = 4;
  spec.seed = 12;
  const std::vector<GridSettings> planes{{}, {Plane::t1p, Rect::default_for(Plane::t1p), 0.05, 0.05}};
  spec.threads = 1;
  const auto a = ensemble_intensity(spec, {0.1}, planes, {0, 4000});
  spec.threads = 3;
  const auto b = ensemble_intensity(spec, {0.1}, planes, {0, 4000});
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t p = 0; p < 2; ++p) {
    EXPECT_EQ(a[p].counts(), b[p].counts());
    EXPECT_EQ(a[p].overflow(), b[p].overflow());
    EXPECT_EQ(a[p].n_traj(), 4u);
  }
}

TEST(Sweep, ReproducibleAndValidated) {
  EnsembleSpec spec;
  spec.horizon = 2e4;
  spec.n_traj = 3;
  spec.seed = 4;
  const auto a = prevalence_sweep(spec, {0.01, 0.1});
  spec.threads = 2;
  const auto b = prevalence_sweep(spec, {0.01, 0.1});
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].eps, 0.0);
  EXPECT_DOUBLE_EQ(a[0].mean_prevalence, 1.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mean_prevalence, b[i].mean_prevalence);
    EXPECT_EQ(a[i].stderr_prevalence, b[i].stderr_prevalence);
    EXPECT_GE(a[i].mean_prevalence, 0.0);
    EXPECT_LE(a[i].mean_prevalence, 1.0);
  }
  EXPECT_THROW(prevalence_sweep(spec, {}), std::invalid_argument);
  EXPECT_THROW(prevalence_sweep(spec, {0.1, -0.1}), std::invalid_argument);
  spec.n_traj = 0;
  EXPECT_THROW(prevalence_sweep(spec, {0.1}), std::invalid_argument);
}
