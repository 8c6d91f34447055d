#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hysim/dynamics.hpp"

using namespace hysim;

namespace {

const ReducedCoefficients kCanon = ReducedCoefficients::canonical();

// Independent reference: the right-hand side written out from the matrix
// form A x + B, integrated with a tiny-step RK4 of its own.
State matrix_form_rhs(const State& x, Mode m) {
  const double a = 0.0019, b = 0.0244, c = -0.0012, d = -0.0506, e = -0.1065;
  const double alpha = 0.056, beta = 0.0038;
  const double d1 = m.delta1, d2 = m.delta2;
  return {(-a - d1 * c) * x.T1 + d1 * d * x.P + b + e * d1,
          (-a - d2 * c) * x.T2 + d2 * d * x.P + b + e * d2,
          -alpha * x.P + beta + d1 + d2};
}

State dense_rk4(State x, Mode m, double t, int steps) {
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    const State k1 = matrix_form_rhs(x, m);
    const State k2 = matrix_form_rhs(x + (0.5 * h) * k1, m);
    const State k3 = matrix_form_rhs(x + (0.5 * h) * k2, m);
    const State k4 = matrix_form_rhs(x + h * k3, m);
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

void expect_near(const State& got, const State& want, double tol) {
  EXPECT_NEAR(got.T1, want.T1, tol);
  EXPECT_NEAR(got.T2, want.T2, tol);
  EXPECT_NEAR(got.P, want.P, tol);
}

}  // namespace

TEST(Mode, RejectsNonBinaryFlags) {
  EXPECT_THROW(Mode(2, 0), std::invalid_argument);
  EXPECT_THROW(Mode(0, -1), std::invalid_argument);
  EXPECT_EQ(Mode::all().size(), 4u);
}

TEST(VectorField, ConstantTermsInClosedMode) {
  expect_near(vector_field({0, 0, 0}, {0, 0}, kCanon), {0.0244, 0.0244, 0.0038}, 1e-15);
}

TEST(VectorField, BothValvesOpen) {
  expect_near(vector_field({0, 0, 0}, {1, 1}, kCanon), {-0.0821, -0.0821, 2.0038}, 1e-14);
  expect_near(vector_field({5, 5, 10}, {1, 1}, kCanon), {-0.5916, -0.5916, 1.4438}, 1e-13);
}

TEST(VectorField, AgreesWithMatrixForm) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> T(-5, 15), P(0, 40);
  for (int i = 0; i < 200; ++i) {
    const State x{T(gen), T(gen), P(gen)};
    for (Mode m : Mode::all()) expect_near(vector_field(x, m, kCanon), matrix_form_rhs(x, m), 1e-13);
  }
}

TEST(VectorField, RejectsNonFinite) {
  EXPECT_THROW(vector_field({NAN, 0, 0}, {0, 0}, kCanon), std::domain_error);
  EXPECT_THROW(vector_field({0, INFINITY, 0}, {0, 0}, kCanon), std::domain_error);
}

TEST(PropagateExact, IdentityAtZero) {
  const State x{1.25, 3.5, 7.0};
  for (Mode m : Mode::all()) EXPECT_EQ(propagate_exact(x, m, kCanon, 0.0), x);
  EXPECT_THROW(propagate_exact(x, {0, 0}, kCanon, -1.0), std::invalid_argument);
}

TEST(PropagateExact, UpperCrossingTimeFromMidband) {
  // Oracle: scalar linear ODE, t = (1/a) ln((2.5 - b/a) / (5 - b/a)).
  const double t_cross = 145.640065980977255;
  const State x = propagate_exact({2.5, 2.5, 1.0}, {0, 0}, kCanon, t_cross);
  EXPECT_NEAR(x.T1, 5.0, 1e-12);
  EXPECT_NEAR(x.T2, 5.0, 1e-12);
  EXPECT_NEAR(t_cross, 145.66, 0.05);
  // Dense integration of the matrix form agrees.
  EXPECT_NEAR(dense_rk4({2.5, 2.5, 1.0}, {0, 0}, t_cross, 100000).T1, 5.0, 1e-10);
}

TEST(PropagateExact, ClosedModePressureLimit) {
  const State x = propagate_exact({2, 3, 12}, {0, 0}, kCanon, 2000.0);
  EXPECT_NEAR(x.P, 0.0678571428571428571, 1e-12);
}

TEST(PropagateExact, MatchesHighOrderReferenceSolutions) {
  // Frozen from an independent DOP853 integration (rtol 1e-13).
  expect_near(propagate_exact({2.5, 2.5, 5.0}, {1, 0}, kCanon, 100.0),
              {-82.21381565574241, 4.289606851585754, 17.877205111464356}, 1e-9);
  expect_near(propagate_exact({0.0, 5.0, 15.0}, {1, 1}, kCanon, 10.0),
              {-10.83949751578921, -5.874375301123035, 23.91119449094194}, 1e-10);
  expect_near(propagate_exact({4.0, 1.0, 0.5}, {0, 1}, kCanon, 250.0),
              {7.343332132309298, -212.62460256258524, 17.924985510612025}, 1e-9);
}

TEST(PropagateExact, SemigroupProperty) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> T(-2, 8), P(0, 30), dur(0, 250);
  for (int i = 0; i < 500; ++i) {
    const State x{T(gen), T(gen), P(gen)};
    const Mode m = Mode::all()[i % 4];
    const double t1 = dur(gen), t2 = dur(gen);
    const State direct = propagate_exact(x, m, kCanon, t1 + t2);
    const State composed = propagate_exact(propagate_exact(x, m, kCanon, t1), m, kCanon, t2);
    const double scale = std::max(1.0, max_abs_difference(direct, {}));
    EXPECT_LE(max_abs_difference(direct, composed), 1e-12 * scale) << "case " << i;
  }
}

TEST(PropagateExact, ResonantRatesUseLimitFormula) {
  // Tune c so that a + c == alpha exactly in open mode.
  ReducedCoefficients k = kCanon;
  k.c = k.alpha - k.a;
  const State x0{3.0, 1.0, 2.0};
  const State exact = propagate_exact(x0, {1, 1}, k, 40.0);
  ASSERT_TRUE(exact.finite());
  // Near-resonant neighbours bracket the limit: their midpoint cancels the
  // first-order parameter sensitivity.
  ReducedCoefficients lo = k, hi = k;
  lo.c -= 1e-6;
  hi.c += 1e-6;
  const double mid = 0.5 * (propagate_exact(x0, {1, 1}, lo, 40.0).T1 + propagate_exact(x0, {1, 1}, hi, 40.0).T1);
  EXPECT_NEAR(mid, exact.T1, 1e-7);
  // RK4 on the resonant system agrees with the limit formula.
  const auto arc = propagate_rk4(x0, {1, 1}, k, 0.01, 4000);
  expect_near(arc.back(), exact, 1e-9);
}

TEST(PropagateRk4, ValidatesInput) {
  EXPECT_THROW(propagate_rk4({1, 1, 1}, {0, 0}, kCanon, 0.0, 10), std::invalid_argument);
  EXPECT_THROW(propagate_rk4({1, 1, 1}, {0, 0}, kCanon, 0.1, 0), std::invalid_argument);
  EXPECT_EQ(propagate_rk4({1, 1, 1}, {0, 0}, kCanon, 0.1, 5).size(), 6u);
}

TEST(PropagateRk4, MatchesExactOverHundredSeconds) {
  const auto arc = propagate_rk4({2.5, 2.5, 5.0}, {0, 0}, kCanon, 0.1, 1000);
  expect_near(arc.back(), propagate_exact({2.5, 2.5, 5.0}, {0, 0}, kCanon, 100.0), 1e-8);
}

TEST(PropagateRk4, FifthOrderLocalError) {
  const State x0{1.0, 4.0, 12.0};
  const Mode m{1, 0};
  const double e1 = max_abs_difference(rk4_step(x0, m, kCanon, 0.4), propagate_exact(x0, m, kCanon, 0.4));
  const double e2 = max_abs_difference(rk4_step(x0, m, kCanon, 0.2), propagate_exact(x0, m, kCanon, 0.2));
  // Halving dt shrinks the one-step error by ~2^5.
  EXPECT_GT(e1 / e2, 20.0);
  EXPECT_LT(e1 / e2, 45.0);
}

TEST(PropagateRk4, FixedPointIsStationary) {
  for (Mode m : Mode::all()) {
    const State eq = fixed_point(m, kCanon);
    const State der = vector_field(eq, m, kCanon);
    EXPECT_NEAR(der.T1, 0.0, 1e-14);
    EXPECT_NEAR(der.P, 0.0, 1e-14);
    for (const auto& x : propagate_rk4(eq, m, kCanon, 0.1, 200)) {
      EXPECT_LE(max_abs_difference(x, eq), 1e-12);
    }
  }
}

TEST(Dynamics, MonotoneApproachOnceConverged) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> T(-3, 8), P(0, 30);
  for (int i = 0; i < 40; ++i) {
    const Mode m = Mode::all()[i % 4];
    const State eq = fixed_point(m, kCanon);
    // Let P converge first, then sample the temperature tail.
    State x = propagate_exact({T(gen), T(gen), P(gen)}, m, kCanon, 600.0);
    ASSERT_LT(std::abs(x.P - eq.P), 1e-9);
    const double s1 = std::copysign(1.0, x.T1 - eq.T1);
    const double s2 = std::copysign(1.0, x.T2 - eq.T2);
    for (int k = 0; k < 50; ++k) {
      const State next = propagate_exact(x, m, kCanon, 60.0);
      if (std::abs(next.T1 - eq.T1) > 1e-9) {
        EXPECT_EQ(std::copysign(1.0, next.T1 - eq.T1), s1);
        EXPECT_LE(std::abs(next.T1 - eq.T1), std::abs(x.T1 - eq.T1));
      }
      if (std::abs(next.T2 - eq.T2) > 1e-9) {
        EXPECT_EQ(std::copysign(1.0, next.T2 - eq.T2), s2);
      }
      x = next;
    }
  }
}

TEST(ReducePhysical, TableValues) {
  const auto k = reduce_physical(PhysicalParameters::table_defaults());
  const double denom = 1.6 * 260.0 * 385.0;  // 160160
  EXPECT_NEAR(k.alpha, 0.056, 1e-15);
  EXPECT_NEAR(k.beta, 0.088 / 23.0, 1e-15);
  EXPECT_NEAR(k.beta, 0.0038, 0.00005);
  EXPECT_NEAR(k.a, 300.0 / denom, 1e-15);
  EXPECT_NEAR(k.b, 3900.0 / denom, 1e-15);
  EXPECT_NEAR(k.d, 500.0 * -16.2072 / denom, 1e-15);
  EXPECT_NEAR(k.d, -0.0506, 5e-5);
  EXPECT_NEAR(k.e, 500.0 * (7.8 - 41.9095) / denom, 1e-15);
  EXPECT_NEAR(k.e, -0.1065, 5e-5);
  // Known disagreements with the canonical reduced model.
  EXPECT_NEAR(k.c, 800.0 / denom, 1e-15);
  EXPECT_NEAR(k.valve_gain, 1.0 / 23.0, 1e-15);
}

TEST(ReducePhysical, RejectsInvalidParameters) {
  auto p = PhysicalParameters::table_defaults();
  p.M_wall = 0.0;
  EXPECT_THROW(reduce_physical(p), std::invalid_argument);
  p = PhysicalParameters::table_defaults();
  p.T_lower = 5.0;
  EXPECT_THROW(reduce_physical(p), std::invalid_argument);
}
