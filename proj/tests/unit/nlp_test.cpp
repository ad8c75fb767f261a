#include "demotraj/nlp.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

namespace demotraj::nlp {
namespace {

Problem quadratic_with_upper_bound_constraint() {
  Problem p;
  p.dim = 1;
  p.objective.value = [](const Vector& x) { return (x[0] - 2.0) * (x[0] - 2.0); };
  p.objective.gradient = [](const Vector& x, VectorRef g) { g[0] = 2.0 * (x[0] - 2.0); };
  p.inequalities.push_back({"x<=1", 1, [](const Vector& x, VectorRef c) { c[0] = x[0] - 1.0; },
                            [](const Vector&, const Vector& w, VectorRef g) { g[0] += w[0]; }});
  return p;
}

TEST(Solve, ActiveInequality) {
  const Problem p = quadratic_with_upper_bound_constraint();
  const Solution s = solve(p, Vector::Constant(1, 0.0));
  EXPECT_EQ(s.status, Status::converged) << s.diagnostic;
  EXPECT_NEAR(s.x[0], 1.0, 1e-6);
  EXPECT_NEAR(s.ineq_multipliers[0], 2.0, 1e-4);
}

TEST(Solve, UnconstrainedQuadratic) {
  Problem p;
  p.dim = 2;
  p.objective.value = [](const Vector& x) { return x.squaredNorm(); };
  p.objective.gradient = [](const Vector& x, VectorRef g) { g = 2.0 * x; };
  Options o;
  o.opt_tol = 1e-10;
  const Solution s = solve(p, Eigen::Vector2d(3.0, -4.0), o);
  EXPECT_EQ(s.status, Status::converged);
  EXPECT_LE(s.x.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Solve, FiniteDifferenceFallback) {
  Problem p;
  p.dim = 2;
  p.objective.value = [](const Vector& x) { return x[0] + x[1]; };
  p.equalities.push_back({"circle", 1, [](const Vector& x, VectorRef c) { c[0] = x.squaredNorm() - 2.0; }, {}});
  const Solution s = solve(p, Eigen::Vector2d(0.5, -0.2));
  EXPECT_EQ(s.status, Status::converged) << s.diagnostic;
  EXPECT_NEAR(s.x[0], -1.0, 1e-5);
  EXPECT_NEAR(s.x[1], -1.0, 1e-5);
}

TEST(Solve, BoxBoundsRosenbrock) {
  Problem p;
  p.dim = 2;
  p.objective.value = [](const Vector& x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  p.objective.gradient = [](const Vector& x, VectorRef g) {
    g[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
    g[1] = 200.0 * (x[1] - x[0] * x[0]);
  };
  p.lower = Eigen::Vector2d(-2.0, -2.0);
  p.upper = Eigen::Vector2d(0.5, 2.0);
  Options o;
  o.max_inner = 2000;
  const Solution s = solve(p, Eigen::Vector2d(-1.2, 1.0), o);
  EXPECT_EQ(s.status, Status::converged);
  EXPECT_NEAR(s.x[0], 0.5, 1e-6);
  EXPECT_NEAR(s.x[1], 0.25, 1e-4);
}

// Oracle: equality-constrained convex QP solved through its KKT linear system.
TEST(Solve, ConvexQpMatchesKktSolution) {
  std::mt19937 rng(42);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd B(5, 5), A(2, 5);
    Eigen::VectorXd c(5), b(2);
    for (int i = 0; i < 5; ++i) {
      c[i] = n(rng);
      for (int j = 0; j < 5; ++j) B(i, j) = n(rng);
    }
    for (int i = 0; i < 2; ++i) {
      b[i] = n(rng);
      for (int j = 0; j < 5; ++j) A(i, j) = n(rng);
    }
    const Eigen::MatrixXd Q = B * B.transpose() + Eigen::MatrixXd::Identity(5, 5);

    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(7, 7);
    K.topLeftCorner(5, 5) = Q;
    K.topRightCorner(5, 2) = A.transpose();
    K.bottomLeftCorner(2, 5) = A;
    Eigen::VectorXd rhs(7);
    rhs << -c, b;
    const Eigen::VectorXd kkt = K.fullPivLu().solve(rhs);

    Problem p;
    p.dim = 5;
    p.objective.value = [&](const Vector& x) { return 0.5 * x.dot(Q * x) + c.dot(x); };
    p.objective.gradient = [&](const Vector& x, VectorRef g) { g = Q * x + c; };
    p.equalities.push_back({"Ax=b", 2, [&](const Vector& x, VectorRef out) { out = A * x - b; },
                            [&](const Vector&, const Vector& w, VectorRef g) { g += A.transpose() * w; }});
    Options o;
    o.feas_tol = 1e-9;
    o.opt_tol = 1e-7;
    const Solution s = solve(p, Vector::Zero(5), o);
    EXPECT_EQ(s.status, Status::converged) << s.kkt_residual << " " << s.constraint_violation << " " << s.outer_iterations << " " << s.inner_iterations;
    EXPECT_LE((s.x - kkt.head(5)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((s.eq_multipliers - kkt.tail(2)).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Solve, GaussNewtonModelMatchesKktSolution) {
  std::mt19937 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd B(6, 6), A(2, 6), G(3, 6);
    Eigen::VectorXd c(6), b(2);
    for (int i = 0; i < 6; ++i) {
      c[i] = n(rng);
      for (int j = 0; j < 6; ++j) B(i, j) = n(rng);
      for (int j = 0; j < 2; ++j) A(j, i) = n(rng);
      for (int j = 0; j < 3; ++j) G(j, i) = n(rng);
    }
    for (int i = 0; i < 2; ++i) b[i] = n(rng);
    const Eigen::MatrixXd Q = B * B.transpose() + Eigen::MatrixXd::Identity(6, 6);

    // Reference: equality-only KKT, then keep the trial only if G x <= h is slack there.
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(8, 8);
    K.topLeftCorner(6, 6) = Q;
    K.topRightCorner(6, 2) = A.transpose();
    K.bottomLeftCorner(2, 6) = A;
    Eigen::VectorXd rhs(8);
    rhs << -c, b;
    const Eigen::VectorXd kkt = K.fullPivLu().solve(rhs);
    const Eigen::VectorXd h = G * kkt.head(6) + Eigen::VectorXd::Constant(3, 0.5);

    Problem p;
    p.dim = 6;
    p.objective.value = [&](const Vector& x) { return 0.5 * x.dot(Q * x) + c.dot(x); };
    p.objective.gradient = [&](const Vector& x, VectorRef g) { g = Q * x + c; };
    p.objective.hessian = [&](const Vector&, Eigen::Ref<Eigen::MatrixXd> H) { H = Q; };
    ConstraintBlock eq{"Ax=b", 2, [&](const Vector& x, VectorRef out) { out = A * x - b; },
                       [&](const Vector&, const Vector& w, VectorRef g) { g += A.transpose() * w; }};
    eq.jacobian = [&](const Vector&, Eigen::Ref<Eigen::MatrixXd> J) { J = A; };
    p.equalities.push_back(eq);
    // No dense Jacobian here: the model falls back to unit-weight transposes.
    p.inequalities.push_back({"Gx<=h", 3, [&](const Vector& x, VectorRef out) { out = G * x - h; },
                              [&](const Vector&, const Vector& w, VectorRef g) { g += G.transpose() * w; }});
    Options o;
    o.feas_tol = 1e-9;
    o.opt_tol = 1e-7;
    const Solution s = solve(p, Vector::Zero(6), o);
    EXPECT_EQ(s.status, Status::converged);
    EXPECT_LE((s.x - kkt.head(6)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((s.eq_multipliers - kkt.tail(2)).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LE(s.ineq_multipliers.cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Solve, Deterministic) {
  const Problem p = quadratic_with_upper_bound_constraint();
  const Solution a = solve(p, Vector::Constant(1, -3.0));
  const Solution b = solve(p, Vector::Constant(1, -3.0));
  ASSERT_EQ(a.x.size(), b.x.size());
  EXPECT_EQ(std::memcmp(a.x.data(), b.x.data(), sizeof(double) * a.x.size()), 0);
  EXPECT_EQ(std::memcmp(&a.objective_value, &b.objective_value, sizeof(double)), 0);
  EXPECT_EQ(a.inner_iterations, b.inner_iterations);
}

TEST(Solve, ReportedViolationIsHonest) {
  Problem p;
  p.dim = 3;
  p.objective.value = [](const Vector& x) { return x.squaredNorm(); };
  p.objective.gradient = [](const Vector& x, VectorRef g) { g = 2 * x; };
  p.inequalities.push_back({"sum>=1", 1, [](const Vector& x, VectorRef c) { c[0] = 1.0 - x.sum(); },
                            [](const Vector&, const Vector& w, VectorRef g) { g.array() -= w[0]; }});
  p.equalities.push_back({"x0=x1^2", 1, [](const Vector& x, VectorRef c) { c[0] = x[0] - x[1] * x[1]; }, {}});
  Options o;
  o.max_outer = 3;  // stop early on purpose
  const Solution s = solve(p, Vector::Zero(3), o);
  EXPECT_NEAR(max_violation(p, s.x), s.constraint_violation, 1e-12);
}

TEST(Solve, MeritNonIncreasingWithinOuterIterations) {
  Problem p;
  p.dim = 2;
  p.objective.value = [](const Vector& x) { return std::pow(x[0] - 3, 2) + 10 * std::pow(x[1] + 1, 2); };
  p.objective.gradient = [](const Vector& x, VectorRef g) {
    g[0] = 2 * (x[0] - 3);
    g[1] = 20 * (x[1] + 1);
  };
  p.equalities.push_back({"x0*x1=1", 1, [](const Vector& x, VectorRef c) { c[0] = x[0] * x[1] - 1.0; },
                          [](const Vector& x, const Vector& w, VectorRef g) {
                            g[0] += w[0] * x[1];
                            g[1] += w[0] * x[0];
                          }});
  Options o;
  o.record_merit = true;
  const Solution s = solve(p, Eigen::Vector2d(1.0, 1.0), o);
  ASSERT_FALSE(s.merit_history.empty());
  for (const auto& outer : s.merit_history)
    for (std::size_t i = 1; i < outer.size(); ++i) ASSERT_LE(outer[i], outer[i - 1]);
}

TEST(Solve, InfeasibleProblemReported) {
  Problem p;
  p.dim = 1;
  p.objective.value = [](const Vector& x) { return x[0] * x[0]; };
  p.objective.gradient = [](const Vector& x, VectorRef g) { g[0] = 2 * x[0]; };
  p.inequalities.push_back({"x<=-1", 1, [](const Vector& x, VectorRef c) { c[0] = x[0] + 1.0; },
                            [](const Vector&, const Vector& w, VectorRef g) { g[0] += w[0]; }});
  p.lower = Vector::Constant(1, 0.0);
  p.upper = Vector::Constant(1, 5.0);
  const Solution s = solve(p, Vector::Constant(1, 2.0));
  EXPECT_EQ(s.status, Status::infeasible);
  EXPECT_NEAR(s.constraint_violation, 1.0, 1e-9);
}

TEST(Solve, NonFiniteCallbackIsNumericFailure) {
  Problem p;
  p.dim = 1;
  p.objective.value = [](const Vector& x) { return x[0] > 0.5 ? std::nan("") : -x[0]; };
  p.objective.gradient = [](const Vector&, VectorRef g) { g[0] = -1.0; };
  const Solution s = solve(p, Vector::Constant(1, 0.0));
  EXPECT_EQ(s.status, Status::numeric_failure);
  EXPECT_NE(s.diagnostic.find("objective"), std::string::npos);
}

TEST(Solve, CancellationChecked) {
  std::atomic<bool> cancel{true};
  Options o;
  o.cancel = &cancel;
  const Solution s = solve(quadratic_with_upper_bound_constraint(), Vector::Constant(1, 0.0), o);
  EXPECT_EQ(s.status, Status::cancelled);
}

TEST(Solve, WarmStartReusesMultipliers) {
  const Problem p = quadratic_with_upper_bound_constraint();
  const Solution cold = solve(p, Vector::Constant(1, 0.0));
  const Solution warm = solve(p, cold.x, {}, cold.warm_start());
  EXPECT_EQ(warm.status, Status::converged);
  EXPECT_LE(warm.outer_iterations, cold.outer_iterations);
  EXPECT_LE(warm.objective_value, cold.objective_value + 1e-10);
}

TEST(CheckGradients, ExactQuadraticHasTinyError) {
  Problem p;
  p.dim = 4;
  p.objective.value = [](const Vector& x) { return 0.5 * x.squaredNorm() + x[0] * x[1]; };
  p.objective.gradient = [](const Vector& x, VectorRef g) {
    g = x;
    g[0] += x[1];
    g[1] += x[0];
  };
  const GradientReport r = check_gradients(p, Eigen::Vector4d(0.3, -0.2, 0.5, 0.1));
  EXPECT_FALSE(r.any_flagged());
  EXPECT_LE(r.max_rel_error, 1e-9);
}

TEST(CheckGradients, FlagsWrongGradients) {
  Problem p;
  p.dim = 2;
  p.objective.value = [](const Vector& x) { return x.squaredNorm(); };
  p.objective.gradient = [](const Vector& x, VectorRef g) { g = 4.0 * x; };  // off by a factor 2
  p.inequalities.push_back({"bad", 1, [](const Vector& x, VectorRef c) { c[0] = x[0] * x[1]; },
                            [](const Vector& x, const Vector& w, VectorRef g) {
                              g[0] += w[0] * x[1];
                              g[1] += 2.0 * w[0] * x[0];  // wrong
                            }});
  const GradientReport r = check_gradients(p, Eigen::Vector2d(0.7, -0.4));
  EXPECT_TRUE(r.any_flagged());
  bool objective_flagged = false, block_flagged = false;
  for (const auto& e : r.entries) {
    if (e.flagged && e.callback == "objective") objective_flagged = true;
    if (e.flagged && e.callback == "bad") block_flagged = true;
  }
  EXPECT_TRUE(objective_flagged);
  EXPECT_TRUE(block_flagged);
}

TEST(CheckGradients, FlagsWrongDenseCallbacks) {
  Problem p;
  p.dim = 2;
  p.objective.value = [](const Vector& x) { return x[0] * x[0] * x[1]; };
  p.objective.gradient = [](const Vector& x, VectorRef g) {
    g[0] = 2.0 * x[0] * x[1];
    g[1] = x[0] * x[0];
  };
  p.objective.hessian = [](const Vector& x, Eigen::Ref<Eigen::MatrixXd> h) {
    h << 2.0 * x[1], 2.0 * x[0], 2.0 * x[0], 1.0;  // (1,1) should be 0
  };
  ConstraintBlock b{"c", 1, [](const Vector& x, VectorRef c) { c[0] = x[0] - x[1]; },
                    [](const Vector&, const Vector& w, VectorRef g) {
                      g[0] += w[0];
                      g[1] -= w[0];
                    }};
  b.jacobian = [](const Vector&, Eigen::Ref<Eigen::MatrixXd> j) { j << 1.0, 1.0; };  // sign error
  p.equalities.push_back(b);
  const GradientReport r = check_gradients(p, Eigen::Vector2d(0.7, -0.4));
  bool hessian_flagged = false, jacobian_flagged = false, plain_flagged = false;
  for (const auto& e : r.entries) {
    if (!e.flagged) continue;
    if (e.callback == "objective.hessian") hessian_flagged = true;
    else if (e.callback == "c.jacobian") jacobian_flagged = true;
    else plain_flagged = true;
  }
  EXPECT_TRUE(hessian_flagged);
  EXPECT_TRUE(jacobian_flagged);
  EXPECT_FALSE(plain_flagged);
}

}  // namespace
}  // namespace demotraj::nlp
