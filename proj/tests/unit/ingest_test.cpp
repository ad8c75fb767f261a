#include "demotraj/errors.hpp"
#include "demotraj/ingest.hpp"
#include "demotraj/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

namespace demotraj {
namespace {

RobotModel planar() { return load_model(test::source_path("models/planar2r.json")); }
RobotModel fr3() { return load_model(test::source_path("models/fr3.json")); }
SynthSpec fixture() { return synth_spec_from_json(io::load_json(test::source_path("data/rt1_demo.json"))); }

DemoRecording from_samples(std::vector<Vector> qs, double dt = 0.01) {
  DemoRecording rec;
  rec.rate_hz = 1.0 / dt;
  for (std::size_t i = 0; i < qs.size(); ++i) rec.t.push_back(static_cast<double>(i) * dt);
  rec.q = std::move(qs);
  return rec;
}

// Elbow-down closed-form IK of the unit-link planar arm.
Vector planar_ik(double x, double y) {
  const double c2 = (x * x + y * y - 2.0) / 2.0;
  const double q2 = std::acos(std::clamp(c2, -1.0, 1.0));
  const double q1 = std::atan2(y, x) - std::atan2(std::sin(q2), 1.0 + std::cos(q2));
  return Eigen::Vector2d(q1, q2);
}

double max_jerk(const DemoRecording& rec) {
  const auto d = differentiate_noncausal(rec.t, rec.q);
  double m = 0.0;
  for (const auto& j : d.dddq) m = std::max(m, j.cwiseAbs().maxCoeff());
  return m;
}

TEST(Waypoints, StationaryCollapses) {
  const auto m = planar();
  const DemoRecording rec = from_samples(std::vector<Vector>(50, Eigen::Vector2d(0.3, 0.4)));
  const auto wps = extract_waypoints(rec, m, 0.01, 0.1);
  ASSERT_EQ(wps.size(), 1u);
  EXPECT_EQ(wps[0].index, 0);
}

TEST(Waypoints, StraightSweepCount) {
  const auto m = planar();
  std::vector<Vector> qs;
  const int n = 2001;
  for (int i = 0; i < n; ++i) qs.push_back(planar_ik(1.2 + 0.1 * i / (n - 1), 0.5));
  const auto rec = from_samples(qs, 0.001);
  EXPECT_NEAR(fk(m, qs.front()).p.x(), 1.2, 1e-12);
  const auto wps = extract_waypoints(rec, m, 0.01, 10.0);
  EXPECT_GE(wps.size(), 10u);
  EXPECT_LE(wps.size(), 12u);
  EXPECT_EQ(wps.back().index, n - 1);
}

TEST(Waypoints, PoseMatchesFk) {
  const auto m = fr3();
  const auto rec = synth_demo(fixture());
  for (const auto& w : extract_waypoints(rec, m, 0.01, 0.1)) {
    const Pose p = fk(m, w.q);
    EXPECT_NEAR((p.p - w.p).norm(), 0.0, 1e-9);
    EXPECT_NEAR(quat_diff(p.theta, w.theta), 0.0, 1e-7);
    EXPECT_EQ(w.q, rec.q[static_cast<std::size_t>(w.index)]);
  }
}

TEST(Waypoints, ThresholdPropertyAndIdempotence) {
  const auto m = fr3();
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    SynthSpec s = fixture();
    s.seed = rng();
    s.noise_std = 0.001 * (trial % 4);
    const auto rec = synth_demo(s);
    const double pt = 0.005 + 0.005 * (trial % 3), at = 0.05 + 0.05 * (trial % 2);
    const auto wps = extract_waypoints(rec, m, pt, at);
    ASSERT_GE(wps.size(), 2u);
    EXPECT_EQ(wps.front().index, 0);
    EXPECT_EQ(wps.back().index, static_cast<int>(rec.size()) - 1);
    for (std::size_t i = 1; i + 1 < wps.size(); ++i) {
      const bool moved = (wps[i].p - wps[i - 1].p).norm() >= pt || quat_diff(wps[i].theta, wps[i - 1].theta) >= at;
      EXPECT_TRUE(moved);
    }
    DemoRecording sub;
    for (const auto& w : wps) {
      sub.t.push_back(rec.t[static_cast<std::size_t>(w.index)]);
      sub.q.push_back(w.q);
    }
    const auto again = extract_waypoints(sub, m, pt, at);
    ASSERT_EQ(again.size(), wps.size());
    for (std::size_t i = 0; i < wps.size(); ++i) EXPECT_EQ(again[i].q, wps[i].q);
  }
}

TEST(Waypoints, FixtureCount) {
  const auto wps = extract_waypoints(synth_demo(fixture()), fr3(), 0.01, 0.1);
  // Recorded fixture value; update together with data/rt1_demo.json.
  EXPECT_EQ(wps.size(), 23u);
}

TEST(Waypoints, Errors) {
  const auto m = planar();
  EXPECT_THROW(extract_waypoints(DemoRecording{}, m, 0.01, 0.1), InvalidArgument);
  const auto rec = from_samples(std::vector<Vector>(4, Eigen::Vector2d::Zero()));
  EXPECT_THROW(extract_waypoints(rec, m, 0.0, 0.1), InvalidArgument);
  EXPECT_THROW(extract_waypoints(rec, m, 0.01, -1.0), InvalidArgument);
}

TEST(Differentiate, ConstantAndLinear) {
  std::vector<double> t;
  std::vector<Vector> c, lin;
  for (int i = 0; i < 30; ++i) {
    t.push_back(0.125 * i);
    c.push_back(Eigen::Vector2d(1.5, -2.0));
    lin.push_back(Eigen::Vector2d(0.125 * i, 0.125 * i));
  }
  const auto dc = differentiate_noncausal(t, c);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(dc.dq[i].norm(), 0.0);
    EXPECT_EQ(dc.ddq[i].norm(), 0.0);
    EXPECT_EQ(dc.dddq[i].norm(), 0.0);
  }
  const auto dl = differentiate_noncausal(t, lin);
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    EXPECT_NEAR(dl.dq[i][0], 1.0, 1e-12);
    EXPECT_NEAR(dl.ddq[i][0], 0.0, 1e-9);
  }
}

TEST(Differentiate, SineAnalytic) {
  std::vector<double> t;
  std::vector<Vector> q;
  for (int i = 0; i <= 600; ++i) {
    t.push_back(i * 0.01);
    q.push_back(Vector::Constant(1, std::sin(t.back())));
  }
  const auto d = differentiate_noncausal(t, q);
  double err = 0.0;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) err = std::max(err, std::abs(d.dq[i][0] - std::cos(t[i])));
  EXPECT_LE(err, 1e-3);
}

TEST(Differentiate, NonUniformGridExactForQuadratic) {
  std::vector<double> t{0.0, 0.1, 0.25, 0.3, 0.5, 0.55};
  std::vector<Vector> q;
  for (double ti : t) q.push_back(Vector::Constant(1, 3.0 * ti * ti - ti));
  const auto d = differentiate_noncausal(t, q);
  for (std::size_t i = 1; i + 1 < t.size(); ++i) EXPECT_NEAR(d.dq[i][0], 6.0 * t[i] - 1.0, 1e-12);
}

TEST(Differentiate, TooFewSamples) {
  std::vector<double> t{0, 1, 2};
  std::vector<Vector> q(3, Vector::Zero(1));
  EXPECT_THROW(differentiate_noncausal(t, q), InvalidArgument);
}

TEST(Synth, NoiselessMatchesPath) {
  SynthSpec s = fixture();
  s.noise_std = 0.0;
  const auto rec = synth_demo(s);
  EXPECT_NEAR(rec.duration(), s.duration, 1e-12);
  EXPECT_EQ(rec.size(), 101u);
  for (std::size_t i = 0; i < rec.size(); ++i) EXPECT_NEAR((rec.q[i] - synth_path(s, rec.t[i])).norm(), 0.0, 1e-9);
  // Passes through every skeleton configuration, starts and ends at rest.
  EXPECT_NEAR((rec.q.front() - s.skeleton.front()).norm(), 0.0, 1e-12);
  EXPECT_NEAR((rec.q.back() - s.skeleton.back()).norm(), 0.0, 1e-12);
  EXPECT_NEAR((synth_path(s, 1e-4) - s.skeleton.front()).norm(), 0.0, 1e-9);
}

TEST(Synth, SkeletonInterpolationOracle) {
  // Two-point skeleton is a straight joint-space line under the min-jerk law.
  SynthSpec s;
  s.skeleton = {Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(1.0, -1.0)};
  s.duration = 2.0;
  for (double t : {0.0, 0.3, 1.0, 1.7, 2.0}) {
    const double tau = t / 2.0;
    const double u = 10 * std::pow(tau, 3) - 15 * std::pow(tau, 4) + 6 * std::pow(tau, 5);
    EXPECT_NEAR((synth_path(s, t) - Eigen::Vector2d(u, 1.0 - 2.0 * u)).norm(), 0.0, 1e-12);
  }
}

TEST(Synth, SameSeedBitIdentical) {
  const auto a = synth_demo(fixture());
  const auto b = synth_demo(fixture());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.t[i], &b.t[i], sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(a.q[i].data(), b.q[i].data(), sizeof(double) * a.q[i].size()), 0);
  }
  SynthSpec other = fixture();
  other.seed += 1;
  EXPECT_NE(synth_demo(other).q[5], a.q[5]);
}

TEST(Synth, NoiseAmplifiesJerk) {
  SynthSpec clean = fixture();
  clean.noise_std = 0.0;
  const double noisy = max_jerk(synth_demo(fixture()));
  const double smooth = max_jerk(synth_demo(clean));
  EXPECT_GE(noisy, 100.0 * smooth) << noisy << " vs " << smooth;
}

TEST(Synth, RecordingInvariantsForRandomSpecs) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dur(0.05, 20.0), rate(1.0, 500.0);
  for (int i = 0; i < 100; ++i) {
    SynthSpec s;
    s.skeleton = test::random_points(rng, 2 + i % 5, 3);
    s.duration = dur(rng);
    s.rate_hz = rate(rng);
    s.noise_std = 0.01;
    s.seed = i;
    EXPECT_NO_THROW(synth_demo(s).validate());
  }
  SynthSpec bad = fixture();
  bad.duration = 0.0;
  EXPECT_THROW(synth_demo(bad), InvalidArgument);
}

TEST(RecordingIo, CsvRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "demotraj_ingest_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "demo.csv").string();
  auto rec = synth_demo(fixture());
  rec.model = "fr3";
  write_recording(path, rec);
  EXPECT_TRUE(std::filesystem::exists(dir / "demo.json"));
  const auto back = read_recording(path);
  EXPECT_EQ(back.model, "fr3");
  EXPECT_EQ(back.rate_hz, rec.rate_hz);
  ASSERT_EQ(back.size(), rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    EXPECT_EQ(back.t[i], rec.t[i]);
    EXPECT_EQ(back.q[i], rec.q[i]);
  }
  EXPECT_EQ(io::read_text(path).substr(0, 21), "t,q1,q2,q3,q4,q5,q6,q");
  io::write_text(path, "t,q1\n0,1\n0,2\n");
  EXPECT_THROW(read_recording(path), InvalidArgument);
  io::write_text(path, "t,q1\n0,1\n1,abc\n");
  EXPECT_THROW(read_recording(path), InvalidArgument);
  std::filesystem::remove_all(dir);
}

TEST(RecordingIo, WaypointJsonRoundTrip) {
  const auto wps = extract_waypoints(synth_demo(fixture()), fr3(), 0.01, 0.1);
  const auto back = waypoints_from_json(waypoints_to_json(wps));
  ASSERT_EQ(back.size(), wps.size());
  for (std::size_t i = 0; i < wps.size(); ++i) {
    EXPECT_EQ(back[i].index, wps[i].index);
    EXPECT_EQ(back[i].q, wps[i].q);
    EXPECT_EQ(back[i].p, wps[i].p);
  }
}

}  // namespace
}  // namespace demotraj
