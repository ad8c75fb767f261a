#include "demotraj/dmp.hpp"
#include "demotraj/ingest.hpp"
#include "demotraj/io.hpp"
#include "demotraj/metrics.hpp"
#include "demotraj/refine.hpp"
#include "demotraj/spline.hpp"
#include "demotraj/timeopt.hpp"
#include "demotraj/trajgen.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace demotraj;

namespace {

std::string source_path(const std::string& rel) { return std::string(DEMOTRAJ_SOURCE_DIR) + "/" + rel; }

struct Pipeline {
  RobotModel model = load_model(source_path("models/fr3.json"));
  DemoRecording raw = synth_demo(synth_spec_from_json(io::load_json(source_path("data/rt1_demo.json"))));
  std::vector<Waypoint> wps = extract_waypoints(raw, model, 0.01, 0.1);
  TimingResult timing = solve_timing(wps, model);
  ToleranceProfile tol = ToleranceProfile::uniform(wps.size(), Eigen::Vector3d::Constant(0.02), 0.1);
  SmoothTrajectory smooth = generate(wps, timing.tau, timing.total(), tol, model);
};

const Pipeline& pipeline() {
  static const Pipeline p;
  return p;
}

BSplineCurve random_curve(int n_ctrl, int dim) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vector> ctrl;
  for (int i = 0; i < n_ctrl; ++i) {
    Vector p(dim);
    for (int j = 0; j < dim; ++j) p[j] = u(rng);
    ctrl.push_back(p);
  }
  return BSplineCurve(ctrl, KnotVector::clamped_uniform(n_ctrl, 4));
}

void BM_SplineEval(benchmark::State& state) {
  const BSplineCurve c = random_curve(static_cast<int>(state.range(0)), 7);
  double s = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(c.derivative(s, 3));
    s = s > 0.999 ? 0.0 : s + 1e-3;
  }
}
BENCHMARK(BM_SplineEval)->Arg(8)->Arg(64)->Arg(512);

void BM_JerkGram(benchmark::State& state) {
  const auto k = KnotVector::clamped_uniform(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(derivative_gram(k, 3));
}
BENCHMARK(BM_JerkGram)->Arg(16)->Arg(64)->Arg(128);

void BM_ForwardKinematics(benchmark::State& state) {
  const RobotModel& m = pipeline().model;
  const Vector q = pipeline().wps.front().q;
  for (auto _ : state) benchmark::DoNotOptimize(fk(m, q));
}
BENCHMARK(BM_ForwardKinematics);

void BM_ExtractWaypoints(benchmark::State& state) {
  const Pipeline& p = pipeline();
  for (auto _ : state) benchmark::DoNotOptimize(extract_waypoints(p.raw, p.model, 0.01, 0.1));
}
BENCHMARK(BM_ExtractWaypoints);

void BM_SolveTiming(benchmark::State& state) {
  const Pipeline& p = pipeline();
  for (auto _ : state) benchmark::DoNotOptimize(solve_timing(p.wps, p.model));
}
BENCHMARK(BM_SolveTiming)->Unit(benchmark::kMillisecond);

void BM_TrajGen(benchmark::State& state) {
  const Pipeline& p = pipeline();
  for (auto _ : state) benchmark::DoNotOptimize(generate(p.wps, p.timing.tau, p.timing.total(), p.tol, p.model));
}
BENCHMARK(BM_TrajGen)->Unit(benchmark::kMillisecond);

void BM_TrajGenWarm(benchmark::State& state) {
  const Pipeline& p = pipeline();
  for (auto _ : state)
    benchmark::DoNotOptimize(generate(p.wps, p.timing.tau, p.timing.total(), p.tol, p.model, {}, p.smooth.solution));
}
BENCHMARK(BM_TrajGenWarm)->Unit(benchmark::kMillisecond);

void BM_Verify(benchmark::State& state) {
  const Pipeline& p = pipeline();
  for (auto _ : state) benchmark::DoNotOptimize(verify(p.smooth.traj, p.model, p.wps, p.smooth.tau, p.tol));
}
BENCHMARK(BM_Verify)->Unit(benchmark::kMillisecond);

void BM_RefineTick(benchmark::State& state) {
  Refiner r(1.0, {});
  for (auto _ : state) {
    if (r.done()) {
      state.PauseTiming();
      r = Refiner(1.0, {});
      state.ResumeTiming();
    }
    r.step(-0.5);
  }
}
BENCHMARK(BM_RefineTick);

void BM_RefineOffline(benchmark::State& state) {
  const Pipeline& p = pipeline();
  const auto C = read_command_trace(source_path("data/rt1_brake.csv"), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(refine(C, p.smooth.traj.duration(), p.smooth.tau));
}
BENCHMARK(BM_RefineOffline)->Unit(benchmark::kMicrosecond);

void BM_DmpTrain(benchmark::State& state) {
  const SampledTrajectory demo = sample_trajectory(pipeline().smooth.traj);
  for (auto _ : state) benchmark::DoNotOptimize(train_dmp(demo, {static_cast<int>(state.range(0)), 48.0}));
}
BENCHMARK(BM_DmpTrain)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_DmpRollout(benchmark::State& state) {
  const DmpModel m = train_dmp(sample_trajectory(pipeline().smooth.traj));
  for (auto _ : state) benchmark::DoNotOptimize(rollout(m, m.duration));
}
BENCHMARK(BM_DmpRollout)->Unit(benchmark::kMillisecond);

void BM_Violations(benchmark::State& state) {
  const Pipeline& p = pipeline();
  for (auto _ : state) benchmark::DoNotOptimize(violations(p.smooth.traj, p.model, 1e-3));
}
BENCHMARK(BM_Violations)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
