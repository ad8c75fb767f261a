#include "demotraj/dmp.hpp"
#include "demotraj/errors.hpp"
#include "demotraj/ingest.hpp"
#include "demotraj/io.hpp"
#include "demotraj/metrics.hpp"
#include "demotraj/refine.hpp"
#include "demotraj/replay_server.hpp"
#include "demotraj/timeopt.hpp"
#include "demotraj/trajgen.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace demotraj;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kInfeasible = 2, kInvalid = 3, kInternal = 4 };

/// A solver finished without a usable result. The partial output is still written.
class Infeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void fail_json(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

std::vector<fs::path> model_dirs() {
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("DEMOTRAJ_MODELS")) dirs.emplace_back(env);
#ifdef DEMOTRAJ_MODEL_DIR
  dirs.emplace_back(DEMOTRAJ_MODEL_DIR);
#endif
  return dirs;
}

/// A model file path, or a bundled model name such as "fr3".
RobotModel resolve_model(const std::string& arg) {
  if (arg.empty()) throw InvalidArgument("no robot model given (--model)");
  if (fs::is_regular_file(arg)) return load_model(arg);
  for (const auto& dir : model_dirs())
    if (fs::is_regular_file(dir / (arg + ".json"))) return load_model((dir / (arg + ".json")).string());
  throw InvalidArgument("unknown robot model '" + arg + "'");
}

std::string bundled(const std::string& rel) {
#ifdef DEMOTRAJ_DATA_DIR
  return (fs::path(DEMOTRAJ_DATA_DIR) / rel).string();
#else
  return rel;
#endif
}

void emit(const std::string& out, const json& doc) {
  if (out.empty() || out == "-")
    std::cout << doc.dump(2) << std::endl;
  else
    io::save_json(out, doc);
}

TimedTrajectory load_trajectory(const std::string& path) {
  const json j = io::load_json(path);
  return trajectory_from_json(j.contains("trajectory") ? j.at("trajectory") : j);
}

/// JSON trajectory files are sampled at 1 kHz; CSV files are either a sampled
/// trajectory or a recording.
SampledTrajectory load_sampled(const std::string& path, double dt) {
  if (fs::path(path).extension() == ".json") return sample_trajectory(load_trajectory(path), dt);
  return read_sampled_trajectory(path);
}

// Config file: a JSON object whose keys are flag names without the leading
// dashes. Keys nested under a subcommand name apply to that subcommand only and
// must exist there; top-level keys apply wherever the flag exists. Flags given
// on the command line win.
std::vector<std::string> apply_config(CLI::App& app, std::vector<std::string> args) {
  std::string path;
  for (auto it = args.begin(); it != args.end(); ++it) {
    if (*it == "--config") {
      if (std::next(it) == args.end()) throw InvalidArgument("--config needs a file");
      path = *std::next(it);
      args.erase(it, it + 2);
      break;
    }
    if (it->rfind("--config=", 0) == 0) {
      path = it->substr(9);
      args.erase(it);
      break;
    }
  }
  if (path.empty()) return args;
  const json cfg = io::load_json(path);
  if (!cfg.is_object()) throw InvalidArgument("config file must hold a JSON object");
  const auto sub_it = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
  if (sub_it == args.end()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(*sub_it);
  if (!sub) return args;

  std::vector<std::string> injected;
  auto given = [&](const std::string& name) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == name || a.rfind(name + "=", 0) == 0; });
  };
  auto inject = [&](std::string key, const json& value, bool strict) {
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string name = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(name);
    if (!opt) {
      if (strict) throw InvalidArgument("config key '" + key + "' is not an option of " + sub->get_name());
      return;
    }
    if (given(name)) return;
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (opt->get_expected_min() == 0) {
      if (!value.is_boolean()) throw InvalidArgument("config key '" + key + "' must be true or false");
      if (value.get<bool>()) injected.push_back(name);
      return;
    }
    injected.push_back(name);
    if (value.is_array())
      for (const auto& v : value) injected.push_back(text(v));
    else
      injected.push_back(text(value));
  };
  for (const auto& [key, value] : cfg.items())
    if (!value.is_object()) inject(key, value, false);
  if (cfg.contains(sub->get_name())) {
    const json& section = cfg.at(sub->get_name());
    if (!section.is_object()) throw InvalidArgument("config section '" + sub->get_name() + "' must be an object");
    for (const auto& [key, value] : section.items()) inject(key, value, true);
  }
  args.insert(std::next(sub_it), injected.begin(), injected.end());
  return args;
}

struct Opts {
  std::string out, model, rec, wps, tau, traj, trace, refinement, spec, dmp, serve, params, trace_dir, out_dir, report,
      json_report, brake;
  double pos_thresh = 0.01, ang_thresh = 0.1;
  double tol_pos = 0.02, tol_ang = 0.1;
  double alpha = 1.0, beta = 0.04, gamma = 1.0;
  std::optional<double> eta, vmin_ratio;
  double duration = 0.0, dt = 1e-3, time_scale = 1.0;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  int basis = 25;
  bool autostart = false;
  bool skip_refine = false;
  std::vector<std::string> entries;
  std::vector<double> start, goal;
};

TrajGenConfig trajgen_config(const Opts& o) {
  TrajGenConfig cfg;
  cfg.alpha = o.alpha;
  cfg.beta = o.beta;
  cfg.gamma = o.gamma;
  return cfg;
}

RefineParams refine_params(const Opts& o) {
  RefineParams p = o.params.empty() ? RefineParams{} : refine_params_from_json(io::load_json(o.params));
  if (o.eta) p.eta = *o.eta;
  if (o.vmin_ratio) p.vmin_ratio = *o.vmin_ratio;
  p.validate();
  return p;
}

int cmd_synth(const Opts& o) {
  SynthSpec spec = synth_spec_from_json(io::load_json(o.spec.empty() ? bundled("data/rt1_demo.json") : o.spec));
  if (o.seed) spec.seed = *o.seed;
  if (o.noise) spec.noise_std = *o.noise;
  const DemoRecording rec = synth_demo(spec);
  if (o.out.empty()) throw InvalidArgument("synth needs --out <recording.csv>");
  write_recording(o.out, rec);
  return kOk;
}

int cmd_ingest(const Opts& o) {
  const DemoRecording rec = read_recording(o.rec);
  const RobotModel m = resolve_model(o.model.empty() ? rec.model : o.model);
  emit(o.out, waypoints_to_json(extract_waypoints(rec, m, o.pos_thresh, o.ang_thresh)));
  return kOk;
}

int cmd_timeopt(const Opts& o) {
  const auto wps = waypoints_from_json(io::load_json(o.wps));
  const TimingResult r = solve_timing(wps, resolve_model(o.model));
  emit(o.out, to_json(r));
  if (!r.ok()) throw Infeasible(std::string("timing law did not converge: ") + nlp::to_string(r.solution.status));
  return kOk;
}

int cmd_trajgen(const Opts& o) {
  const auto wps = waypoints_from_json(io::load_json(o.wps));
  const json timing = io::load_json(o.tau);
  const auto tau = io::doubles_from_json(io::require(timing, "tau"));
  const double t_ref = io::require(timing, "total_s").get<double>();
  const auto tol = ToleranceProfile::uniform(wps.size(), Eigen::Vector3d::Constant(o.tol_pos), o.tol_ang);
  const SmoothTrajectory st = generate(wps, tau, t_ref, tol, resolve_model(o.model), trajgen_config(o));
  emit(o.out, to_json(st));
  if (!st.ok())
    throw Infeasible(std::string("no feasible trajectory within the tolerances (solver ") +
                     nlp::to_string(st.solution.status) + ")");
  return kOk;
}

int cmd_refine(const Opts& o) {
  const json traj_doc = io::load_json(o.traj);
  const ReplaySource src = replay_source_from_json(traj_doc);
  const RefineParams p = refine_params(o);
  if (!o.serve.empty() == !o.trace.empty()) throw InvalidArgument("refine needs exactly one of --trace or --serve");
  if (!o.trace.empty()) {
    const auto C = read_command_trace(o.trace, p.filter.dt);
    emit(o.out, to_json(refine(C, src.traj.duration(), src.tau, p)));
    return kOk;
  }
  ReplayServerOptions so;
  const auto colon = o.serve.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--serve expects [host]:port");
  if (colon > 0) so.address = o.serve.substr(0, colon);
  try {
    so.port = static_cast<unsigned short>(std::stoul(o.serve.substr(colon + 1)));
  } catch (const std::exception&) {
    throw InvalidArgument("bad port in --serve '" + o.serve + "'");
  }
  so.defaults = p;
  so.time_scale = o.time_scale;
  so.trace_dir = o.trace_dir;
  RobotModel model = resolve_model(o.model);
  ReplayServer server(std::move(model), so);
  server.start();
  json body = traj_doc;
  body.erase("params");
  const std::string id = server.create_session(body);
  const std::string host = so.address + ":" + std::to_string(server.port());
  std::cerr << json{{"session", id},
                    {"http", "http://" + host + "/sessions/" + id},
                    {"stream", "ws://" + host + "/sessions/" + id + "/stream"}}
                   .dump()
            << std::endl;
  if (o.autostart) server.start_session(id);
  while (!server.wait_done(id, std::chrono::seconds(1))) {
  }
  emit(o.out, to_json(*server.session(id)->result()));
  server.stop();
  return kOk;
}

int cmd_finetune(const Opts& o) {
  const auto wps = waypoints_from_json(io::load_json(o.wps));
  const SmoothTrajectory smoothed = smooth_trajectory_from_json(io::load_json(o.traj));
  const RefinementResult r = refinement_from_json(io::load_json(o.refinement));
  const SmoothTrajectory st = fine_tune(wps, smoothed, r, resolve_model(o.model), trajgen_config(o));
  emit(o.out, to_json(st));
  if (!st.ok()) throw Infeasible(std::string("fine tuning failed (solver ") + nlp::to_string(st.solution.status) + ")");
  return kOk;
}

int cmd_dmp_train(const Opts& o) {
  if (o.traj.empty() == o.rec.empty()) throw InvalidArgument("dmp-train needs exactly one of --traj or --rec");
  const SampledTrajectory demo = o.rec.empty() ? load_sampled(o.traj, o.dt) : sample_recording(read_recording(o.rec));
  emit(o.out, to_json(train_dmp(demo, {o.basis, DmpTrainOptions{}.alpha_z})));
  return kOk;
}

int cmd_dmp_rollout(const Opts& o) {
  const DmpModel m = dmp_from_json(io::load_json(o.dmp));
  const double T = o.duration > 0.0 ? o.duration : m.duration;
  auto pick = [&](const std::vector<double>& v, bool goal) {
    Vector out(m.dof());
    if (v.empty()) {
      for (int j = 0; j < m.dof(); ++j) out[j] = goal ? m.joints[j].g : m.joints[j].y0;
    } else {
      if (static_cast<int>(v.size()) != m.dof()) throw InvalidArgument("start/goal must have one value per joint");
      out = Eigen::Map<const Vector>(v.data(), m.dof());
    }
    return out;
  };
  const SampledTrajectory r = rollout(m, pick(o.start, false), pick(o.goal, true), T, o.dt);
  if (o.out.empty()) throw InvalidArgument("dmp-rollout needs --out <trajectory.csv>");
  write_sampled_trajectory(o.out, r);
  return kOk;
}

int cmd_metrics(const Opts& o) {
  const RobotModel m = resolve_model(o.model);
  std::vector<ReportEntry> entries;
  for (const auto& e : o.entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--entry expects label=path, got '" + e + "'");
    const std::string label = e.substr(0, eq), path = e.substr(eq + 1);
    if (fs::path(path).extension() == ".json")
      entries.push_back({label, load_trajectory(path)});
    else
      entries.push_back({label, read_sampled_trajectory(path)});
  }
  const ComparisonReport r = report(entries, m);
  if (!o.report.empty()) io::write_text(o.report, to_csv(r));
  if (!o.json_report.empty()) io::save_json(o.json_report, to_json(r));
  std::cout << format_table(r);
  return kOk;
}

int cmd_repro(const Opts& o) {
  const SynthSpec spec = synth_spec_from_json(io::load_json(o.spec.empty() ? bundled("data/rt1_demo.json") : o.spec));
  const RobotModel m = resolve_model(o.model.empty() ? spec.model : o.model);
  const fs::path dir = o.out_dir.empty() ? fs::path("rt1_out") : fs::path(o.out_dir);
  fs::create_directories(dir);
  auto log = [](const std::string& s) { std::cerr << "repro-rt1: " << s << std::endl; };

  const DemoRecording rec = synth_demo(spec);
  write_recording((dir / "recording.csv").string(), rec);
  const auto wps = extract_waypoints(rec, m, o.pos_thresh, o.ang_thresh);
  io::save_json((dir / "waypoints.json").string(), waypoints_to_json(wps));
  log(std::to_string(rec.size()) + " samples, " + std::to_string(wps.size()) + " waypoints");

  const TimingResult timing = solve_timing(wps, m);
  io::save_json((dir / "timing.json").string(), to_json(timing));
  if (!timing.ok()) throw Infeasible("timing law did not converge");
  log("timing law " + io::format_double(timing.total()) + " s");

  const auto tol = ToleranceProfile::uniform(wps.size(), Eigen::Vector3d::Constant(o.tol_pos), o.tol_ang);
  const SmoothTrajectory st = generate(wps, timing.tau, timing.total(), tol, m, trajgen_config(o));
  io::save_json((dir / "trajectory.json").string(), to_json(st));
  if (!st.ok()) throw Infeasible("trajectory generation did not produce a clean trajectory");
  const double T_f = st.traj.duration();
  log("smoothed duration " + io::format_double(T_f) + " s");

  const SampledTrajectory raw = sample_recording(rec);
  const DmpModel dmp_raw = train_dmp(raw, {o.basis, DmpTrainOptions{}.alpha_z});
  const DmpModel dmp_smooth = train_dmp(sample_trajectory(st.traj, o.dt), {o.basis, DmpTrainOptions{}.alpha_z});
  io::save_json((dir / "dmp_raw.json").string(), to_json(dmp_raw));
  io::save_json((dir / "dmp_smoothed.json").string(), to_json(dmp_smooth));
  const SampledTrajectory o_dmp = rollout(dmp_raw, raw.duration(), o.dt);
  const SampledTrajectory s_dmp = rollout(dmp_raw, T_f, o.dt);
  const SampledTrajectory f_dmp = rollout(dmp_smooth, T_f, o.dt);
  write_sampled_trajectory((dir / "q_o_dmp.csv").string(), o_dmp);
  write_sampled_trajectory((dir / "q_s_dmp.csv").string(), s_dmp);
  write_sampled_trajectory((dir / "q_f_dmp.csv").string(), f_dmp);

  if (!o.skip_refine) {
    const RefineParams p = refine_params(o);
    const std::string brake = o.brake.empty() ? bundled("data/rt1_brake.csv") : o.brake;
    const RefinementResult r = refine(read_command_trace(brake, p.filter.dt), T_f, st.tau, p);
    io::save_json((dir / "refinement.json").string(), to_json(r));
    const SmoothTrajectory ft = fine_tune(wps, st, r, m, trajgen_config(o));
    io::save_json((dir / "finetuned.json").string(), to_json(ft));
    log("fine-tuned duration " + io::format_double(ft.traj.duration()) + " s (" + nlp::to_string(ft.solution.status) +
        ")");
  }

  const ComparisonReport rep = report({{"q_o", raw}, {"q_f", st.traj}, {"q_o,dmp", o_dmp}, {"q_s,dmp", s_dmp},
                                       {"q_f,dmp", f_dmp}},
                                      m);
  const std::string csv = o.report.empty() ? (dir / "report.csv").string() : o.report;
  io::write_text(csv, to_csv(rep));
  io::save_json((dir / "report.json").string(), to_json(rep));
  std::cout << format_table(rep);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demonstration to trajectory pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "demotraj 0.1.0");
  app.add_option("--config", "JSON file supplying any flag; command line flags win");
  Opts o;

  auto out = [&](CLI::App* s, const char* what) { s->add_option("-o,--out", o.out, what); };
  auto model = [&](CLI::App* s, bool required) {
    auto* opt = s->add_option("--model", o.model, "Robot model file or bundled name (fr3, planar2r)");
    if (required) opt->required();
  };
  auto weights = [&](CLI::App* s) {
    s->add_option("--alpha", o.alpha, "Duration weight")->capture_default_str();
    s->add_option("--beta", o.beta, "Jerk weight")->capture_default_str();
    s->add_option("--gamma", o.gamma, "Control point to waypoint weight")->capture_default_str();
  };
  auto refine_flags = [&](CLI::App* s) {
    s->add_option("--params", o.params, "Refinement parameters JSON");
    s->add_option("--eta", o.eta, "Replay slowdown factor (> 1)");
    s->add_option("--vmin-ratio", o.vmin_ratio, "Minimum replay speed as a fraction of the nominal");
  };
  const auto existing = CLI::ExistingFile;

  auto* synth = app.add_subcommand("synth", "Write a synthetic noisy demonstration recording");
  synth->add_option("--spec", o.spec, "Synthetic demo spec JSON (default: bundled fixture)")->check(existing);
  synth->add_option("--seed", o.seed, "Override the noise seed");
  synth->add_option("--noise", o.noise, "Override the noise standard deviation (rad)");
  out(synth, "Recording CSV; a .json sidecar is written next to it");

  auto* ingest = app.add_subcommand("ingest", "Extract waypoints from a recording");
  ingest->add_option("--rec", o.rec, "Recording CSV")->required()->check(existing);
  model(ingest, false);
  ingest->add_option("--pos-thresh", o.pos_thresh, "Position threshold (m)")->capture_default_str();
  ingest->add_option("--ang-thresh", o.ang_thresh, "Angle threshold (rad)")->capture_default_str();
  out(ingest, "Waypoints JSON (default: stdout)");

  auto* timeopt = app.add_subcommand("timeopt", "Solve the minimum-time timing law");
  timeopt->add_option("--wps", o.wps, "Waypoints JSON")->required()->check(existing);
  model(timeopt, true);
  out(timeopt, "Timing JSON (default: stdout)");

  auto* trajgen = app.add_subcommand("trajgen", "Generate the smooth, time-optimal trajectory");
  trajgen->add_option("--wps", o.wps, "Waypoints JSON")->required()->check(existing);
  trajgen->add_option("--tau", o.tau, "Timing JSON from timeopt")->required()->check(existing);
  model(trajgen, true);
  trajgen->add_option("--tol-pos", o.tol_pos, "Position tolerance per axis (m)")->capture_default_str();
  trajgen->add_option("--tol-ang", o.tol_ang, "Orientation tolerance (rad)")->capture_default_str();
  weights(trajgen);
  out(trajgen, "Trajectory JSON (default: stdout)");

  auto* refine_cmd = app.add_subcommand("refine", "Refine timings and tolerances from a brake command");
  refine_cmd->add_option("--traj", o.traj, "Trajectory JSON from trajgen")->required()->check(existing);
  refine_cmd->add_option("--trace", o.trace, "Command trace CSV (t,C) for an offline run")->check(existing);
  refine_cmd->add_option("--serve", o.serve, "Host an interactive session at [host]:port");
  model(refine_cmd, false);
  refine_cmd->add_flag("--autostart", o.autostart, "Start the served session without waiting for a client");
  refine_cmd->add_option("--time-scale", o.time_scale, "Wall seconds per replay second when serving")
      ->capture_default_str();
  refine_cmd->add_option("--trace-dir", o.trace_dir, "Directory for the served session's trace and result");
  refine_flags(refine_cmd);
  out(refine_cmd, "Refinement JSON (default: stdout)");

  auto* finetune = app.add_subcommand("finetune", "Re-run trajectory generation with refined timings and tolerances");
  finetune->add_option("--wps", o.wps, "Waypoints JSON")->required()->check(existing);
  finetune->add_option("--traj", o.traj, "Smoothed trajectory JSON (warm start)")->required()->check(existing);
  finetune->add_option("--refinement", o.refinement, "Refinement JSON")->required()->check(existing);
  model(finetune, true);
  weights(finetune);
  out(finetune, "Trajectory JSON (default: stdout)");

  auto* dmp_train = app.add_subcommand("dmp-train", "Train a DMP on a trajectory or recording");
  dmp_train->add_option("--traj", o.traj, "Trajectory JSON or sampled trajectory CSV")->check(existing);
  dmp_train->add_option("--rec", o.rec, "Recording CSV")->check(existing);
  dmp_train->add_option("--basis", o.basis, "Kernels per joint")->capture_default_str();
  dmp_train->add_option("--dt", o.dt, "Sampling step for trajectory JSON input (s)")->capture_default_str();
  out(dmp_train, "DMP JSON (default: stdout)");

  auto* dmp_rollout = app.add_subcommand("dmp-rollout", "Integrate a trained DMP");
  dmp_rollout->add_option("--dmp", o.dmp, "DMP JSON")->required()->check(existing);
  dmp_rollout->add_option("--duration", o.duration, "Rollout duration (s); default: trained duration");
  dmp_rollout->add_option("--dt", o.dt, "Integration step (s)")->capture_default_str();
  dmp_rollout->add_option("--start", o.start, "Start configuration (one value per joint)");
  dmp_rollout->add_option("--goal", o.goal, "Goal configuration (one value per joint)");
  out(dmp_rollout, "Sampled trajectory CSV");

  auto* metrics = app.add_subcommand("metrics", "Duration, MANJ and limit violations per trajectory");
  model(metrics, true);
  metrics->add_option("--entry", o.entries, "label=path (trajectory JSON, sampled CSV or recording CSV)")->required();
  metrics->add_option("--report", o.report, "Comparison CSV");
  metrics->add_option("--json", o.json_report, "Comparison JSON");

  auto* repro = app.add_subcommand("repro-rt1", "Run the bundled fixture end to end and print the comparison table");
  repro->add_option("--spec", o.spec, "Synthetic demo spec JSON (default: bundled fixture)")->check(existing);
  model(repro, false);
  repro->add_option("--out-dir", o.out_dir, "Artifact directory")->capture_default_str();
  repro->add_option("--report", o.report, "Comparison CSV (default: <out-dir>/report.csv)");
  repro->add_option("--brake", o.brake, "Command trace for the refinement and fine tuning stages (default: bundled)")
      ->check(existing);
  repro->add_flag("--skip-refine", o.skip_refine, "Stop after the DMP baselines");
  repro->add_option("--pos-thresh", o.pos_thresh, "Position threshold (m)")->capture_default_str();
  repro->add_option("--ang-thresh", o.ang_thresh, "Angle threshold (rad)")->capture_default_str();
  repro->add_option("--tol-pos", o.tol_pos, "Position tolerance per axis (m)")->capture_default_str();
  repro->add_option("--tol-ang", o.tol_ang, "Orientation tolerance (rad)")->capture_default_str();
  repro->add_option("--basis", o.basis, "DMP kernels per joint")->capture_default_str();
  repro->add_option("--dt", o.dt, "Sampling step (s)")->capture_default_str();
  weights(repro);
  refine_flags(repro);

  try {
    std::vector<std::string> args = apply_config(app, std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      fail_json("invalid_input", e.what());
      return kInvalid;
    }
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "synth") return cmd_synth(o);
    if (name == "ingest") return cmd_ingest(o);
    if (name == "timeopt") return cmd_timeopt(o);
    if (name == "trajgen") return cmd_trajgen(o);
    if (name == "refine") return cmd_refine(o);
    if (name == "finetune") return cmd_finetune(o);
    if (name == "dmp-train") return cmd_dmp_train(o);
    if (name == "dmp-rollout") return cmd_dmp_rollout(o);
    if (name == "metrics") return cmd_metrics(o);
    if (name == "repro-rt1") return cmd_repro(o);
    fail_json("internal", "unhandled subcommand " + name);
    return kInternal;
  } catch (const Infeasible& e) {
    fail_json("infeasible", e.what());
    return kInfeasible;
  } catch (const InvalidArgument& e) {
    fail_json("invalid_input", e.what());
    return kInvalid;
  } catch (const DomainError& e) {
    fail_json("invalid_input", e.what());
    return kInvalid;
  } catch (const IncompleteReplay& e) {
    fail_json("invalid_input", e.what());
    return kInvalid;
  } catch (const json::exception& e) {
    fail_json("invalid_input", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    fail_json("internal", e.what());
    return kInternal;
  }
}
