#include "demotraj/ingest.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <random>

namespace demotraj {

void DemoRecording::validate() const {
  if (t.size() < 2) throw InvalidArgument("recording needs at least 2 samples");
  if (t.size() != q.size()) throw InvalidArgument("recording timestamps and samples differ in count");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw InvalidArgument("recording timestamps must strictly increase");
    if (q[i].size() != q[0].size()) throw InvalidArgument("recording samples differ in joint count");
  }
}

Waypoint make_waypoint(const RobotModel& model, const Vector& q, int index) {
  const Pose pose = fk(model, q);
  return Waypoint{index, q, pose.p, pose.theta};
}

std::vector<Waypoint> extract_waypoints(const DemoRecording& rec, const RobotModel& model, double pos_thresh,
                                        double ang_thresh) {
  if (rec.t.empty() || rec.q.empty()) throw InvalidArgument("cannot extract waypoints from an empty recording");
  if (!(pos_thresh > 0.0) || !(ang_thresh > 0.0)) throw InvalidArgument("waypoint thresholds must be positive");
  std::vector<Waypoint> out;
  out.push_back(make_waypoint(model, rec.q.front(), 0));
  const int n = static_cast<int>(rec.q.size());
  for (int i = 1; i < n; ++i) {
    const Pose pose = fk(model, rec.q[static_cast<std::size_t>(i)]);
    const Waypoint& last = out.back();
    if ((pose.p - last.p).norm() >= pos_thresh || quat_diff(pose.theta, last.theta) >= ang_thresh) {
      out.push_back(Waypoint{i, rec.q[static_cast<std::size_t>(i)], pose.p, pose.theta});
    }
  }
  if (out.back().index != n - 1 && rec.q.back() != out.back().q) {
    out.push_back(make_waypoint(model, rec.q.back(), n - 1));
  }
  return out;
}

namespace {

std::vector<Vector> gradient(const std::vector<double>& t, const std::vector<Vector>& f) {
  const std::size_t n = t.size();
  std::vector<Vector> d(n);
  d[0] = (f[1] - f[0]) / (t[1] - t[0]);
  d[n - 1] = (f[n - 1] - f[n - 2]) / (t[n - 1] - t[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hl = t[i] - t[i - 1];
    const double hr = t[i + 1] - t[i];
    d[i] = (hl * hl * f[i + 1] - hr * hr * f[i - 1] + (hr * hr - hl * hl) * f[i]) / (hl * hr * (hl + hr));
  }
  return d;
}

}  // namespace

SampledDerivatives differentiate_noncausal(const std::vector<double>& t, const std::vector<Vector>& q) {
  if (t.size() < 4 || q.size() != t.size())
    throw InvalidArgument("non-causal differentiation needs at least 4 samples");
  SampledDerivatives out;
  out.dq = gradient(t, q);
  out.ddq = gradient(t, out.dq);
  out.dddq = gradient(t, out.ddq);
  return out;
}

SampledTrajectory sample_recording(const DemoRecording& rec) {
  rec.validate();
  SampledDerivatives d = differentiate_noncausal(rec.t, rec.q);
  return SampledTrajectory{rec.t, rec.q, std::move(d.dq), std::move(d.ddq), std::move(d.dddq)};
}

namespace {

double min_jerk_phase(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

/// Second derivatives of a natural cubic spline through ys at uniform u in [0,1].
Eigen::MatrixXd natural_moments(const std::vector<Vector>& ys) {
  const int k = static_cast<int>(ys.size());
  const int dim = static_cast<int>(ys.front().size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k, dim);
  if (k < 3) return m;
  const double h = 1.0 / (k - 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k - 2, k - 2);
  Eigen::MatrixXd rhs(k - 2, dim);
  for (int i = 1; i < k - 1; ++i) {
    const int r = i - 1;
    a(r, r) = 4.0 * h;
    if (r > 0) a(r, r - 1) = h;
    if (r < k - 3) a(r, r + 1) = h;
    rhs.row(r) = (6.0 / h * (ys[static_cast<std::size_t>(i + 1)] - 2.0 * ys[static_cast<std::size_t>(i)] +
                             ys[static_cast<std::size_t>(i - 1)]))
                     .transpose();
  }
  m.middleRows(1, k - 2) = a.partialPivLu().solve(rhs);
  return m;
}

}  // namespace

Vector synth_path(const SynthSpec& spec, double t) {
  if (spec.skeleton.size() < 2) throw InvalidArgument("synthetic skeleton needs at least 2 configurations");
  const int k = static_cast<int>(spec.skeleton.size());
  const double u = min_jerk_phase(t / spec.duration);
  const Eigen::MatrixXd m = natural_moments(spec.skeleton);
  const double h = 1.0 / (k - 1);
  const int seg = std::min(k - 2, static_cast<int>(std::floor(u / h)));
  const double a = (seg + 1) * h - u;
  const double b = u - seg * h;
  const Vector& y0 = spec.skeleton[static_cast<std::size_t>(seg)];
  const Vector& y1 = spec.skeleton[static_cast<std::size_t>(seg + 1)];
  const Vector m0 = m.row(seg).transpose();
  const Vector m1 = m.row(seg + 1).transpose();
  return (m0 * a * a * a + m1 * b * b * b) / (6.0 * h) + (y0 / h - m0 * h / 6.0) * a + (y1 / h - m1 * h / 6.0) * b;
}

DemoRecording synth_demo(const SynthSpec& spec) {
  if (!(spec.duration > 0.0) || !(spec.rate_hz > 0.0))
    throw InvalidArgument("synthetic demo needs positive duration and rate");
  if (spec.skeleton.size() < 2) throw InvalidArgument("synthetic skeleton needs at least 2 configurations");
  DemoRecording rec;
  rec.rate_hz = spec.rate_hz;
  rec.model = spec.model;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.rate_hz)) + 1;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < std::max<std::size_t>(n, 2); ++i) {
    const double t = std::min(spec.duration, static_cast<double>(i) / spec.rate_hz);
    if (!rec.t.empty() && !(t > rec.t.back())) break;
    Vector q = synth_path(spec, t);
    if (spec.noise_std > 0.0) {
      for (int j = 0; j < q.size(); ++j) q[j] += spec.noise_std * noise(rng);
    }
    rec.t.push_back(t);
    rec.q.push_back(std::move(q));
  }
  rec.validate();
  return rec;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  for (const auto& q : io::require(j, "skeleton")) s.skeleton.push_back(io::vector_from_json(q));
  s.duration = j.value("duration_s", 10.0);
  s.noise_std = j.value("noise_std", 0.0);
  s.rate_hz = j.value("rate_hz", 10.0);
  s.seed = j.value("seed", std::uint64_t{0});
  s.model = j.value("model", "");
  return s;
}

nlohmann::json to_json(const SynthSpec& spec) {
  nlohmann::json j;
  for (const auto& q : spec.skeleton) j["skeleton"].push_back(io::to_json(q));
  j["duration_s"] = spec.duration;
  j["noise_std"] = spec.noise_std;
  j["rate_hz"] = spec.rate_hz;
  j["seed"] = spec.seed;
  j["model"] = spec.model;
  return j;
}

std::string sidecar_path(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension(".json");
  return p.string();
}

void write_recording(const std::string& csv_path, const DemoRecording& rec) {
  rec.validate();
  io::CsvTable table;
  table.header.push_back("t");
  for (int j = 0; j < rec.q.front().size(); ++j) table.header.push_back("q" + std::to_string(j + 1));
  for (std::size_t i = 0; i < rec.t.size(); ++i) {
    std::vector<double> row{rec.t[i]};
    row.insert(row.end(), rec.q[i].data(), rec.q[i].data() + rec.q[i].size());
    table.rows.push_back(std::move(row));
  }
  io::write_csv(csv_path, table);
  io::save_json(sidecar_path(csv_path), {{"rate_hz", rec.rate_hz}, {"model", rec.model}});
}

DemoRecording read_recording(const std::string& csv_path) {
  const io::CsvTable table = io::read_csv(csv_path);
  if (table.header.empty()) throw InvalidArgument("recording CSV is empty");
  if (table.header.size() < 2 || table.header[0] != "t") throw InvalidArgument("recording CSV header must be t,q1,...,qn");
  DemoRecording rec;
  for (const auto& row : table.rows) {
    rec.t.push_back(row[0]);
    rec.q.push_back(Eigen::Map<const Vector>(row.data() + 1, static_cast<Eigen::Index>(row.size() - 1)));
  }
  const std::string side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    const auto j = io::load_json(side);
    rec.rate_hz = j.value("rate_hz", 10.0);
    rec.model = j.value("model", "");
  } else if (rec.t.size() >= 2) {
    rec.rate_hz = (rec.t.size() - 1) / (rec.t.back() - rec.t.front());
  }
  rec.validate();
  return rec;
}

void write_sampled_trajectory(const std::string& csv_path, const SampledTrajectory& s) {
  if (s.t.empty()) throw InvalidArgument("sampled trajectory is empty");
  if (s.q.size() != s.size() || s.dq.size() != s.size() || s.ddq.size() != s.size() || s.dddq.size() != s.size())
    throw InvalidArgument("sampled trajectory columns differ in length");
  const auto n = s.q.front().size();
  io::CsvTable table{{"t"}, {}};
  for (const char* prefix : {"q", "dq", "ddq", "dddq"})
    for (Eigen::Index j = 0; j < n; ++j) table.header.push_back(prefix + std::to_string(j + 1));
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::vector<double> row{s.t[k]};
    for (const Vector* v : {&s.q[k], &s.dq[k], &s.ddq[k], &s.dddq[k]}) {
      if (v->size() != n) throw InvalidArgument("sampled trajectory rows differ in width");
      row.insert(row.end(), v->data(), v->data() + n);
    }
    table.rows.push_back(std::move(row));
  }
  io::write_csv(csv_path, table);
}

SampledTrajectory read_sampled_trajectory(const std::string& csv_path) {
  const io::CsvTable table = io::read_csv(csv_path);
  if (table.header.size() < 2 || table.header[0] != "t") throw InvalidArgument("trajectory CSV header must start with t");
  const std::size_t cols = table.header.size() - 1;
  const bool full = cols % 4 == 0 && table.header[1 + cols / 4] == "dq1";
  const auto n = static_cast<Eigen::Index>(full ? cols / 4 : cols);
  SampledTrajectory s;
  for (const auto& row : table.rows) {
    s.t.push_back(row[0]);
    s.q.push_back(Eigen::Map<const Vector>(row.data() + 1, n));
    if (full) {
      s.dq.push_back(Eigen::Map<const Vector>(row.data() + 1 + n, n));
      s.ddq.push_back(Eigen::Map<const Vector>(row.data() + 1 + 2 * n, n));
      s.dddq.push_back(Eigen::Map<const Vector>(row.data() + 1 + 3 * n, n));
    }
  }
  for (std::size_t k = 1; k < s.t.size(); ++k)
    if (!(s.t[k] > s.t[k - 1])) throw InvalidArgument("trajectory CSV times must increase");
  if (!full) {
    SampledDerivatives d = differentiate_noncausal(s.t, s.q);
    s.dq = std::move(d.dq);
    s.ddq = std::move(d.ddq);
    s.dddq = std::move(d.dddq);
  }
  return s;
}

nlohmann::json waypoints_to_json(const std::vector<Waypoint>& wps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& w : wps) {
    arr.push_back({{"index", w.index},
                   {"q", io::to_json(w.q)},
                   {"p", {w.p.x(), w.p.y(), w.p.z()}},
                   {"theta_wxyz", {w.theta.w(), w.theta.x(), w.theta.y(), w.theta.z()}}});
  }
  return {{"waypoints", arr}};
}

std::vector<Waypoint> waypoints_from_json(const nlohmann::json& j) {
  std::vector<Waypoint> out;
  for (const auto& jw : io::require(j, "waypoints")) {
    Waypoint w;
    w.index = jw.value("index", static_cast<int>(out.size()));
    w.q = io::vector_from_json(io::require(jw, "q"));
    const auto p = io::doubles_from_json(io::require(jw, "p"));
    const auto th = io::doubles_from_json(io::require(jw, "theta_wxyz"));
    if (p.size() != 3 || th.size() != 4) throw InvalidArgument("waypoint pose has wrong shape");
    w.p = Eigen::Vector3d(p[0], p[1], p[2]);
    w.theta = canonical(Eigen::Quaterniond(th[0], th[1], th[2], th[3]));
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace demotraj
