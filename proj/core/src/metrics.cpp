#include "demotraj/metrics.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"
#include "demotraj/trajgen.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace demotraj {

double manj(const TimedTrajectory& traj, int grid_n) {
  const BSplineCurve& c = traj.curve();
  if (c.order() == 4) return normalized_max_jerk(c);
  if (grid_n < 1) throw InvalidArgument("MANJ grid needs at least one interval");
  if (c.order() < 4) return 0.0;
  double m = 0.0;
  for (int i = 0; i <= grid_n; ++i)
    m = std::max(m, c.derivative(static_cast<double>(i) / grid_n, 3).cwiseAbs().maxCoeff());
  return m;
}

double manj(const SampledTrajectory& traj) {
  if (traj.size() < 4) throw InvalidArgument("MANJ needs at least 4 samples");
  const double t3 = std::pow(traj.duration(), 3);
  double m = 0.0;
  for (const auto& j : traj.dddq) m = std::max(m, j.cwiseAbs().maxCoeff());
  return m * t3;
}

SampledTrajectory sample_trajectory(const TimedTrajectory& traj, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  const double T = traj.duration();
  const long steps = std::max(3L, static_cast<long>(std::ceil(T / dt - 1e-9)));
  SampledTrajectory out;
  const BSplineCurve& c = traj.curve();
  for (long k = 0; k <= steps; ++k) {
    const double s = static_cast<double>(k) / static_cast<double>(steps);
    out.t.push_back(s * T);
    out.q.push_back(c.eval(s));
    out.dq.push_back(c.derivative(s, 1) / T);
    out.ddq.push_back(c.derivative(s, 2) / (T * T));
    out.dddq.push_back(c.order() > 3 ? Vector(c.derivative(s, 3) / (T * T * T)) : Vector::Zero(c.dim()));
  }
  out.t.back() = T;
  return out;
}

std::vector<ViolationInterval> violations(const SampledTrajectory& traj, const RobotModel& model) {
  std::vector<ViolationInterval> done;
  // Open interval per (joint, band), closed when a sample no longer violates.
  std::map<std::pair<int, int>, ViolationInterval> open;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::map<std::pair<int, int>, double> now;
    for (const auto& v : check_limits(model, traj.q[k], traj.dq[k], traj.ddq[k], traj.dddq[k]))
      now[{v.joint, static_cast<int>(v.band)}] = v.amount;
    for (auto it = open.begin(); it != open.end();) {
      if (!now.count(it->first)) {
        done.push_back(it->second);
        it = open.erase(it);
      } else {
        ++it;
      }
    }
    for (const auto& [key, amount] : now) {
      auto it = open.find(key);
      if (it == open.end()) {
        open[key] = {key.first, static_cast<LimitBand>(key.second), traj.t[k], traj.t[k], amount};
      } else {
        it->second.t_end = traj.t[k];
        it->second.max_amount = std::max(it->second.max_amount, amount);
      }
    }
  }
  for (auto& [key, v] : open) done.push_back(v);
  std::stable_sort(done.begin(), done.end(), [](const ViolationInterval& a, const ViolationInterval& b) {
    if (a.t_begin != b.t_begin) return a.t_begin < b.t_begin;
    if (a.joint != b.joint) return a.joint < b.joint;
    return a.band < b.band;
  });
  return done;
}

std::vector<ViolationInterval> violations(const TimedTrajectory& traj, const RobotModel& model, double dt) {
  return violations(sample_trajectory(traj, dt), model);
}

ComparisonReport report(const std::vector<ReportEntry>& entries, const RobotModel& model) {
  if (entries.empty()) throw InvalidArgument("report needs at least one entry");
  ComparisonReport r;
  for (const auto& e : entries) {
    ComparisonRow row;
    row.label = e.label;
    if (const auto* t = std::get_if<TimedTrajectory>(&e.traj)) {
      row.time_s = t->duration();
      row.manj = manj(*t);
      row.violations = static_cast<int>(violations(*t, model).size());
    } else {
      const auto& s = std::get<SampledTrajectory>(e.traj);
      row.time_s = s.duration();
      row.manj = manj(s);
      row.violations = static_cast<int>(violations(s, model).size());
    }
    r.rows.push_back(std::move(row));
  }
  return r;
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_quoted(const std::string& line) {
  std::vector<std::string> out(1);
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace

std::string to_csv(const ComparisonReport& r) {
  std::ostringstream out;
  out << "label,time_s,manj,violations\n";
  for (const auto& row : r.rows)
    out << quote(row.label) << ',' << io::format_double(row.time_s) << ',' << io::format_double(row.manj) << ','
        << row.violations << '\n';
  return out.str();
}

ComparisonReport report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_quoted(line) != std::vector<std::string>{"label", "time_s", "manj", "violations"})
    throw InvalidArgument("report CSV header must be label,time_s,manj,violations");
  ComparisonReport r;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_quoted(line);
    if (f.size() != 4) throw InvalidArgument("report CSV row needs 4 fields");
    try {
      r.rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stoi(f[3])});
    } catch (const std::exception&) {
      throw InvalidArgument("bad number in report CSV row '" + line + "'");
    }
  }
  return r;
}

nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"label", row.label}, {"time_s", row.time_s}, {"manj", row.manj}, {"violations", row.violations}});
  return {{"version", r.version}, {"rows", rows}};
}

ComparisonReport report_from_json(const nlohmann::json& j) {
  try {
    ComparisonReport r;
    r.version = io::require(j, "version").get<int>();
    for (const auto& row : io::require(j, "rows"))
      r.rows.push_back({row.at("label").get<std::string>(), row.at("time_s").get<double>(),
                        row.at("manj").get<double>(), row.at("violations").get<int>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed report: ") + e.what());
  }
}

std::string format_table(const ComparisonReport& r) {
  std::size_t w = 5;
  for (const auto& row : r.rows) w = std::max(w, row.label.size());
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-*s %10s %12s %10s\n", static_cast<int>(w), "label", "time_s", "manj", "violations");
  out << buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %10.3f %12.2f %10d\n", static_cast<int>(w), row.label.c_str(), row.time_s,
                  row.manj, row.violations);
    out << buf;
  }
  return out.str();
}

}  // namespace demotraj
