#include "demotraj/refine.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace demotraj {

void CommandFilterParams::validate() const {
  if (!(tau_f > 0.0 && K > 0.0 && D > 0.0 && dt > 0.0))
    throw InvalidArgument("command filter parameters must all be positive");
}

void ToleranceMapParams::validate() const {
  if (!(eps_p_max > eps_p_min && eps_p_min > 0.0)) throw InvalidArgument("need eps_p_max > eps_p_min > 0");
  if (!(eps_theta_max > eps_theta_min && eps_theta_min > 0.0))
    throw InvalidArgument("need eps_theta_max > eps_theta_min > 0");
  if (!(exponent > 0.0)) throw InvalidArgument("tolerance exponent must be positive");
}

namespace {

// Written as a blend so R = 0 and R = -1 give the bounds exactly.
double gamma_map(double lo, double hi, double e, double R) {
  const double w = std::pow(std::clamp(-R, 0.0, 1.0), e);
  return (1.0 - w) * hi + w * lo;
}

}  // namespace

double ToleranceMapParams::position(double R) const { return gamma_map(eps_p_min, eps_p_max, exponent, R); }
double ToleranceMapParams::angle(double R) const { return gamma_map(eps_theta_min, eps_theta_max, exponent, R); }

void RefineParams::validate() const {
  if (!(eta > 1.0)) throw InvalidArgument("eta must be greater than 1");
  if (!(vmin_ratio > 0.0 && vmin_ratio <= 1.0)) throw InvalidArgument("vmin_ratio must lie in (0, 1]");
  filter.validate();
  tolerance.validate();
}

CommandFilter::CommandFilter(const CommandFilterParams& p) {
  p.validate();
  // x = (R, R'), x' = A x + B C; exp of the augmented matrix gives Phi and Gamma.
  Eigen::Matrix3d aug = Eigen::Matrix3d::Zero();
  aug(0, 1) = 1.0;
  aug(1, 0) = -p.K / p.tau_f;
  aug(1, 1) = -p.D / p.tau_f;
  aug(1, 2) = p.K / p.tau_f;
  const Eigen::Matrix3d e = (aug * p.dt).exp();
  phi_ = e.topLeftCorner<2, 2>();
  gamma_ = e.topRightCorner<2, 1>();
}

double CommandFilter::step(double C) {
  x_ = phi_ * x_ + gamma_ * C;
  overshoot_ = std::max({overshoot_, x_[0], -1.0 - x_[0]});
  return output();
}

double CommandFilter::output() const { return std::clamp(x_[0], -1.0, 0.0); }

std::vector<double> filter_command(const std::vector<double>& C, const CommandFilterParams& p) {
  CommandFilter f(p);
  std::vector<double> R{0.0};
  for (double c : C) R.push_back(f.step(c));
  return R;
}

namespace {

/// Advances (v, s) by at most dt with R held and v >= vmin. Returns the time
/// actually used, which is below dt only when s reached 1.
double advance_map(double& v, double& s, double R, double dt, double vmin) {
  double used = 0.0;
  if (R < 0.0 && v > vmin) {
    const double t_clamp = (v - vmin) / -R;
    const double len = std::min(dt, t_clamp);
    const double s_end = s + v * len + 0.5 * R * len * len;
    if (s_end >= 1.0) {
      const double rem = 1.0 - s;
      const double hit = 2.0 * rem / (v + std::sqrt(std::max(0.0, v * v + 2.0 * R * rem)));
      v += R * hit;
      s = 1.0;
      return hit;
    }
    s = s_end;
    v = len == t_clamp ? vmin : std::max(vmin, v + R * len);
    used = len;
  }
  const double rest = dt - used;
  if (rest <= 0.0) return dt;
  if (s + v * rest >= 1.0) {
    const double hit = (1.0 - s) / v;
    s = 1.0;
    return used + hit;
  }
  s += v * rest;
  return dt;
}

long max_ticks(double Vminr, double dt) { return static_cast<long>(std::ceil(1.0 / (Vminr * dt))) + 2; }

}  // namespace

TimeMap::TimeMap(double V0r, double Vminr, double dt) : V0r_(V0r), Vminr_(Vminr), dt_(dt), v_(V0r) {
  if (!(Vminr > 0.0 && Vminr <= V0r)) throw InvalidArgument("need 0 < Vminr <= V0r");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
}

void TimeMap::step(double R) {
  if (done_) return;
  if (R < 0.0) braked_ = true;
  const double start = static_cast<double>(tick_) * dt_;
  ++tick_;
  if (!braked_) {
    t_ = static_cast<double>(tick_) * dt_;
    s_ = t_ * V0r_;
    if (s_ >= 1.0) {
      t_ = 1.0 / V0r_;
      s_ = 1.0;
      done_ = true;
    }
    return;
  }
  const double used = advance_map(v_, s_, R, dt_, Vminr_);
  if (s_ >= 1.0) {
    t_ = start + used;
    done_ = true;
  } else {
    t_ = static_cast<double>(tick_) * dt_;
  }
}

namespace {

RefinementTrace make_trace(double t_f, const RefineParams& p) {
  p.validate();
  if (!(t_f > 0.0)) throw InvalidArgument("trajectory duration must be positive");
  RefinementTrace tr;
  tr.V0r = 1.0 / (p.eta * t_f);
  tr.Vminr = p.vmin_ratio * tr.V0r;
  tr.eta = p.eta;
  tr.dt = p.filter.dt;
  return tr;
}

}  // namespace

Refiner::Refiner(double t_f, const RefineParams& p)
    : filter_(p.filter), trace_(make_trace(t_f, p)), map_(trace_.V0r, trace_.Vminr, trace_.dt) {
  cur_.v = trace_.V0r;
}

void Refiner::step(double C) {
  if (map_.done()) throw InvalidArgument("refinement already finished");
  cur_.C = std::clamp(C, -1.0, 0.0);
  trace_.samples.push_back(cur_);
  const double R_held = cur_.R;
  const double R_next = filter_.step(cur_.C);
  map_.step(R_held);
  cur_.t = map_.t();
  cur_.v = map_.v();
  cur_.s_r = map_.s();
  // The final sample sits inside the last tick; keep the held R there.
  cur_.R = map_.done() ? R_held : R_next;
  if (map_.done()) trace_.samples.push_back(cur_);
}

RefinementTrace integrate_time_map(const std::vector<double>& R, double V0r, double Vminr, double dt) {
  TimeMap map(V0r, Vminr, dt);
  RefinementTrace tr;
  tr.V0r = V0r;
  tr.Vminr = Vminr;
  tr.dt = dt;
  const long limit = max_ticks(Vminr, dt);
  for (long k = 0; !map.done() && k < limit; ++k) {
    const double r = static_cast<std::size_t>(k) < R.size() ? std::clamp(R[static_cast<std::size_t>(k)], -1.0, 0.0) : 0.0;
    tr.samples.push_back({map.t(), 0.0, r, map.v(), map.s()});
    map.step(r);
  }
  tr.samples.push_back({map.t(), 0.0, tr.samples.back().R, map.v(), map.s()});
  return tr;
}

void check_timings(const std::vector<double>& tau) {
  if (tau.size() < 2) throw InvalidArgument("need at least two timings");
  if (tau.front() != 0.0 || tau.back() != 1.0) throw InvalidArgument("tau must start at 0 and end at 1");
  for (std::size_t i = 1; i < tau.size(); ++i)
    if (!(tau[i] > tau[i - 1])) throw InvalidArgument("tau must be strictly increasing");
}

namespace {

/// Replay time at which s_r first reaches `target` (linear inside a sample interval).
double invert(const RefinementTrace& tr, std::size_t prefix_end, double target) {
  const auto& sm = tr.samples;
  if (target <= sm[prefix_end].s_r) return target / tr.V0r;
  auto it = std::lower_bound(sm.begin() + static_cast<long>(prefix_end), sm.end(), target,
                             [](const RefineSample& a, double v) { return a.s_r < v; });
  if (it == sm.end()) throw IncompleteReplay("time map never reaches s_r = " + io::format_double(target));
  const auto& b = *it;
  const auto& a = *(it - 1);
  if (b.s_r == a.s_r) return a.t;
  return a.t + (target - a.s_r) * (b.t - a.t) / (b.s_r - a.s_r);
}

/// Last sample before any braking; up to there s_r = V0r t exactly.
std::size_t unbraked_prefix(const RefinementTrace& tr) {
  std::size_t j = 0;
  while (j + 1 < tr.samples.size() && tr.samples[j + 1].v == tr.V0r && tr.samples[j].R == 0.0) ++j;
  return j;
}

double sample_R(const RefinementTrace& tr, double t) {
  const auto& sm = tr.samples;
  auto it = std::lower_bound(sm.begin(), sm.end(), t, [](const RefineSample& a, double v) { return a.t < v; });
  if (it == sm.begin()) return sm.front().R;
  if (it == sm.end()) return sm.back().R;
  const auto& b = *it;
  const auto& a = *(it - 1);
  if (b.t == a.t) return b.R;
  return a.R + (t - a.t) * (b.R - a.R) / (b.t - a.t);
}

void check_trace(const RefinementTrace& tr) {
  if (tr.samples.empty()) throw IncompleteReplay("empty refinement trace");
  if (!(tr.V0r > 0.0)) throw InvalidArgument("trace has no replay speed");
  if (!tr.complete()) throw IncompleteReplay("time map never reaches s_r = 1");
}

}  // namespace

std::vector<double> remap_timings(const RefinementTrace& trace, const std::vector<double>& tau) {
  check_timings(tau);
  check_trace(trace);
  const std::size_t prefix = unbraked_prefix(trace);
  const bool unbraked = prefix + 1 == trace.samples.size();
  // Work in nominal progress u = V0r t so the unbraked part maps to itself.
  auto progress = [&](double target) {
    if (target <= trace.samples[prefix].s_r) return target;
    return invert(trace, prefix, target) * trace.V0r;
  };
  const double u_end = unbraked ? 1.0 : progress(1.0);
  std::vector<double> out(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) out[i] = progress(tau[i]) / u_end;
  out.front() = 0.0;
  out.back() = 1.0;
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i] > out[i - 1])) out[i] = std::nextafter(out[i - 1], 2.0);
  return out;
}

ToleranceProfile extract_tolerances(const RefinementTrace& trace, const std::vector<double>& tau,
                                    const ToleranceMapParams& p) {
  p.validate();
  check_timings(tau);
  check_trace(trace);
  const std::size_t prefix = unbraked_prefix(trace);
  ToleranceProfile tol;
  for (double ti : tau) {
    const double R = sample_R(trace, invert(trace, prefix, ti));
    tol.eps_p.push_back(Eigen::Vector3d::Constant(p.position(R)));
    tol.eps_theta.push_back(p.angle(R));
  }
  return tol;
}

RefinementResult finalize(const RefinementTrace& trace, double t_f, const std::vector<double>& tau,
                          const ToleranceMapParams& p) {
  RefinementResult r;
  r.tau_r = remap_timings(trace, tau);
  r.tolerances = extract_tolerances(trace, tau, p);
  r.trace = trace;
  r.source_duration = t_f;
  return r;
}

RefinementResult refine(const std::vector<double>& C, double t_f, const std::vector<double>& tau,
                        const RefineParams& p) {
  check_timings(tau);
  Refiner rf(t_f, p);
  const long limit = max_ticks(rf.trace().Vminr, p.filter.dt);
  for (long k = 0; !rf.done(); ++k) {
    if (k > limit) throw IncompleteReplay("time map did not finish");
    rf.step(static_cast<std::size_t>(k) < C.size() ? C[static_cast<std::size_t>(k)] : 0.0);
  }
  return finalize(rf.trace(), t_f, tau, p.tolerance);
}

SmoothTrajectory fine_tune(const std::vector<Waypoint>& wps, const SmoothTrajectory& smoothed,
                           const RefinementResult& refinement, const RobotModel& model, const TrajGenConfig& cfg) {
  if (refinement.tau_r.size() != wps.size()) throw InvalidArgument("refinement does not match the waypoints");
  return generate(wps, refinement.tau_r, smoothed.traj.duration(), refinement.tolerances, model, cfg,
                  smoothed.solution);
}

std::vector<double> read_command_trace(const std::string& path, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  const io::CsvTable table = io::read_csv(path);
  if (table.header.empty() && table.rows.empty()) return {};
  // A full session trace (t,C,R,v,s_r) is accepted too; only t and C are read.
  const bool plain = table.header == std::vector<std::string>{"t", "C"};
  if (!plain && table.header != std::vector<std::string>{"t", "C", "R", "v", "s_r"})
    throw InvalidArgument("command trace header must be t,C or t,C,R,v,s_r");
  if (table.rows.empty()) return {};
  for (std::size_t i = 1; i < table.rows.size(); ++i)
    if (!(table.rows[i][0] > table.rows[i - 1][0])) throw InvalidArgument("command trace times must increase");
  // Sample-and-hold onto the tick grid; before the first row the command is 0.
  const long ticks = static_cast<long>(std::floor(table.rows.back()[0] / dt + 1e-9)) + 1;
  std::vector<double> C;
  std::size_t row = 0;
  double held = 0.0;
  for (long k = 0; k < ticks; ++k) {
    const double t = static_cast<double>(k) * dt;
    while (row < table.rows.size() && table.rows[row][0] <= t + 1e-9 * dt) held = table.rows[row++][1];
    if (held < -1.0 || held > 0.0) throw InvalidArgument("command values must lie in [-1, 0]");
    C.push_back(held);
  }
  return C;
}

void write_command_trace(const std::string& path, const std::vector<double>& C, double dt) {
  io::CsvTable table{{"t", "C"}, {}};
  for (std::size_t k = 0; k < C.size(); ++k) table.rows.push_back({static_cast<double>(k) * dt, C[k]});
  io::write_csv(path, table);
}

void write_trace_csv(const std::string& path, const RefinementTrace& trace) {
  io::CsvTable table{{"t", "C", "R", "v", "s_r"}, {}};
  for (const auto& s : trace.samples) table.rows.push_back({s.t, s.C, s.R, s.v, s.s_r});
  io::write_csv(path, table);
}

RefinementTrace read_trace_csv(const std::string& path) {
  const io::CsvTable table = io::read_csv(path);
  if (table.header != std::vector<std::string>{"t", "C", "R", "v", "s_r"})
    throw InvalidArgument("trace header must be t,C,R,v,s_r");
  RefinementTrace tr;
  for (const auto& r : table.rows) tr.samples.push_back({r[0], r[1], r[2], r[3], r[4]});
  if (!tr.samples.empty()) tr.V0r = tr.samples.front().v;
  if (tr.samples.size() >= 2) tr.dt = tr.samples[1].t - tr.samples[0].t;
  for (const auto& s : tr.samples) tr.Vminr = tr.Vminr == 0.0 ? s.v : std::min(tr.Vminr, s.v);
  return tr;
}

nlohmann::json to_json(const RefinementResult& r) {
  return {{"tau_r", r.tau_r},
          {"tolerances", to_json(r.tolerances)},
          {"source_duration_s", r.source_duration},
          {"replay_duration_s", r.trace.end_time()},
          {"V0r", r.trace.V0r},
          {"Vminr", r.trace.Vminr},
          {"eta", r.trace.eta},
          {"dt", r.trace.dt}};
}

RefinementResult refinement_from_json(const nlohmann::json& j) {
  try {
    RefinementResult r;
    r.tau_r = io::doubles_from_json(io::require(j, "tau_r"));
    r.tolerances = tolerances_from_json(io::require(j, "tolerances"));
    r.source_duration = io::require(j, "source_duration_s").get<double>();
    r.trace.V0r = j.value("V0r", 0.0);
    r.trace.Vminr = j.value("Vminr", 0.0);
    r.trace.eta = j.value("eta", 0.0);
    r.trace.dt = j.value("dt", 0.0);
    check_timings(r.tau_r);
    r.tolerances.validate(r.tau_r.size());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed refinement result: ") + e.what());
  }
}

nlohmann::json to_json(const RefineParams& p) {
  return {{"eta", p.eta},
          {"vmin_ratio", p.vmin_ratio},
          {"filter", {{"tau_f", p.filter.tau_f}, {"K", p.filter.K}, {"D", p.filter.D}, {"dt", p.filter.dt}}},
          {"tolerance",
           {{"eps_p_max", p.tolerance.eps_p_max},
            {"eps_p_min", p.tolerance.eps_p_min},
            {"eps_theta_max", p.tolerance.eps_theta_max},
            {"eps_theta_min", p.tolerance.eps_theta_min},
            {"exponent", p.tolerance.exponent}}}};
}

RefineParams refine_params_from_json(const nlohmann::json& j, const RefineParams& base) {
  try {
    RefineParams p = base;
    p.eta = j.value("eta", p.eta);
    p.vmin_ratio = j.value("vmin_ratio", p.vmin_ratio);
    if (j.contains("filter")) {
      const auto& f = j.at("filter");
      p.filter.tau_f = f.value("tau_f", p.filter.tau_f);
      p.filter.K = f.value("K", p.filter.K);
      p.filter.D = f.value("D", p.filter.D);
      p.filter.dt = f.value("dt", p.filter.dt);
    }
    if (j.contains("tolerance")) {
      const auto& t = j.at("tolerance");
      p.tolerance.eps_p_max = t.value("eps_p_max", p.tolerance.eps_p_max);
      p.tolerance.eps_p_min = t.value("eps_p_min", p.tolerance.eps_p_min);
      p.tolerance.eps_theta_max = t.value("eps_theta_max", p.tolerance.eps_theta_max);
      p.tolerance.eps_theta_min = t.value("eps_theta_min", p.tolerance.eps_theta_min);
      p.tolerance.exponent = t.value("exponent", p.tolerance.exponent);
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed refine parameters: ") + e.what());
  }
}

}  // namespace demotraj
