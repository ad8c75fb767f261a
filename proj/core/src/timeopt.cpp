#include "demotraj/timeopt.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace demotraj {

double TimingResult::total() const {
  double s = 0.0;
  for (double t : segment_durations) s += t;
  return s;
}

bool TimingResult::ok() const {
  return solution.status == nlp::Status::converged || solution.status == nlp::Status::max_iter;
}

namespace {

std::pair<std::size_t, double> locate(const std::vector<double>& durations, double t) {
  if (durations.empty()) throw InvalidArgument("empty timing law");
  double start = 0.0;
  for (std::size_t j = 0; j < durations.size(); ++j) {
    if (t <= start + durations[j] || j + 1 == durations.size())
      return {j, std::clamp((t - start) / durations[j], 0.0, 1.0)};
    start += durations[j];
  }
  return {durations.size() - 1, 1.0};
}

}  // namespace

Vector TimingResult::position(double t) const {
  const auto [j, s] = locate(segment_durations, t);
  return segments[j].eval(s);
}

Vector TimingResult::derivative(double t, int r) const {
  const auto [j, s] = locate(segment_durations, t);
  return segments[j].derivative(s, r) / std::pow(segment_durations[j], r);
}

std::vector<double> normalized_times(const std::vector<double>& durations) {
  double total = 0.0;
  for (double d : durations) {
    if (!(d > 0.0)) throw InvalidArgument("segment durations must be positive");
    total += d;
  }
  std::vector<double> tau{0.0};
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < durations.size(); ++j) {
    acc += durations[j];
    tau.push_back(acc / total);
  }
  tau.push_back(1.0);
  return tau;
}

TimingResult solve_timing(const std::vector<Waypoint>& wps, const RobotModel& model, const TimingOptions& opts) {
  if (wps.size() < 2) throw InvalidArgument("timing needs at least 2 waypoints");
  const int n = model.joint_count();
  const int segs = static_cast<int>(wps.size()) - 1;
  const int kc = opts.ctrl_per_segment;
  const KnotVector knots = KnotVector::clamped_uniform(kc, opts.order);
  if (kc < 4) throw InvalidArgument("ctrl_per_segment must be at least 4");
  if (!(opts.limit_margin >= 0.0 && opts.limit_margin < 1.0)) throw InvalidArgument("limit_margin must be in [0, 1)");
  for (const auto& w : wps)
    if (w.q.size() != n) throw InvalidArgument("waypoint joint count does not match the model");
  const auto& lim = model.limits();

  TimingResult out;
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const Vector& q = wps[i].q;
    if ((q - lim.q_max).maxCoeff() > 0.0 || (lim.q_min - q).maxCoeff() > 0.0) {
      out.solution.status = nlp::Status::infeasible;
      out.solution.diagnostic = "waypoint " + std::to_string(i) + " lies outside the joint position limits";
      return out;
    }
  }

  const Eigen::MatrixXd d1 = derivative_control_map(knots, 1);  // (kc-1) x kc
  const int nv = kc - 1;
  const int nctrl = segs * kc * n;
  const int dim = nctrl + segs;
  auto cidx = [&](int seg, int i, int j) { return (seg * kc + i) * n + j; };
  auto tidx = [&](int seg) { return nctrl + seg; };

  nlp::Problem p;
  p.dim = dim;
  p.lower = Vector::Constant(dim, -std::numeric_limits<double>::infinity());
  p.upper = Vector::Constant(dim, std::numeric_limits<double>::infinity());
  for (int s = 0; s < segs; ++s) {
    for (int i = 0; i < kc; ++i) {
      for (int j = 0; j < n; ++j) {
        p.lower[cidx(s, i, j)] = lim.q_min[j];
        p.upper[cidx(s, i, j)] = lim.q_max[j];
      }
    }
    for (int j = 0; j < n; ++j) {
      const double a = wps[static_cast<std::size_t>(s)].q[j];
      const double b = wps[static_cast<std::size_t>(s + 1)].q[j];
      p.lower[cidx(s, 0, j)] = p.upper[cidx(s, 0, j)] = a;
      p.lower[cidx(s, kc - 1, j)] = p.upper[cidx(s, kc - 1, j)] = b;
      if (s == 0) p.lower[cidx(s, 1, j)] = p.upper[cidx(s, 1, j)] = a;
      if (s == segs - 1) p.lower[cidx(s, kc - 2, j)] = p.upper[cidx(s, kc - 2, j)] = b;
    }
    p.lower[tidx(s)] = opts.min_duration;
  }

  p.objective.value = [=](const Vector& x) { return x.tail(segs).sum(); };
  p.objective.gradient = [=](const Vector&, nlp::VectorRef g) {
    g.setZero();
    g.tail(segs).setOnes();
  };

  // Velocity control points scaled by the limit: d/v_max - T <= 0 and -d/|v_min| - T <= 0.
  const double keep = 1.0 - opts.limit_margin;
  const Vector inv_up = (keep * lim.v_max).cwiseInverse();
  const Vector inv_lo = (-keep * lim.v_min).cwiseInverse();
  nlp::ConstraintBlock vel;
  vel.name = "velocity";
  vel.size = segs * nv * n * 2;
  vel.value = [=](const Vector& x, nlp::VectorRef c) {
    int r = 0;
    for (int s = 0; s < segs; ++s) {
      const double t = x[tidx(s)];
      for (int i = 0; i < nv; ++i) {
        for (int j = 0; j < n; ++j) {
          double d = 0.0;
          for (int l = 0; l < kc; ++l) d += d1(i, l) * x[cidx(s, l, j)];
          c[r++] = d * inv_up[j] - t;
          c[r++] = -d * inv_lo[j] - t;
        }
      }
    }
  };
  vel.jacobian_transpose = [=](const Vector&, const Vector& w, nlp::VectorRef g) {
    int r = 0;
    for (int s = 0; s < segs; ++s) {
      for (int i = 0; i < nv; ++i) {
        for (int j = 0; j < n; ++j) {
          const double coef = w[r] * inv_up[j] - w[r + 1] * inv_lo[j];
          for (int l = 0; l < kc; ++l) g[cidx(s, l, j)] += d1(i, l) * coef;
          g[tidx(s)] -= w[r] + w[r + 1];
          r += 2;
        }
      }
    }
  };
  p.inequalities.push_back(vel);

  // C1 junctions: end velocity of segment s equals start velocity of s+1, in units of v_max.
  if (segs > 1) {
    const double e0 = d1(nv - 1, kc - 2), e1 = d1(nv - 1, kc - 1);
    const double b0 = d1(0, 0), b1 = d1(0, 1);
    nlp::ConstraintBlock c1;
    c1.name = "c1_continuity";
    c1.size = (segs - 1) * n;
    c1.value = [=](const Vector& x, nlp::VectorRef c) {
      for (int s = 0; s + 1 < segs; ++s) {
        for (int j = 0; j < n; ++j) {
          const double end = e0 * x[cidx(s, kc - 2, j)] + e1 * x[cidx(s, kc - 1, j)];
          const double start = b0 * x[cidx(s + 1, 0, j)] + b1 * x[cidx(s + 1, 1, j)];
          c[s * n + j] = (end / x[tidx(s)] - start / x[tidx(s + 1)]) * inv_up[j];
        }
      }
    };
    c1.jacobian_transpose = [=](const Vector& x, const Vector& w, nlp::VectorRef g) {
      for (int s = 0; s + 1 < segs; ++s) {
        const double ta = x[tidx(s)], tb = x[tidx(s + 1)];
        for (int j = 0; j < n; ++j) {
          const double wj = w[s * n + j] * inv_up[j];
          const double end = e0 * x[cidx(s, kc - 2, j)] + e1 * x[cidx(s, kc - 1, j)];
          const double start = b0 * x[cidx(s + 1, 0, j)] + b1 * x[cidx(s + 1, 1, j)];
          g[cidx(s, kc - 2, j)] += wj * e0 / ta;
          g[cidx(s, kc - 1, j)] += wj * e1 / ta;
          g[cidx(s + 1, 0, j)] -= wj * b0 / tb;
          g[cidx(s + 1, 1, j)] -= wj * b1 / tb;
          g[tidx(s)] -= wj * end / (ta * ta);
          g[tidx(s + 1)] += wj * start / (tb * tb);
        }
      }
    };
    p.equalities.push_back(c1);
  }

  // Start: control points on the chord, durations from the largest joint move at half speed.
  Vector x0(dim);
  for (int s = 0; s < segs; ++s) {
    const Vector& a = wps[static_cast<std::size_t>(s)].q;
    const Vector& b = wps[static_cast<std::size_t>(s + 1)].q;
    for (int i = 0; i < kc; ++i) {
      const double u = static_cast<double>(i) / (kc - 1);
      for (int j = 0; j < n; ++j) x0[cidx(s, i, j)] = (1.0 - u) * a[j] + u * b[j];
    }
    double t = 0.0;
    for (int j = 0; j < n; ++j) t = std::max(t, std::abs(b[j] - a[j]) / (0.5 * std::min(lim.v_max[j], -lim.v_min[j])));
    x0[tidx(s)] = std::max(t, opts.min_duration);
  }

  out.solution = nlp::solve(p, x0, opts.solver);
  const Vector& x = out.solution.x;
  for (int s = 0; s < segs; ++s) {
    std::vector<Vector> ctrl;
    for (int i = 0; i < kc; ++i) {
      Vector c(n);
      for (int j = 0; j < n; ++j) c[j] = x[cidx(s, i, j)];
      ctrl.push_back(std::move(c));
    }
    out.segments.emplace_back(std::move(ctrl), knots);
    out.segment_durations.push_back(x[tidx(s)]);
  }
  out.tau = normalized_times(out.segment_durations);
  return out;
}

nlohmann::json to_json(const TimingResult& r) {
  return {{"tau", r.tau},
          {"segment_durations", r.segment_durations},
          {"total_s", r.total()},
          {"status", nlp::to_string(r.solution.status)}};
}

}  // namespace demotraj
