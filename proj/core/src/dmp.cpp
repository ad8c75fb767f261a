#include "demotraj/dmp.hpp"

#include "demotraj/errors.hpp"
#include "demotraj/io.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace demotraj {

void DmpModel::validate() const {
  if (centers.size() < 3 || widths.size() != centers.size()) throw InvalidArgument("DMP needs at least 3 basis functions");
  if (!(duration > 0.0)) throw InvalidArgument("DMP duration must be positive");
  if (!(alpha_z > 0.0 && beta_z > 0.0 && alpha_x > 0.0)) throw InvalidArgument("DMP gains must be positive");
  if (joints.empty()) throw InvalidArgument("DMP has no joints");
  for (const auto& j : joints)
    if (j.weights.size() != centers.size() || j.slopes.size() != centers.size())
      throw InvalidArgument("DMP weight count does not match the basis");
}

namespace {

struct Forcing {
  double value = 0.0;  // sum(psi l) / sum(psi)
  double slope = 0.0;  // d/dx of the above
};

Forcing weighted(const DmpModel& m, const DmpModel::Joint& j, double x) {
  double sp = 0.0, spl = 0.0, dsp = 0.0, dspl = 0.0;
  for (std::size_t i = 0; i < m.centers.size(); ++i) {
    const double d = x - m.centers[i];
    const double psi = std::exp(-m.widths[i] * d * d);
    const double dpsi = -2.0 * m.widths[i] * d * psi;
    const double local = j.weights[i] + j.slopes[i] * d;
    sp += psi;
    spl += psi * local;
    dsp += dpsi;
    dspl += dpsi * local + psi * j.slopes[i];
  }
  if (sp < 1e-300) return {};
  return {spl / sp, (dspl * sp - spl * dsp) / (sp * sp)};
}

// Trained amplitude of 0 would make the forcing term unscalable; such joints
// keep their forcing shape unscaled.
double amplitude_ratio(const DmpModel::Joint& j, double y0, double g) {
  const double trained = j.g - j.y0;
  return std::abs(trained) > 1e-9 ? (g - y0) / trained : 1.0;
}

}  // namespace

DmpModel train_dmp(const SampledTrajectory& demo, const DmpTrainOptions& opts) {
  if (demo.size() < 4) throw InvalidArgument("DMP training needs at least 4 samples");
  if (opts.n_basis < 3) throw InvalidArgument("DMP needs at least 3 basis functions");
  if (!(opts.alpha_z > 0.0)) throw InvalidArgument("alpha_z must be positive");
  for (std::size_t k = 1; k < demo.size(); ++k)
    if (!(demo.t[k] > demo.t[k - 1])) throw InvalidArgument("DMP training timestamps must strictly increase");
  const double T = demo.duration();
  if (!(T > 1e-9)) throw InvalidArgument("degenerate demonstration duration");

  DmpModel m;
  m.alpha_z = opts.alpha_z;
  m.beta_z = opts.alpha_z / 4.0;
  m.duration = T;
  const int nb = opts.n_basis;
  // Centers equally spaced in time; neighbouring kernels intersect at half height.
  for (int i = 0; i < nb; ++i) m.centers.push_back(std::exp(-m.alpha_x * i / (nb - 1.0)));
  for (int i = 0; i < nb; ++i) {
    const double gap = i + 1 < nb ? m.centers[static_cast<std::size_t>(i)] - m.centers[static_cast<std::size_t>(i + 1)]
                                  : m.centers[static_cast<std::size_t>(i - 1)] - m.centers[static_cast<std::size_t>(i)];
    m.widths.push_back(4.0 * std::log(2.0) / (gap * gap));
  }

  const int n = static_cast<int>(demo.q.front().size());
  const std::size_t K = demo.size();
  std::vector<double> x(K);
  for (std::size_t k = 0; k < K; ++k) x[k] = std::exp(-m.alpha_x * (demo.t[k] - demo.t.front()) / T);

  for (int j = 0; j < n; ++j) {
    DmpModel::Joint jt;
    jt.y0 = demo.q.front()[j];
    jt.g = demo.q.back()[j];
    jt.weights.assign(static_cast<std::size_t>(nb), 0.0);
    jt.slopes.assign(static_cast<std::size_t>(nb), 0.0);
    // f_target = T^2 y'' - alpha_z (beta_z (g - y) - T y') + alpha_z beta_z (g - y0) x
    const double k0 = m.alpha_z * m.beta_z * (jt.g - jt.y0);
    std::vector<double> f(K);
    for (std::size_t k = 0; k < K; ++k)
      f[k] = T * T * demo.ddq[k][j] - m.alpha_z * (m.beta_z * (jt.g - demo.q[k][j]) - T * demo.dq[k][j]) + k0 * x[k];
    // Per kernel, weighted least squares of f on x * (w + s (x - c)).
    for (std::size_t i = 0; i < static_cast<std::size_t>(nb); ++i) {
      Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
      Eigen::Vector2d b = Eigen::Vector2d::Zero();
      for (std::size_t k = 0; k < K; ++k) {
        const double d = x[k] - m.centers[i];
        const double psi = std::exp(-m.widths[i] * d * d);
        const Eigen::Vector2d phi(x[k], x[k] * d);
        A.noalias() += psi * phi * phi.transpose();
        b += psi * f[k] * phi;
      }
      A.diagonal().array() += 1e-12 * (A.trace() + 1e-300);
      const Eigen::Vector2d sol = A.ldlt().solve(b);
      jt.weights[i] = sol[0];
      jt.slopes[i] = sol[1];
    }
    m.joints.push_back(std::move(jt));
  }
  return m;
}

SampledTrajectory rollout(const DmpModel& m, const Vector& start, const Vector& goal, double duration, double dt) {
  m.validate();
  if (!(duration > 0.0 && dt > 0.0)) throw InvalidArgument("rollout duration and dt must be positive");
  const int n = m.dof();
  if (start.size() != n || goal.size() != n) throw InvalidArgument("rollout start/goal size does not match the DMP");
  const long steps = std::max(1L, static_cast<long>(std::ceil(duration / dt - 1e-9)));
  const double h = duration / static_cast<double>(steps);
  const double T = duration;

  std::vector<double> amp(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) amp[static_cast<std::size_t>(j)] = amplitude_ratio(m.joints[static_cast<std::size_t>(j)], start[j], goal[j]);

  SampledTrajectory out;
  Vector y = start, z = Vector::Zero(n);
  double x = 1.0;
  Vector dy(n), ddy(n), dddy(n), dz(n);
  for (long k = 0; k <= steps; ++k) {
    const double xd = -m.alpha_x * x / T;
    for (int j = 0; j < n; ++j) {
      const auto& jt = m.joints[static_cast<std::size_t>(j)];
      const Forcing fw = weighted(m, jt, x);
      const double f = x * fw.value * amp[static_cast<std::size_t>(j)];
      const double fdot = (fw.value + x * fw.slope) * xd * amp[static_cast<std::size_t>(j)];
      const double k0 = m.alpha_z * m.beta_z * (goal[j] - start[j]);
      dy[j] = z[j] / T;
      dz[j] = (m.alpha_z * (m.beta_z * (goal[j] - y[j]) - z[j]) - k0 * x + f) / T;
      ddy[j] = dz[j] / T;
      dddy[j] = (m.alpha_z * (-m.beta_z * dy[j] - dz[j]) - k0 * xd + fdot) / (T * T);
    }
    out.t.push_back(static_cast<double>(k) * h);
    out.q.push_back(y);
    out.dq.push_back(dy);
    out.ddq.push_back(ddy);
    out.dddq.push_back(dddy);
    if (k == steps) break;
    y += h * dy;
    z += h * dz;
    x += h * xd;
  }
  out.t.back() = duration;
  return out;
}

SampledTrajectory rollout(const DmpModel& m, double duration, double dt) {
  Vector start(m.dof()), goal(m.dof());
  for (int j = 0; j < m.dof(); ++j) {
    start[j] = m.joints[static_cast<std::size_t>(j)].y0;
    goal[j] = m.joints[static_cast<std::size_t>(j)].g;
  }
  return rollout(m, start, goal, duration, dt);
}

nlohmann::json to_json(const DmpModel& m) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : m.joints)
    joints.push_back({{"y0", j.y0}, {"g", j.g}, {"weights", j.weights}, {"slopes", j.slopes}});
  return {{"alpha_z", m.alpha_z}, {"beta_z", m.beta_z}, {"alpha_x", m.alpha_x}, {"T_d", m.duration},
          {"centers", m.centers}, {"widths", m.widths},   {"per_joint", joints}};
}

DmpModel dmp_from_json(const nlohmann::json& j) {
  try {
    DmpModel m;
    m.alpha_z = io::require(j, "alpha_z").get<double>();
    m.beta_z = io::require(j, "beta_z").get<double>();
    m.alpha_x = io::require(j, "alpha_x").get<double>();
    m.duration = io::require(j, "T_d").get<double>();
    m.centers = io::doubles_from_json(io::require(j, "centers"));
    m.widths = io::doubles_from_json(io::require(j, "widths"));
    for (const auto& jj : io::require(j, "per_joint")) {
      DmpModel::Joint jt;
      jt.y0 = io::require(jj, "y0").get<double>();
      jt.g = io::require(jj, "g").get<double>();
      jt.weights = io::doubles_from_json(io::require(jj, "weights"));
      jt.slopes = jj.contains("slopes") ? io::doubles_from_json(jj.at("slopes")) : std::vector<double>(jt.weights.size(), 0.0);
      m.joints.push_back(std::move(jt));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed DMP model: ") + e.what());
  }
}

}  // namespace demotraj
