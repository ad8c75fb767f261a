#include "demotraj/nlp.hpp"

#include "demotraj/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace demotraj::nlp {

int Problem::equality_count() const {
  int n = 0;
  for (const auto& b : equalities) n += b.size;
  return n;
}

int Problem::inequality_count() const {
  int n = 0;
  for (const auto& b : inequalities) n += b.size;
  return n;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::converged: return "converged";
    case Status::max_iter: return "max_iter";
    case Status::infeasible: return "infeasible";
    case Status::numeric_failure: return "numeric_failure";
    case Status::cancelled: return "cancelled";
  }
  return "?";
}

bool GradientReport::any_flagged() const {
  return std::any_of(entries.begin(), entries.end(), [](const auto& e) { return e.flagged; });
}

namespace {

struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double fd_step(double xi) { return 1e-6 * (1.0 + std::abs(xi)); }

class Evaluator {
 public:
  explicit Evaluator(const Problem& p) : p_(p) {
    if (p_.dim <= 0) throw InvalidArgument("problem dimension must be positive");
    lower_ = p_.lower.size() == 0 ? Vector::Constant(p_.dim, -std::numeric_limits<double>::infinity()) : p_.lower;
    upper_ = p_.upper.size() == 0 ? Vector::Constant(p_.dim, std::numeric_limits<double>::infinity()) : p_.upper;
    if (lower_.size() != p_.dim || upper_.size() != p_.dim)
      throw InvalidArgument("bound vectors must match problem dimension");
    for (int i = 0; i < p_.dim; ++i)
      if (lower_[i] > upper_[i]) throw InvalidArgument("lower bound exceeds upper bound");
    n_eq_ = p_.equality_count();
    n_in_ = p_.inequality_count();
  }

  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  int n_eq() const { return n_eq_; }
  int n_in() const { return n_in_; }

  Vector project(const Vector& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

  double objective(const Vector& x) const {
    const double f = p_.objective.value(x);
    if (!std::isfinite(f)) throw NumericFailure("objective returned a non-finite value");
    return f;
  }

  void objective_gradient(const Vector& x, VectorRef g) const {
    if (p_.objective.gradient) {
      p_.objective.gradient(x, g);
    } else {
      Vector xp = x;
      for (int i = 0; i < p_.dim; ++i) {
        const double h = fd_step(x[i]);
        xp[i] = x[i] + h;
        const double fp = objective(xp);
        xp[i] = x[i] - h;
        const double fm = objective(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
      }
    }
    if (!g.allFinite()) throw NumericFailure("objective gradient is non-finite");
  }

  static void block_value(const ConstraintBlock& b, const Vector& x, VectorRef out) {
    b.value(x, out);
    if (!out.allFinite()) throw NumericFailure("constraint '" + b.name + "' returned a non-finite value");
  }

  /// grad += J^T w for one block.
  void block_jt(const ConstraintBlock& b, const Vector& x, const Vector& w, VectorRef grad) const {
    if (b.jacobian_transpose) {
      b.jacobian_transpose(x, w, grad);
      return;
    }
    Vector xp = x;
    Vector cp(b.size), cm(b.size);
    for (int i = 0; i < p_.dim; ++i) {
      const double h = fd_step(x[i]);
      xp[i] = x[i] + h;
      block_value(b, xp, cp);
      xp[i] = x[i] - h;
      block_value(b, xp, cm);
      xp[i] = x[i];
      grad[i] += w.dot(cp - cm) / (2.0 * h);
    }
  }

  void constraints(const Vector& x, Vector& ce, Vector& ci) const {
    ce.resize(n_eq_);
    ci.resize(n_in_);
    int off = 0;
    for (const auto& b : p_.equalities) {
      block_value(b, x, ce.segment(off, b.size));
      off += b.size;
    }
    off = 0;
    for (const auto& b : p_.inequalities) {
      block_value(b, x, ci.segment(off, b.size));
      off += b.size;
    }
  }

  static double violation(const Vector& ce, const Vector& ci) {
    double v = 0.0;
    if (ce.size() > 0) v = std::max(v, ce.cwiseAbs().maxCoeff());
    if (ci.size() > 0) v = std::max(v, ci.maxCoeff());
    return v;
  }

  struct Multipliers {
    Vector lambda;
    Vector mu;
    double rho = 1.0;
  };

  double merit(const Vector& x, const Multipliers& m, double* f_out = nullptr) const {
    const double f = objective(x);
    if (f_out) *f_out = f;
    Vector ce, ci;
    constraints(x, ce, ci);
    double v = f;
    v += m.lambda.dot(ce) + 0.5 * m.rho * ce.squaredNorm();
    for (int i = 0; i < n_in_; ++i) {
      const double t = std::max(0.0, m.mu[i] + m.rho * ci[i]);
      v += (t * t - m.mu[i] * m.mu[i]) / (2.0 * m.rho);
    }
    return v;
  }

  /// Gradient of the merit; also reports |grad f|_inf for scaling.
  void merit_gradient(const Vector& x, const Multipliers& m, Vector& g, double& objective_grad_norm) const {
    g.setZero(p_.dim);
    objective_gradient(x, g);
    objective_grad_norm = g.cwiseAbs().maxCoeff();
    int off = 0;
    for (const auto& b : p_.equalities) {
      Vector c(b.size);
      block_value(b, x, c);
      const Vector w = m.lambda.segment(off, b.size) + m.rho * c;
      block_jt(b, x, w, g);
      off += b.size;
    }
    off = 0;
    for (const auto& b : p_.inequalities) {
      Vector c(b.size);
      block_value(b, x, c);
      Vector w = (m.mu.segment(off, b.size) + m.rho * c).cwiseMax(0.0);
      if (w.cwiseAbs().maxCoeff() > 0.0) block_jt(b, x, w, g);
      off += b.size;
    }
    if (!g.allFinite()) throw NumericFailure("merit gradient is non-finite");
  }

  void precondition(const Vector& in, Vector& out) const {
    if (p_.precondition) {
      out.resize(p_.dim);
      p_.precondition(in, out);
    } else {
      out = in;
    }
  }
  bool has_preconditioner() const { return static_cast<bool>(p_.precondition); }
  bool has_hessian() const { return static_cast<bool>(p_.objective.hessian); }

  /// Gauss-Newton model of the merit Hessian: objective Hessian plus rho J^T J
  /// over equalities and the inequalities whose shifted value is positive.
  Eigen::MatrixXd merit_model(const Vector& x, const Multipliers& m) const {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p_.dim, p_.dim);
    p_.objective.hessian(x, b);
    auto add_block = [&](const ConstraintBlock& blk, const Vector& weights) {
      if (weights.cwiseAbs().maxCoeff() == 0.0) return;
      Eigen::MatrixXd jac(blk.size, p_.dim);
      block_jacobian(blk, x, jac);
      b.noalias() += jac.transpose() * weights.asDiagonal() * jac;
    };
    for (const auto& blk : p_.equalities) add_block(blk, Vector::Constant(blk.size, m.rho));
    int off = 0;
    for (const auto& blk : p_.inequalities) {
      Vector c(blk.size);
      block_value(blk, x, c);
      Vector w(blk.size);
      for (int i = 0; i < blk.size; ++i) w[i] = m.mu[off + i] + m.rho * c[i] > 0.0 ? m.rho : 0.0;
      add_block(blk, w);
      off += blk.size;
    }
    return b;
  }

  void block_jacobian(const ConstraintBlock& b, const Vector& x, Eigen::MatrixXd& jac) const {
    if (b.jacobian) {
      b.jacobian(x, jac);
      return;
    }
    Vector e = Vector::Zero(b.size), row(p_.dim);
    for (int i = 0; i < b.size; ++i) {
      e[i] = 1.0;
      row.setZero();
      block_jt(b, x, e, row);
      jac.row(i) = row.transpose();
      e[i] = 0.0;
    }
  }

  /// Largest gradient component that is not blocked by an active bound (gradient units).
  double projected_gradient_norm(const Vector& x, const Vector& g) const {
    double m = 0.0;
    for (int i = 0; i < x.size(); ++i) {
      if (lower_[i] == upper_[i]) continue;
      const double eps = 1e-12 * (1.0 + std::abs(x[i]));
      double gi = std::abs(g[i]);
      if (x[i] <= lower_[i] + eps) gi = std::max(0.0, -g[i]);
      if (x[i] >= upper_[i] - eps) gi = std::max(0.0, g[i]);
      m = std::max(m, gi);
    }
    return m;
  }

 private:
  const Problem& p_;
  Vector lower_, upper_;
  int n_eq_ = 0;
  int n_in_ = 0;
};

struct InnerResult {
  Vector x;
  Vector grad;
  double merit = 0.0;
  double objective_grad_norm = 0.0;
  int iterations = 0;
};

InnerResult minimize_merit(const Evaluator& ev, const Evaluator::Multipliers& m, Vector x, double tol,
                           const Options& opts, std::vector<double>* history) {
  const int n = static_cast<int>(x.size());
  const Vector& lo = ev.lower();
  const Vector& hi = ev.upper();

  InnerResult r;
  double psi = ev.merit(x, m);
  Vector g;
  double gnorm_f = 0.0;
  ev.merit_gradient(x, m, g, gnorm_f);

  std::deque<Vector> s_mem, y_mem;
  std::deque<double> rho_mem;
  Vector d(n), q(n), z(n), mask(n), xn(n), gn(n);
  int stall = 0;
  int it = 0;
  const bool model = ev.has_hessian();
  Eigen::LLT<Eigen::MatrixXd> model_llt;
  std::vector<int> free_idx;

  for (; it < opts.max_inner; ++it) {
    const double scale = 1.0 + gnorm_f;
    if (ev.projected_gradient_norm(x, g) <= tol * scale) break;

    for (int i = 0; i < n; ++i) {
      const double eps = 1e-12 * (1.0 + std::abs(x[i]));
      const bool fixed = lo[i] == hi[i] || (x[i] <= lo[i] + eps && g[i] > 0.0) || (x[i] >= hi[i] - eps && g[i] < 0.0);
      mask[i] = fixed ? 0.0 : 1.0;
    }
    if (model) {
      const Eigen::MatrixXd b = ev.merit_model(x, m);
      free_idx.clear();
      for (int i = 0; i < n; ++i)
        if (mask[i] != 0.0) free_idx.push_back(i);
      const int nf = static_cast<int>(free_idx.size());
      Eigen::MatrixXd bf(nf, nf);
      for (int a = 0; a < nf; ++a)
        for (int c = 0; c < nf; ++c) bf(a, c) = b(free_idx[a], free_idx[c]);
      double shift = 1e-12 * std::max(1.0, nf > 0 ? bf.diagonal().cwiseAbs().maxCoeff() : 1.0);
      for (int attempt = 0; attempt < 30; ++attempt) {
        Eigen::MatrixXd reg = bf;
        reg.diagonal().array() += shift;
        model_llt.compute(reg);
        if (model_llt.info() == Eigen::Success) break;
        shift *= 100.0;
      }
    }
    auto apply_h0 = [&](const Vector& in, Vector& out) {
      if (!model) {
        ev.precondition(in, out);
        return;
      }
      const int nf = static_cast<int>(free_idx.size());
      Vector rhs(nf);
      for (int a = 0; a < nf; ++a) rhs[a] = in[free_idx[a]];
      const Vector sol = model_llt.solve(rhs);
      out = Vector::Zero(n);
      for (int a = 0; a < nf; ++a) out[free_idx[a]] = sol[a];
    };

    auto direction = [&](bool use_memory) {
      q = g.cwiseProduct(mask);
      const std::size_t k = use_memory ? s_mem.size() : 0;
      std::vector<double> alpha(k);
      for (std::size_t j = k; j-- > 0;) {
        alpha[j] = rho_mem[j] * s_mem[j].dot(q);
        q -= alpha[j] * y_mem[j];
      }
      apply_h0(q.cwiseProduct(mask), z);
      z = z.cwiseProduct(mask);
      if (k > 0 && !model) {
        Vector my;
        ev.precondition(y_mem.back(), my);
        const double yhy = y_mem.back().dot(my);
        if (yhy > 0.0) z *= s_mem.back().dot(y_mem.back()) / yhy;
      }
      for (std::size_t j = 0; j < k; ++j) {
        const double beta = rho_mem[j] * y_mem[j].dot(z);
        z += (alpha[j] - beta) * s_mem[j];
      }
      d = -z.cwiseProduct(mask);
    };

    direction(!model);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      s_mem.clear(); y_mem.clear(); rho_mem.clear();
      direction(false);
      slope = g.dot(d);
      if (!(slope < 0.0)) {
        d = -g.cwiseProduct(mask);
        slope = g.dot(d);
      }
    }
    if (!(slope < 0.0)) break;

    double step = 1.0;
    if (s_mem.empty() && !ev.has_preconditioner() && !model) {
      const double dn = d.cwiseAbs().maxCoeff();
      if (dn > 1.0) step = 1.0 / dn;
    }
    bool accepted = false;
    double psin = psi;
    for (int ls = 0; ls < 60; ++ls) {
      xn = ev.project(x + step * d);
      psin = ev.merit(xn, m);
      const double decrease = g.dot(xn - x);
      if (psin <= psi + 1e-4 * decrease && decrease < 0.0) {
        accepted = true;
        break;
      }
      if ((xn - x).cwiseAbs().maxCoeff() == 0.0) break;
      step *= 0.5;
    }
    if (!accepted) {
      if (!s_mem.empty()) {
        s_mem.clear(); y_mem.clear(); rho_mem.clear();
        continue;
      }
      break;
    }

    double gnorm_fn = 0.0;
    ev.merit_gradient(xn, m, gn, gnorm_fn);
    const Vector s = xn - x;
    const Vector y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_mem.push_back(s);
      y_mem.push_back(y);
      rho_mem.push_back(1.0 / sy);
      if (static_cast<int>(s_mem.size()) > opts.lbfgs_memory) {
        s_mem.pop_front(); y_mem.pop_front(); rho_mem.pop_front();
      }
    }
    const double rel_change = (psi - psin) / (1.0 + std::abs(psi));
    stall = rel_change < 1e-15 ? stall + 1 : 0;
    x = xn;
    g = gn;
    psi = psin;
    gnorm_f = gnorm_fn;
    if (history) history->push_back(psi);
    if (stall >= 5) break;
  }
  r.x = std::move(x);
  r.grad = std::move(g);
  r.merit = psi;
  r.objective_grad_norm = gnorm_f;
  r.iterations = it;
  return r;
}

struct Candidate {
  Vector x;
  double objective = 0.0;
  double violation = 0.0;
  double kkt = std::numeric_limits<double>::infinity();
  Vector lambda, mu;
  double rho = 0.0;
};

}  // namespace

double max_violation(const Problem& p, const Vector& x) {
  Evaluator ev(p);
  Vector ce, ci;
  ev.constraints(x, ce, ci);
  return Evaluator::violation(ce, ci);
}

Solution solve(const Problem& p, Vector x0, const Options& opts, const std::optional<WarmStart>& warm) {
  Evaluator ev(p);
  if (x0.size() != p.dim) throw InvalidArgument("x0 has wrong dimension");

  Solution sol;
  Evaluator::Multipliers m;
  m.lambda = Vector::Zero(ev.n_eq());
  m.mu = Vector::Zero(ev.n_in());
  m.rho = opts.initial_penalty;
  if (warm) {
    if (warm->eq_multipliers.size() == ev.n_eq()) m.lambda = warm->eq_multipliers;
    if (warm->ineq_multipliers.size() == ev.n_in()) m.mu = warm->ineq_multipliers.cwiseMax(0.0);
    if (warm->penalty > 0.0) m.rho = warm->penalty;
  }

  Vector x = ev.project(x0);
  std::optional<Candidate> start_feasible;
  std::optional<Candidate> best_feasible;
  Candidate last;

  try {
    Vector ce, ci;
    ev.constraints(x, ce, ci);
    double viol = Evaluator::violation(ce, ci);
    const double f0 = ev.objective(x);
    if (viol <= opts.feas_tol)
      start_feasible = Candidate{x, f0, viol, std::numeric_limits<double>::infinity(), m.lambda, m.mu, m.rho};
    double prev_viol = viol;
    double inner_tol = std::max(1e-2, opts.opt_tol);
    int stuck = 0;

    for (int outer = 0; outer < opts.max_outer; ++outer) {
      if (opts.cancel && opts.cancel->load()) {
        sol.status = Status::cancelled;
        sol.diagnostic = "cancelled between outer iterations";
        break;
      }
      std::vector<double>* hist = nullptr;
      if (opts.record_merit) hist = &sol.merit_history.emplace_back();
      InnerResult inner = minimize_merit(ev, m, x, inner_tol, opts, hist);
      sol.inner_iterations += inner.iterations;
      sol.outer_iterations = outer + 1;
      x = inner.x;

      ev.constraints(x, ce, ci);
      viol = Evaluator::violation(ce, ci);
      m.lambda += m.rho * ce;
      m.mu = (m.mu + m.rho * ci).cwiseMax(0.0);

      double stationarity = ev.projected_gradient_norm(x, inner.grad) / (1.0 + inner.objective_grad_norm);
      double complementarity = 0.0;
      for (int i = 0; i < ev.n_in(); ++i)
        complementarity = std::max(complementarity, std::abs(std::min(m.mu[i], -ci[i])));
      const double kkt = std::max(stationarity, complementarity);

      const double f = ev.objective(x);
      last = Candidate{x, f, viol, kkt, m.lambda, m.mu, m.rho};
      if (viol <= opts.feas_tol) {
        const bool better = !best_feasible || f < best_feasible->objective ||
                            (f == best_feasible->objective && kkt < best_feasible->kkt);
        if (better) best_feasible = last;
      }
      if (viol <= opts.feas_tol && kkt <= opts.opt_tol) {
        sol.status = Status::converged;
        break;
      }

      if (viol > std::max(opts.feas_tol, 0.25 * prev_viol)) {
        if (m.rho >= opts.max_penalty) {
          ++stuck;
        }
        m.rho = std::min(m.rho * opts.penalty_growth, opts.max_penalty);
      } else {
        stuck = 0;
      }
      if (stuck >= 3) break;
      prev_viol = viol;
      inner_tol = std::max(0.1 * inner_tol, 0.1 * opts.opt_tol);
    }
  } catch (const NumericFailure& e) {
    sol.status = Status::numeric_failure;
    sol.diagnostic = e.what();
    sol.x = x;
    sol.eq_multipliers = m.lambda;
    sol.ineq_multipliers = m.mu;
    sol.penalty = m.rho;
    sol.objective_value = std::numeric_limits<double>::quiet_NaN();
    sol.constraint_violation = std::numeric_limits<double>::quiet_NaN();
    sol.kkt_residual = std::numeric_limits<double>::quiet_NaN();
    return sol;
  }

  const bool cancelled = sol.status == Status::cancelled;
  const bool converged = sol.status == Status::converged;
  Candidate chosen = last;
  if (last.x.size() == 0) chosen = Candidate{x, ev.objective(x), max_violation(p, x), std::numeric_limits<double>::infinity(), m.lambda, m.mu, m.rho};
  // Final iterate unless it is infeasible; never return something worse than a
  // feasible starting point (keeps warm-started runs monotone).
  if (chosen.violation > opts.feas_tol && best_feasible) chosen = *best_feasible;
  if (start_feasible && (chosen.violation > opts.feas_tol || start_feasible->objective < chosen.objective))
    chosen = *start_feasible;
  sol.x = chosen.x;
  sol.objective_value = chosen.objective;
  sol.constraint_violation = chosen.violation;
  sol.kkt_residual = chosen.kkt;
  sol.eq_multipliers = chosen.lambda;
  sol.ineq_multipliers = chosen.mu;
  sol.penalty = chosen.rho > 0.0 ? chosen.rho : m.rho;
  if (!cancelled) {
    if (chosen.violation > opts.feas_tol) {
      sol.status = Status::infeasible;
      sol.diagnostic = "max constraint violation " + std::to_string(chosen.violation) + " exceeds feas_tol";
    } else if (converged && chosen.kkt <= opts.opt_tol) {
      sol.status = Status::converged;
    } else {
      sol.status = Status::max_iter;
    }
  }
  return sol;
}

namespace {

// Fixed weights in [0.5, 1.5] so every row contributes.
Vector check_weights(int size) {
  Vector w(size);
  std::uint64_t state = 0x9E3779B97F4A7C15ULL;
  for (int i = 0; i < size; ++i) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    w[i] = 0.5 + static_cast<double>(state >> 11) / static_cast<double>(1ULL << 53);
  }
  return w;
}

}  // namespace

GradientReport check_gradients(const Problem& p, const Vector& x, double flag_threshold) {
  Evaluator ev(p);
  GradientReport report;
  auto add = [&](const std::string& name, int i, double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    GradientCheckEntry e{name, i, analytic, numeric, std::abs(analytic - numeric) / denom, false};
    e.flagged = e.rel_error > flag_threshold;
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(e);
  };

  if (p.objective.gradient) {
    Vector g = Vector::Zero(p.dim);
    p.objective.gradient(x, g);
    Vector xp = x;
    for (int i = 0; i < p.dim; ++i) {
      const double h = fd_step(x[i]);
      xp[i] = x[i] + h;
      const double fp = p.objective.value(xp);
      xp[i] = x[i] - h;
      const double fm = p.objective.value(xp);
      xp[i] = x[i];
      add("objective", i, g[i], (fp - fm) / (2.0 * h));
    }
    if (p.objective.hessian) {
      // Directional check: H v against differenced gradients along v.
      const Vector v = check_weights(p.dim);
      Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(p.dim, p.dim);
      p.objective.hessian(x, hs);
      const Vector hv = hs * v;
      const double h = 1e-6 * (1.0 + x.cwiseAbs().maxCoeff());
      Vector gp = Vector::Zero(p.dim), gm = Vector::Zero(p.dim);
      p.objective.gradient(x + h * v, gp);
      p.objective.gradient(x - h * v, gm);
      const Vector fd = (gp - gm) / (2.0 * h);
      for (int i = 0; i < p.dim; ++i) add("objective.hessian", i, hv[i], fd[i]);
    }
  }

  auto check_blocks = [&](const std::vector<ConstraintBlock>& blocks) {
    for (const auto& b : blocks) {
      if (!b.jacobian_transpose) continue;
      const Vector w = check_weights(b.size);
      Vector analytic = Vector::Zero(p.dim);
      b.jacobian_transpose(x, w, analytic);
      Vector xp = x;
      Vector cp(b.size), cm(b.size);
      for (int i = 0; i < p.dim; ++i) {
        const double h = fd_step(x[i]);
        xp[i] = x[i] + h;
        b.value(xp, cp);
        xp[i] = x[i] - h;
        b.value(xp, cm);
        xp[i] = x[i];
        add(b.name, i, analytic[i], w.dot(cp - cm) / (2.0 * h));
      }
      if (b.jacobian) {
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(b.size, p.dim);
        b.jacobian(x, jac);
        const Vector dense = jac.transpose() * w;
        for (int i = 0; i < p.dim; ++i) add(b.name + ".jacobian", i, dense[i], analytic[i]);
      }
    }
  };
  check_blocks(p.equalities);
  check_blocks(p.inequalities);
  return report;
}

}  // namespace demotraj::nlp
