#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

// Dense two-phase primal simplex with Bland's rule, sized for the small
// master relaxations this toolkit solves. Variables carry box bounds; finite
// upper bounds become explicit rows.

namespace odmts {

enum class LpSense : char { le = '<', eq = '=', ge = '>' };

struct LpRow {
  std::vector<double> coeffs;  // dense, one per variable
  LpSense sense = LpSense::le;
  double rhs = 0.0;
};

struct LpProblem {
  std::vector<double> objective;  // minimize
  std::vector<double> lower;
  std::vector<double> upper;  // +inf allowed
  std::vector<LpRow> rows;

  std::size_t num_vars() const { return objective.size(); }
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  std::vector<double> x;
};

namespace detail {

constexpr double kLpEps = 1e-9;

class SimplexTableau {
 public:
  SimplexTableau(std::size_t rows, std::size_t cols)
      : m_(rows), n_(cols), t_(rows, std::vector<double>(cols + 1, 0.0)), basis_(rows, -1) {}

  std::vector<std::vector<double>>& data() { return t_; }
  std::vector<int>& basis() { return basis_; }

  // One simplex phase: minimize cost over the current basis. Returns false on
  // unboundedness. `allowed` marks columns permitted to enter.
  bool run(const std::vector<double>& cost, const std::vector<char>& allowed) {
    const std::size_t iteration_cap = 200000;
    for (std::size_t iter = 0; iter < iteration_cap; ++iter) {
      // Reduced costs under the current basis.
      int entering = -1;
      for (std::size_t j = 0; j < n_; ++j) {
        if (!allowed[j]) continue;
        bool basic = false;
        for (std::size_t i = 0; i < m_; ++i)
          if (basis_[i] == static_cast<int>(j)) { basic = true; break; }
        if (basic) continue;
        double rc = cost[j];
        for (std::size_t i = 0; i < m_; ++i)
          rc -= cost[static_cast<std::size_t>(basis_[i])] * t_[i][j];
        if (rc < -kLpEps) { entering = static_cast<int>(j); break; }  // Bland: smallest index
      }
      if (entering < 0) return true;  // optimal

      double best_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = t_[i][static_cast<std::size_t>(entering)];
        if (a > kLpEps) best_ratio = std::min(best_ratio, t_[i][n_] / a);
      }
      if (!std::isfinite(best_ratio)) return false;  // unbounded
      // Bland: among minimum-ratio rows, leave the smallest basic index.
      int leaving = -1;
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = t_[i][static_cast<std::size_t>(entering)];
        if (a <= kLpEps) continue;
        if (t_[i][n_] / a > best_ratio + kLpEps) continue;
        if (leaving < 0 || basis_[i] < basis_[static_cast<std::size_t>(leaving)])
          leaving = static_cast<int>(i);
      }
      pivot(static_cast<std::size_t>(leaving), static_cast<std::size_t>(entering));
    }
    throw std::logic_error("simplex: iteration cap exceeded");
  }

  void pivot(std::size_t row, std::size_t col) {
    const double p = t_[row][col];
    for (std::size_t j = 0; j <= n_; ++j) t_[row][j] /= p;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double f = t_[i][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n_; ++j) t_[i][j] -= f * t_[row][j];
    }
    basis_[row] = static_cast<int>(col);
  }

  double rhs(std::size_t row) const { return t_[row][n_]; }
  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }

 private:
  std::size_t m_, n_;
  std::vector<std::vector<double>> t_;
  std::vector<int> basis_;
};

}  // namespace detail

inline LpSolution solve_lp(const LpProblem& prob) {
  const std::size_t n = prob.num_vars();
  if (prob.lower.size() != n || prob.upper.size() != n)
    throw std::logic_error("solve_lp: bounds size mismatch");

  // Shift to y = x - lower >= 0 and collect finite-upper rows.
  double obj_const = 0.0;
  for (std::size_t j = 0; j < n; ++j) obj_const += prob.objective[j] * prob.lower[j];

  struct WorkRow {
    std::vector<double> coeffs;
    LpSense sense;
    double rhs;
  };
  std::vector<WorkRow> work;
  work.reserve(prob.rows.size() + n);
  for (const LpRow& r : prob.rows) {
    if (r.coeffs.size() != n) throw std::logic_error("solve_lp: row size mismatch");
    double shift = 0.0;
    for (std::size_t j = 0; j < n; ++j) shift += r.coeffs[j] * prob.lower[j];
    work.push_back({r.coeffs, r.sense, r.rhs - shift});
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(prob.upper[j])) continue;
    const double span = prob.upper[j] - prob.lower[j];
    if (span < -detail::kLpEps) return {LpStatus::infeasible, 0.0, {}};
    std::vector<double> coeffs(n, 0.0);
    coeffs[j] = 1.0;
    work.push_back({std::move(coeffs), LpSense::le, span});
  }

  // Normalize to nonnegative rhs.
  for (WorkRow& r : work) {
    if (r.rhs < 0.0) {
      for (double& c : r.coeffs) c = -c;
      r.rhs = -r.rhs;
      if (r.sense == LpSense::le) r.sense = LpSense::ge;
      else if (r.sense == LpSense::ge) r.sense = LpSense::le;
    }
  }

  const std::size_t m = work.size();
  std::size_t num_slack = 0, num_art = 0;
  for (const WorkRow& r : work) {
    if (r.sense != LpSense::eq) ++num_slack;
    if (r.sense != LpSense::le) ++num_art;
  }
  const std::size_t total = n + num_slack + num_art;

  detail::SimplexTableau tab(m, total);
  auto& t = tab.data();
  auto& basis = tab.basis();
  std::vector<char> is_art(total, 0);

  std::size_t slack_at = n, art_at = n + num_slack;
  for (std::size_t i = 0; i < m; ++i) {
    const WorkRow& r = work[i];
    for (std::size_t j = 0; j < n; ++j) t[i][j] = r.coeffs[j];
    t[i][total] = r.rhs;
    if (r.sense == LpSense::le) {
      t[i][slack_at] = 1.0;
      basis[i] = static_cast<int>(slack_at++);
    } else if (r.sense == LpSense::ge) {
      t[i][slack_at] = -1.0;
      ++slack_at;
      t[i][art_at] = 1.0;
      is_art[art_at] = 1;
      basis[i] = static_cast<int>(art_at++);
    } else {
      t[i][art_at] = 1.0;
      is_art[art_at] = 1;
      basis[i] = static_cast<int>(art_at++);
    }
  }

  std::vector<char> allow_all(total, 1);

  if (num_art > 0) {
    std::vector<double> phase1(total, 0.0);
    for (std::size_t j = 0; j < total; ++j)
      if (is_art[j]) phase1[j] = 1.0;
    if (!tab.run(phase1, allow_all))
      throw std::logic_error("simplex: phase 1 unbounded");
    double art_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (is_art[static_cast<std::size_t>(basis[i])]) art_sum += tab.rhs(i);
    if (art_sum > 1e-7) return {LpStatus::infeasible, 0.0, {}};
    // Pivot any basic-at-zero artificials onto structural columns.
    for (std::size_t i = 0; i < m; ++i) {
      if (!is_art[static_cast<std::size_t>(basis[i])]) continue;
      for (std::size_t j = 0; j < total; ++j) {
        if (is_art[j]) continue;
        if (std::fabs(t[i][j]) > detail::kLpEps) {
          tab.pivot(i, j);
          break;
        }
      }
    }
  }

  std::vector<double> phase2(total, 0.0);
  for (std::size_t j = 0; j < n; ++j) phase2[j] = prob.objective[j];
  std::vector<char> allowed(total, 1);
  for (std::size_t j = 0; j < total; ++j)
    if (is_art[j]) allowed[j] = 0;
  if (!tab.run(phase2, allowed)) return {LpStatus::unbounded, 0.0, {}};

  LpSolution sol;
  sol.status = LpStatus::optimal;
  sol.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const int b = basis[i];
    if (b >= 0 && static_cast<std::size_t>(b) < n) sol.x[static_cast<std::size_t>(b)] = tab.rhs(i);
  }
  sol.objective = obj_const;
  for (std::size_t j = 0; j < n; ++j) {
    sol.x[j] += prob.lower[j];
    sol.objective += prob.objective[j] * (sol.x[j] - prob.lower[j]);
  }
  return sol;
}

}  // namespace odmts
