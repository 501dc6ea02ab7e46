#include "tangentfuse/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace tfuse {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct CorrectionPair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

// Two-loop recursion: returns -H * g.
std::vector<double> search_direction(const std::deque<CorrectionPair>& memory,
                                     std::span<const double> grad) {
  std::vector<double> q(grad.begin(), grad.end());
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    alpha[k] = memory[k].rho * dot(memory[k].s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * memory[k].y[i];
  }
  if (!memory.empty()) {
    const CorrectionPair& last = memory.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (double& v : q) v *= gamma;
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double beta = memory[k].rho * dot(memory[k].y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * memory[k].s[i];
  }
  for (double& v : q) v = -v;
  return q;
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& objective, const FeasibleSet& feasible,
                           std::vector<double>& x, const LbfgsOptions& options) {
  const std::size_t n = x.size();
  LbfgsResult result;
  std::vector<double> grad(n);
  double value = objective(x, grad);
  ++result.evaluations;
  result.accepted_values.push_back(value);
  result.value = value;

  std::deque<CorrectionPair> memory;
  std::vector<double> trial(n), trial_grad(n);

  while (result.iterations < options.max_iterations) {
    const double grad_norm = std::sqrt(dot(grad, grad));
    if (grad_norm < options.gradient_tolerance) {
      result.status = LbfgsStatus::gradient_converged;
      return result;
    }

    bool accepted = false;
    // A failed search with curvature memory is retried once along -g.
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      std::vector<double> direction = search_direction(memory, grad);
      double slope = dot(grad, direction);
      if (!(slope < 0)) {
        memory.clear();
        direction = search_direction(memory, grad);
        slope = dot(grad, direction);
      }
      double step = memory.empty() ? std::min(1.0, 1.0 / grad_norm) : 1.0;

      for (int ls = 0; ls < options.max_line_search_steps; ++ls) {
        bool moved = false;
        for (std::size_t i = 0; i < n; ++i) {
          trial[i] = x[i] + step * direction[i];
          moved = moved || trial[i] != x[i];
        }
        // The step has underflowed; an unchanged point would pass Armijo trivially.
        if (!moved) break;
        if (!feasible(trial)) {
          step *= options.backtrack;
          continue;
        }
        const double trial_value = objective(trial, trial_grad);
        ++result.evaluations;
        if (std::isfinite(trial_value) &&
            trial_value <= value + options.armijo * step * slope) {
          std::vector<double> s(n), y(n);
          for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial[i] - x[i];
            y[i] = trial_grad[i] - grad[i];
          }
          const double sy = dot(s, y);
          if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            memory.push_back({std::move(s), std::move(y), 1.0 / sy});
            if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
          }
          x.swap(trial);
          grad.swap(trial_grad);
          value = trial_value;
          accepted = true;
          break;
        }
        // Safeguarded quadratic interpolation of the step.
        double next = options.backtrack * step;
        if (std::isfinite(trial_value)) {
          const double denom = 2 * (trial_value - value - step * slope);
          if (denom > 0) next = std::clamp(-slope * step * step / denom, 0.1 * step, 0.5 * step);
        }
        step = next;
      }
      if (!accepted) {
        if (memory.empty()) break;
        memory.clear();
      }
    }

    if (!accepted) {
      result.status = LbfgsStatus::line_search_failed;
      return result;
    }
    ++result.iterations;
    result.value = value;
    result.accepted_values.push_back(value);
  }
  result.status = LbfgsStatus::max_iterations;
  return result;
}

}  // namespace tfuse
