#pragma once

#include <functional>
#include <span>
#include <vector>

namespace tfuse {

struct LbfgsOptions {
  int max_iterations = 50;
  int history = 10;
  double gradient_tolerance = 1e-10;  // early exit on ||g||_2 below this
  int max_line_search_steps = 60;
  double armijo = 1e-4;
  double backtrack = 0.5;
};

enum class LbfgsStatus {
  gradient_converged,
  max_iterations,
  line_search_failed,  // best-so-far point is returned
};

struct LbfgsResult {
  LbfgsStatus status = LbfgsStatus::max_iterations;
  int iterations = 0;
  int evaluations = 0;
  double value = 0;
  /// Objective at the start point followed by every accepted iterate.
  std::vector<double> accepted_values;
};

/// Objective: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;
/// Trial points for which this returns false are rejected by the line search.
using FeasibleSet = std::function<bool(std::span<const double> x)>;

/// Limited-memory BFGS with a backtracking Armijo line search. `x` must be
/// feasible on entry and stays feasible; accepted objective values never increase.
LbfgsResult minimize_lbfgs(const Objective& objective, const FeasibleSet& feasible,
                           std::vector<double>& x, const LbfgsOptions& options = {});

}  // namespace tfuse
