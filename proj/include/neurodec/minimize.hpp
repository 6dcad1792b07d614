#pragma once

#include <functional>

#include "neurodec/types.hpp"

namespace neurodec {

/// Objective callback: fills `grad` and returns the value at x.
using ValueAndGradient = std::function<double(const Vector& x, Vector& grad)>;

struct MinimizeOptions {
    int max_iterations = 2000;
    double gradient_tolerance = 1e-5;  // infinity norm
    int history = 10;                  // L-BFGS memory
};

struct MinimizeResult {
    Vector x;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Deterministic smooth unconstrained minimization: limited-memory BFGS with
/// Armijo backtracking. Full-batch, no randomness; equal inputs give equal
/// iterates on every run.
MinimizeResult minimize_lbfgs(const ValueAndGradient& objective, Vector x0,
                              const MinimizeOptions& options = {});

}  // namespace neurodec
