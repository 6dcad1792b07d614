#include "neurodec/minimize.hpp"

#include <cmath>
#include <deque>

namespace neurodec {

MinimizeResult minimize_lbfgs(const ValueAndGradient& objective, Vector x0,
                              const MinimizeOptions& options) {
    struct Pair {
        Vector s, y;
        double rho;
    };
    std::deque<Pair> memory;

    MinimizeResult result;
    result.x = std::move(x0);
    Vector grad(result.x.size());
    result.value = objective(result.x, grad);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.gradient_norm = grad.lpNorm<Eigen::Infinity>();
        result.iterations = iter;
        if (result.gradient_norm <= options.gradient_tolerance) {
            result.converged = true;
            return result;
        }

        // Two-loop recursion.
        Vector direction = -grad;
        std::vector<double> alpha(memory.size());
        for (Index i = static_cast<Index>(memory.size()) - 1; i >= 0; --i) {
            const auto& m = memory[static_cast<size_t>(i)];
            alpha[static_cast<size_t>(i)] = m.rho * m.s.dot(direction);
            direction -= alpha[static_cast<size_t>(i)] * m.y;
        }
        if (!memory.empty()) {
            const auto& last = memory.back();
            direction *= last.s.dot(last.y) / last.y.squaredNorm();
        }
        for (size_t i = 0; i < memory.size(); ++i) {
            const auto& m = memory[i];
            const double beta = m.rho * m.y.dot(direction);
            direction += (alpha[i] - beta) * m.s;
        }
        double slope = grad.dot(direction);
        if (!(slope < 0.0)) {  // degenerate direction; fall back to steepest descent
            direction = -grad;
            slope = -grad.squaredNorm();
            memory.clear();
        }

        // Armijo backtracking.
        double step = memory.empty() ? 1.0 / std::max(1.0, grad.norm()) : 1.0;
        constexpr double c1 = 1e-4;
        Vector x_new;
        Vector grad_new(grad.size());
        double value_new = result.value;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = result.x + step * direction;
            value_new = objective(x_new, grad_new);
            if (std::isfinite(value_new) && value_new <= result.value + c1 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            result.converged = false;
            return result;
        }

        Pair pair;
        pair.s = x_new - result.x;
        pair.y = grad_new - grad;
        const double sy = pair.s.dot(pair.y);
        if (sy > 1e-12 * pair.s.norm() * pair.y.norm()) {
            pair.rho = 1.0 / sy;
            memory.push_back(std::move(pair));
            if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
        }
        result.x = std::move(x_new);
        grad = std::move(grad_new);
        result.value = value_new;
    }
    result.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    result.iterations = options.max_iterations;
    result.converged = result.gradient_norm <= options.gradient_tolerance;
    return result;
}

}  // namespace neurodec
