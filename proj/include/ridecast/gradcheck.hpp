#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ridecast/tape.hpp"

namespace ridecast {

// Central-finite-difference check for a scalar expression. `build` records the
// expression on a fresh tape from the given leaves; it is re-invoked for every
// perturbed evaluation, so it must be a pure function of the leaf values.
// Returns max over all input coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                         const std::vector<Tensor>& inputs, double eps = 1e-4) {
    require(eps > 0.0, "grad_check: eps must be positive");

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(inputs.size());
        for (const Tensor& x : inputs) leaves.push_back(tape.leaf(x, true));
        Var out = tape.sum_all(build(tape, leaves)); // tolerate {1,1} or scalar-like roots
        tape.backward(out);
        for (Var v : leaves) analytic.push_back(tape.grad(v));
    }

    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(xs.size());
        for (const Tensor& x : xs) leaves.push_back(tape.leaf(x, false));
        Var out = tape.sum_all(build(tape, leaves));
        return tape.value(out).item();
    };

    double worst = 0.0;
    std::vector<Tensor> xs = inputs;
    for (size_t i = 0; i < xs.size(); ++i) {
        for (int j = 0; j < xs[i].size(); ++j) {
            const double keep = xs[i][j];
            xs[i][j] = keep + eps;
            const double up = eval(xs);
            xs[i][j] = keep - eps;
            const double dn = eval(xs);
            xs[i][j] = keep;
            const double numeric = (up - dn) / (2.0 * eps);
            const double a = analytic[i][j];
            const double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace ridecast
