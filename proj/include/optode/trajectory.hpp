#pragma once

#include <vector>

#include "optode/numerics.hpp"

namespace optode {

/// Closed-loop rollout on a time grid. Every per-step list has one entry per
/// grid point (including the final one).
struct Trajectory {
    Vec times;
    std::vector<Vec> states;
    std::vector<Vec> xdot;
    std::vector<Vec> u_nn;
    std::vector<Vec> u_safe;
    std::vector<Vec> barrier_values;
    Vec lyapunov;
    Vec pointwise_loss;

    std::size_t size() const { return times.size(); }
};

}  // namespace optode
