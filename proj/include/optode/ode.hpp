#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "optode/certificates.hpp"
#include "optode/parallel.hpp"
#include "optode/policy.hpp"
#include "optode/qp.hpp"
#include "optode/trajectory.hpp"

namespace optode {

enum class Method { Euler, RK4 };

struct SolveConfig {
    double t0 = 0.0;
    double tf = 1.0;
    double dt = 0.01;
    Method method = Method::Euler;

    /// Number of steps; throws std::invalid_argument unless dt > 0 and
    /// (tf - t0) / dt is integral within 1e-9.
    std::size_t steps() const;
};

/// Loss = clf * sum_k V_k dt + terminal * Phi(x(tf)), Phi = V.
struct LossWeights {
    double clf = 1.0;
    double terminal = 0.0;
};

/// The controlled system: policy, safety filter (which carries the
/// dynamics) and the CLF.
struct ClosedLoop {
    const SafetyFilterSpec& filter;
    const MlpPolicy& policy;
    const Lyapunov& lyap;

    const ControlAffineSystem& system() const { return *filter.system; }
};

/// Everything evaluated at one state: filter, closed-loop derivative and
/// the pointwise CLF loss.
struct FieldEval {
    double t = 0.0;
    Vec x;
    FilterResult filter;
    Vec xdot;
    Vec barriers;
    double lyapunov = 0.0;
    double clf_argument = 0.0;  // dV/dx xdot + gamma V
    double loss = 0.0;          // max(0, clf_argument)
};

FieldEval evaluate_field(const ClosedLoop& cl, std::span<const double> x, double t);

/// Simulates the closed loop; the filter is re-solved at every RK4 stage.
/// Throws QpInfeasible / NonFiniteState carrying the step index.
Trajectory rollout(const ClosedLoop& cl, std::span<const double> x0, const SolveConfig& cfg);

/// Derivatives of the pointwise CLF loss at fixed control, plus the control
/// cotangent the caller chains through the filter into theta1/theta2.
struct ClfSource {
    double value = 0.0;
    bool active = false;
    Vec dx;  // dL/dx at fixed u
    Vec du;  // dL/du = g' dV/dx (zero when inactive)
};

ClfSource clf_source_terms(const Lyapunov& lyap, const ControlAffineSystem& sys, std::span<const double> x,
                           std::span<const double> u_safe, double t);

struct GradientOptions {
    LossWeights weights;
    QpDiffOptions qp{Degeneracy::TreatInactive, 1e-7};
};

struct GradientDiagnostics {
    std::size_t active_set_switches = 0;  // changes of the active set between consecutive grid points
    std::size_t degenerate_points = 0;    // grid points with a constraint inside the margin
};

struct GradientResult {
    double loss = 0.0;
    Vec d_theta1;
    Vec d_theta2;
    GradientDiagnostics diagnostics;
};

/// Per-trajectory loss of the discrete rollout.
double trajectory_loss(const ClosedLoop& cl, const Trajectory& traj, const LossWeights& w);
/// Mean loss over a batch of initial states (forward only).
double batch_loss(const ClosedLoop& cl, std::span<const Vec> x0_batch, const SolveConfig& cfg,
                  const LossWeights& w);

/// Exact gradient of the discretized loss (backprop through the solver,
/// filter and policy). Averaged over the batch.
GradientResult grad_discrete(const ClosedLoop& cl, std::span<const Vec> x0_batch, const SolveConfig& cfg,
                             const GradientOptions& opts = {});

/// Continuous adjoint: integrates the costate p and the accumulators
/// (mu1, mu2) backward on the forward grid with explicit Euler, using full
/// Jacobians of the filter from qp_jacobian_full.
GradientResult grad_adjoint(const ClosedLoop& cl, std::span<const Vec> x0_batch, const SolveConfig& cfg,
                            const GradientOptions& opts = {});

/// One backward-time trace of the adjoint, for diagnostics and tests.
struct AdjointTrace {
    std::vector<Vec> p;
    std::vector<Vec> mu1;
    std::vector<Vec> mu2;
};
AdjointTrace adjoint_trace(const ClosedLoop& cl, std::span<const double> x0, const SolveConfig& cfg,
                           const GradientOptions& opts = {});

}  // namespace optode
