#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optode/numerics.hpp"
#include "optode/policy.hpp"
#include "optode/qp.hpp"
#include "optode/system.hpp"
#include "optode/trajectory.hpp"

namespace optode {

/// Safe set {x : B(x) >= 0}. Relative degree 2 barriers go through the
/// HOCBF chain psi0 = B, psi1 = L_f B + k1 B.
struct Barrier {
    std::shared_ptr<const ScalarField> B;
    int relative_degree = 1;
    std::string name;

    double value(std::span<const double> x) const { return B->eval(x); }
    Vec gradient(std::span<const double> x) const { return field_gradient(*B, x); }
};

/// CLF candidate V with linear decay rate gamma.
struct Lyapunov {
    std::shared_ptr<const ScalarField> V;
    double gamma = 1.0;

    double value(std::span<const double> x) const { return V->eval(x); }
    Vec gradient(std::span<const double> x) const { return field_gradient(*V, x); }
};

/// Barriers, their class-K coefficients and the dynamics they constrain.
/// class_k holds one entry per barrier and per level of its chain, in
/// barrier order.
struct SafetyFilterSpec {
    std::vector<Barrier> barriers;
    ClassKParams class_k;
    std::shared_ptr<const ControlAffineSystem> system;
    /// When false the filter passes u_nn through; barriers are still evaluated.
    bool enabled = true;

    std::size_t num_rows() const { return barriers.size(); }
    std::size_t kappa_count() const;
    std::size_t kappa_offset(std::size_t barrier) const;
    /// Throws std::invalid_argument when class_k has the wrong length.
    void validate() const;
};

/// Constraint rows G u <= h at state x.
struct CbfRows {
    Mat G;
    Vec h;
};

/// Sensitivities of the rows. dG_* rows index the row-major entries of G.
struct CbfRowJacobians {
    Mat dG_dx;
    Mat dh_dx;
    Mat dG_dtheta2;
    Mat dh_dtheta2;
};

CbfRows build_cbf_rows(const SafetyFilterSpec& spec, std::span<const double> x, double t = 0.0);
CbfRows build_hocbf_rows(const SafetyFilterSpec& spec, std::span<const double> x, double t = 0.0);
/// Mixed relative degrees allowed.
CbfRows build_rows(const SafetyFilterSpec& spec, std::span<const double> x, double t = 0.0);
CbfRowJacobians build_rows_jacobians(const SafetyFilterSpec& spec, std::span<const double> x, double t = 0.0);

Vec barrier_values(const SafetyFilterSpec& spec, std::span<const double> x);

struct FilterResult {
    Vec u_nn;
    Vec u_safe;
    QpProblem problem;  // Q = I, q = -u_nn, G, h
    QpSolution sol;
};

/// u_safe = argmin 1/2||u - pi(x)||^2 s.t. G(x) u <= h(x). With no barriers
/// (or when disabled) the filter is the identity.
FilterResult safety_filter(const SafetyFilterSpec& spec, const MlpPolicy& policy, std::span<const double> x,
                           double t = 0.0, double tol = kQpDefaultTol);

/// max{0, dV/dx * xdot + gamma V(x)}
double clf_pointwise_loss(const Lyapunov& lyap, std::span<const double> x, std::span<const double> xdot);
/// Left-endpoint quadrature of the stored pointwise losses.
double clf_trajectory_loss(const Lyapunov& lyap, const Trajectory& traj);
/// Mean over a batch.
double clf_trajectory_loss(const Lyapunov& lyap, std::span<const Trajectory> batch);

}  // namespace optode
