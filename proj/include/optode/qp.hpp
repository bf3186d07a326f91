#pragma once

#include <span>
#include <utility>

#include "optode/numerics.hpp"

namespace optode {

/// minimize 1/2 u'Qu + q'u  s.t.  A u = b,  G u <= h.
/// Absent equality/inequality blocks are represented by 0-row matrices.
struct QpProblem {
    Mat Q;
    Vec q;
    Mat A;
    Vec b;
    Mat G;
    Vec h;

    std::size_t num_vars() const { return q.size(); }
    std::size_t num_eq() const { return b.size(); }
    std::size_t num_ineq() const { return h.size(); }

    /// Throws std::invalid_argument on shape errors or a Q that is not
    /// symmetric positive definite.
    void validate() const;
};

struct QpSolution {
    Vec u_star;
    Vec nu_star;
    Vec lambda_star;
    double kkt_residual = 0.0;
};

/// Cotangents of a scalar loss with respect to every QP datum.
struct QpGradients {
    Mat dQ;
    Vec dq;
    Mat dA;
    Vec db;
    Mat dG;
    Vec dh;
};

/// What to do when a constraint has both lambda and slack below the
/// strict-complementarity margin.
enum class Degeneracy {
    Throw,         // raise DegenerateActiveSet
    TreatInactive  // differentiate as if the constraint were inactive
};

struct QpDiffOptions {
    Degeneracy degeneracy = Degeneracy::Throw;
    double margin = 1e-7;
};

inline constexpr double kQpDefaultTol = 1e-9;

/// Exact solve by enumerating active sets (p is tiny here). Throws Infeasible
/// when no active set is KKT-consistent, MaxIterations when p is too large to
/// enumerate.
QpSolution qp_solve(const QpProblem& prob, double tol = kQpDefaultTol);

/// Closed-form minimizer of 1/2||u - u_ref||^2 s.t. g'u <= h. Returns (u*, lambda*).
std::pair<Vec, double> qp_project_halfspace(std::span<const double> u_ref, std::span<const double> g,
                                            double h);

/// KKT residual of a candidate solution (stationarity, feasibility,
/// complementarity, dual sign), max-norm.
double kkt_residual(const QpProblem& prob, const QpSolution& sol);

/// Vector-Jacobian product through the solution map: given dl/du*, returns
/// dl/d{Q,q,A,b,G,h}. dQ is symmetrized.
QpGradients qp_backward(const QpProblem& prob, const QpSolution& sol, std::span<const double> dl_du,
                        const QpDiffOptions& opts = {});

/// Full Jacobian of (u*, nu*, lambda*) with respect to the row-major
/// vectorization [vec(Q); q; vec(A); b; vec(G); h].
Mat qp_jacobian_full(const QpProblem& prob, const QpSolution& sol, const QpDiffOptions& opts = {});

/// Column offsets of each datum inside qp_jacobian_full.
struct QpDataLayout {
    std::size_t Q, q, A, b, G, h, total;
};
QpDataLayout qp_data_layout(const QpProblem& prob);

/// Indices of constraints whose strict-complementarity margin is below `margin`.
std::vector<std::size_t> degenerate_constraints(const QpProblem& prob, const QpSolution& sol,
                                                double margin);

}  // namespace optode
