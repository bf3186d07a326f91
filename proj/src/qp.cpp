#include "optode/qp.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

#include "optode/errors.hpp"

namespace optode {

namespace {

constexpr std::size_t kMaxEnumeratedConstraints = 16;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

bool cholesky_positive(const Mat& q, double floor) {
    const std::size_t n = q.rows();
    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = q(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d >= floor)) return false;
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = 0.5 * (q(i, j) + q(j, i));
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return true;
}

Vec slack_of(const QpProblem& prob, std::span<const double> u) {
    Vec s = prob.G * u;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] -= prob.h[i];
    return s;
}

// Equality-constrained QP with the inequality rows in `active` held tight.
bool solve_with_active(const QpProblem& prob, const Mat& qs, const std::vector<std::size_t>& active,
                       Vec& u, Vec& nu, Vec& lam_active) {
    const std::size_t n = prob.num_vars();
    const std::size_t m = prob.num_eq();
    const std::size_t k = active.size();
    const std::size_t dim = n + m + k;
    Mat kkt(dim, dim);
    Vec rhs(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) kkt(i, j) = qs(i, j);
        rhs[i] = -prob.q[i];
    }
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            kkt(n + r, j) = prob.A(r, j);
            kkt(j, n + r) = prob.A(r, j);
        }
        rhs[n + r] = prob.b[r];
    }
    for (std::size_t a = 0; a < k; ++a) {
        const std::size_t r = active[a];
        for (std::size_t j = 0; j < n; ++j) {
            kkt(n + m + a, j) = prob.G(r, j);
            kkt(j, n + m + a) = prob.G(r, j);
        }
        rhs[n + m + a] = prob.h[r];
    }
    Vec sol;
    try {
        sol = solve_linear(kkt, rhs);
    } catch (const SingularMatrix&) {
        return false;
    }
    u.assign(sol.begin(), sol.begin() + n);
    nu.assign(sol.begin() + n, sol.begin() + n + m);
    lam_active.assign(sol.begin() + n + m, sol.end());
    return true;
}

}  // namespace

void QpProblem::validate() const {
    const std::size_t n = q.size();
    require(n > 0, "QpProblem: empty q");
    require(Q.rows() == n && Q.cols() == n, "QpProblem: Q must be n x n");
    require(A.rows() == b.size(), "QpProblem: A and b disagree");
    require(A.rows() == 0 || A.cols() == n, "QpProblem: A must have n columns");
    require(G.rows() == h.size(), "QpProblem: G and h disagree");
    require(G.rows() == 0 || G.cols() == n, "QpProblem: G must have n columns");
    require(all_finite(Q.data()) && all_finite(q) && all_finite(A.data()) && all_finite(b) &&
                all_finite(G.data()) && all_finite(h),
            "QpProblem: non-finite data");
    require(cholesky_positive(Q, 1e-10), "QpProblem: Q is not positive definite");
}

QpSolution qp_solve(const QpProblem& prob, double tol) {
    prob.validate();
    const std::size_t n = prob.num_vars();
    const std::size_t p = prob.num_ineq();
    if (p > kMaxEnumeratedConstraints)
        throw MaxIterations("qp_solve: " + std::to_string(p) + " inequality rows exceed the enumeration limit");

    Mat qs(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) qs(i, j) = 0.5 * (prob.Q(i, j) + prob.Q(j, i));

    // Active sets in order of increasing size, so the first KKT-consistent
    // set is also the smallest.
    std::vector<std::uint32_t> masks(std::size_t{1} << p);
    for (std::uint32_t s = 0; s < masks.size(); ++s) masks[s] = s;
    std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
        return std::popcount(a) < std::popcount(b);
    });

    bool any_solvable = false;
    Vec u, nu, lam_active;
    std::vector<std::size_t> active;
    for (std::uint32_t mask : masks) {
        active.clear();
        for (std::size_t i = 0; i < p; ++i)
            if (mask & (1u << i)) active.push_back(i);
        if (active.size() > n) continue;
        if (!solve_with_active(prob, qs, active, u, nu, lam_active)) continue;
        any_solvable = true;

        const double lam_scale = 1.0 + norm_inf(lam_active);
        if (std::any_of(lam_active.begin(), lam_active.end(),
                        [&](double l) { return l < -tol * lam_scale; }))
            continue;
        const Vec s = slack_of(prob, u);
        bool feasible = true;
        for (std::size_t i = 0; i < p && feasible; ++i) {
            const double scale = 1.0 + std::abs(prob.h[i]) + norm2(prob.G.row(i)) * norm2(u);
            feasible = s[i] <= tol * scale;
        }
        if (!feasible) continue;

        QpSolution sol;
        sol.u_star = u;
        sol.nu_star = nu;
        sol.lambda_star.assign(p, 0.0);
        for (std::size_t a = 0; a < active.size(); ++a)
            sol.lambda_star[active[a]] = std::max(0.0, lam_active[a]);
        sol.kkt_residual = kkt_residual(prob, sol);
        return sol;
    }
    if (!any_solvable) throw std::invalid_argument("qp_solve: KKT system singular for every active set");
    throw Infeasible("qp_solve: no active set satisfies the KKT conditions (empty feasible set)");
}

std::pair<Vec, double> qp_project_halfspace(std::span<const double> u_ref, std::span<const double> g,
                                            double h) {
    if (u_ref.size() != g.size()) throw std::invalid_argument("qp_project_halfspace: size mismatch");
    const double gg = dot(g, g);
    if (std::sqrt(gg) < 1e-12) throw ZeroConstraintRow("qp_project_halfspace: constraint row is zero");
    const double violation = dot(g, u_ref) - h;
    if (violation <= 0.0) return {Vec(u_ref.begin(), u_ref.end()), 0.0};
    const double lam = violation / gg;
    Vec u(u_ref.begin(), u_ref.end());
    axpy(-lam, g, u);
    return {u, lam};
}

double kkt_residual(const QpProblem& prob, const QpSolution& sol) {
    const std::size_t n = prob.num_vars();
    Vec stat(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = prob.q[i];
        for (std::size_t j = 0; j < n; ++j) s += 0.5 * (prob.Q(i, j) + prob.Q(j, i)) * sol.u_star[j];
        stat[i] = s;
    }
    for (std::size_t r = 0; r < prob.num_eq(); ++r) axpy(sol.nu_star[r], prob.A.row(r), stat);
    for (std::size_t r = 0; r < prob.num_ineq(); ++r) axpy(sol.lambda_star[r], prob.G.row(r), stat);
    double res = norm_inf(stat);
    if (prob.num_eq() > 0) res = std::max(res, norm_inf(sub(prob.A * sol.u_star, prob.b)));
    const Vec s = slack_of(prob, sol.u_star);
    for (std::size_t i = 0; i < s.size(); ++i) {
        res = std::max(res, s[i]);
        res = std::max(res, std::abs(sol.lambda_star[i] * s[i]));
        res = std::max(res, -sol.lambda_star[i]);
    }
    return res;
}

std::vector<std::size_t> degenerate_constraints(const QpProblem& prob, const QpSolution& sol,
                                                double margin) {
    std::vector<std::size_t> out;
    const Vec s = slack_of(prob, sol.u_star);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (std::max(sol.lambda_star[i], -s[i]) < margin) out.push_back(i);
    return out;
}

namespace {

// Multipliers and slacks as seen by the differentiation: degenerate rows are
// either rejected or pinned to (lambda = 0, slack = -1).
struct DiffPoint {
    Vec lambda;
    Vec slack;
};

DiffPoint differentiation_point(const QpProblem& prob, const QpSolution& sol, const QpDiffOptions& opts) {
    DiffPoint dp{sol.lambda_star, slack_of(prob, sol.u_star)};
    for (std::size_t i : degenerate_constraints(prob, sol, opts.margin)) {
        if (opts.degeneracy == Degeneracy::Throw)
            throw DegenerateActiveSet("qp: constraint " + std::to_string(i) +
                                      " violates the strict-complementarity margin");
        dp.lambda[i] = 0.0;
        dp.slack[i] = -1.0;
    }
    return dp;
}

// J_{F,Y} of the KKT map F(X, Y), Y = (u, nu, lambda).
Mat kkt_jacobian_y(const QpProblem& prob, const DiffPoint& dp) {
    const std::size_t n = prob.num_vars();
    const std::size_t m = prob.num_eq();
    const std::size_t p = prob.num_ineq();
    Mat j(n + m + p, n + m + p);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) j(r, c) = prob.Q(r, c);
    for (std::size_t e = 0; e < m; ++e)
        for (std::size_t c = 0; c < n; ++c) {
            j(c, n + e) = prob.A(e, c);
            j(n + e, c) = prob.A(e, c);
        }
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t c = 0; c < n; ++c) {
            j(c, n + m + i) = prob.G(i, c);
            j(n + m + i, c) = dp.lambda[i] * prob.G(i, c);
        }
        j(n + m + i, n + m + i) = dp.slack[i];
    }
    return j;
}

// J_{F,X} assembled from Kronecker blocks.
Mat kkt_jacobian_x(const QpProblem& prob, const QpSolution& sol, const DiffPoint& dp) {
    const std::size_t n = prob.num_vars();
    const std::size_t m = prob.num_eq();
    const std::size_t p = prob.num_ineq();
    const QpDataLayout lay = qp_data_layout(prob);
    Mat jx(n + m + p, lay.total);

    auto place = [&jx](const Mat& block, std::size_t r0, std::size_t c0) {
        for (std::size_t r = 0; r < block.rows(); ++r)
            for (std::size_t c = 0; c < block.cols(); ++c) jx(r0 + r, c0 + c) = block(r, c);
    };
    const Mat u_row = Mat::from_rows(1, n, sol.u_star);

    place(kron(Mat::identity(n), u_row), 0, lay.Q);
    place(Mat::identity(n), 0, lay.q);
    if (m > 0) {
        place(kron(Mat::from_rows(1, m, sol.nu_star), Mat::identity(n)), 0, lay.A);
        place(kron(Mat::identity(m), u_row), n, lay.A);
        place(-1.0 * Mat::identity(m), n, lay.b);
    }
    if (p > 0) {
        place(kron(Mat::from_rows(1, p, dp.lambda), Mat::identity(n)), 0, lay.G);
        const Mat dl = diag(dp.lambda);
        place(dl * kron(Mat::identity(p), u_row), n + m, lay.G);
        place(-1.0 * dl, n + m, lay.h);
    }
    return jx;
}

}  // namespace

QpDataLayout qp_data_layout(const QpProblem& prob) {
    const std::size_t n = prob.num_vars();
    const std::size_t m = prob.num_eq();
    const std::size_t p = prob.num_ineq();
    QpDataLayout l{};
    l.Q = 0;
    l.q = l.Q + n * n;
    l.A = l.q + n;
    l.b = l.A + m * n;
    l.G = l.b + m;
    l.h = l.G + p * n;
    l.total = l.h + p;
    return l;
}

QpGradients qp_backward(const QpProblem& prob, const QpSolution& sol, std::span<const double> dl_du,
                        const QpDiffOptions& opts) {
    const std::size_t n = prob.num_vars();
    const std::size_t m = prob.num_eq();
    const std::size_t p = prob.num_ineq();
    if (dl_du.size() != n) throw std::invalid_argument("qp_backward: cotangent size mismatch");
    const DiffPoint dp = differentiation_point(prob, sol, opts);

    Vec rhs(n + m + p, 0.0);
    std::copy(dl_du.begin(), dl_du.end(), rhs.begin());
    // d = -J_{F,Y}^{-T} (dl/dY)
    Vec d = solve_linear(kkt_jacobian_y(prob, dp).transposed(), rhs);
    for (auto& x : d) x = -x;
    const std::span<const double> du(d.data(), n);
    const std::span<const double> dnu(d.data() + n, m);
    const std::span<const double> dlam(d.data() + n + m, p);

    QpGradients g;
    g.dq.assign(du.begin(), du.end());
    g.dQ = 0.5 * (outer(du, sol.u_star) + outer(sol.u_star, du));
    g.db = scaled(dnu, -1.0);
    g.dA = m > 0 ? outer(dnu, sol.u_star) + outer(sol.nu_star, du) : Mat(0, n);
    Vec lam_dlam(p);
    for (std::size_t i = 0; i < p; ++i) lam_dlam[i] = dp.lambda[i] * dlam[i];
    g.dh = scaled(lam_dlam, -1.0);
    g.dG = p > 0 ? outer(lam_dlam, sol.u_star) + outer(dp.lambda, du) : Mat(0, n);
    return g;
}

Mat qp_jacobian_full(const QpProblem& prob, const QpSolution& sol, const QpDiffOptions& opts) {
    const DiffPoint dp = differentiation_point(prob, sol, opts);
    Mat jyx = solve_linear(kkt_jacobian_y(prob, dp), kkt_jacobian_x(prob, sol, dp));
    for (auto& x : jyx.data()) x = -x;
    return jyx;
}

}  // namespace optode
