#include <doctest.h>

#include <cmath>

#include "optode/errors.hpp"
#include "optode/qp.hpp"
#include "support.hpp"

using namespace optode;
using testing::Gen;

namespace {

QpProblem make(Mat Q, Vec q, Mat G = Mat(0, 0), Vec h = {}, Mat A = Mat(0, 0), Vec b = {}) {
    const std::size_t n = q.size();
    if (G.rows() == 0) G = Mat(0, n);
    if (A.rows() == 0) A = Mat(0, n);
    return {std::move(Q), std::move(q), std::move(A), std::move(b), std::move(G), std::move(h)};
}

// Random instance with n vars, p inequalities (roughly half active), m equalities.
QpProblem random_problem(Gen& gen, std::size_t n, std::size_t p, std::size_t m) {
    if (m >= n) m = 0;
    // Constraints are built around an interior point so the problem is feasible.
    const Vec u0 = gen.vec(n);
    const Mat G = gen.mat(p, n), A = gen.mat(m, n);
    Vec h = G * u0;
    for (auto& v : h) v += gen.uniform(0.0, 1.0);
    return make(gen.spd(n), gen.vec(n, -2, 2), G, h, A, A * u0);
}

double margin(const QpProblem& prob, const QpSolution& sol) {
    double mg = 1e300;
    for (std::size_t i = 0; i < prob.num_ineq(); ++i) {
        double gu = 0.0;
        for (std::size_t j = 0; j < prob.num_vars(); ++j) gu += prob.G(i, j) * sol.u_star[j];
        mg = std::min(mg, std::max(sol.lambda_star[i], prob.h[i] - gu));
    }
    return mg;
}

// Flattens the data in qp_data_layout order.
Vec pack(const QpProblem& p) {
    Vec x = p.Q.data();
    x.insert(x.end(), p.q.begin(), p.q.end());
    x.insert(x.end(), p.A.data().begin(), p.A.data().end());
    x.insert(x.end(), p.b.begin(), p.b.end());
    x.insert(x.end(), p.G.data().begin(), p.G.data().end());
    x.insert(x.end(), p.h.begin(), p.h.end());
    return x;
}

QpProblem unpack(const QpProblem& shape, std::span<const double> x) {
    QpProblem p = shape;
    std::size_t k = 0;
    for (auto& v : p.Q.data()) v = x[k++];
    for (auto& v : p.q) v = x[k++];
    for (auto& v : p.A.data()) v = x[k++];
    for (auto& v : p.b) v = x[k++];
    for (auto& v : p.G.data()) v = x[k++];
    for (auto& v : p.h) v = x[k++];
    return p;
}

}  // namespace

TEST_CASE("qp_solve examples") {
    const QpSolution s1 = qp_solve(make(Mat{{1}}, Vec{-2.0}));
    CHECK(s1.u_star[0] == doctest::Approx(2.0));
    CHECK(s1.lambda_star.empty());
    CHECK(s1.nu_star.empty());

    const QpSolution s2 = qp_solve(make(Mat::identity(2), Vec{-1.0, -1.0}, Mat{{1, 0}}, Vec{0.0}));
    CHECK(s2.u_star[0] == doctest::Approx(0.0));
    CHECK(s2.u_star[1] == doctest::Approx(1.0));
    CHECK(s2.lambda_star[0] == doctest::Approx(1.0));

    const QpSolution s3 = qp_solve(make(Mat::identity(2), Vec{-1.0, -1.0}, Mat{{1, 0}}, Vec{5.0}));
    CHECK(s3.u_star[0] == doctest::Approx(1.0));
    CHECK(s3.u_star[1] == doctest::Approx(1.0));
    CHECK(s3.lambda_star[0] == 0.0);
}

TEST_CASE("qp_solve with an equality constraint") {
    // min 1/2|u|^2 - u1 s.t. u1 + u2 = 1  ->  u = (1, 0)
    const QpSolution s = qp_solve(make(Mat::identity(2), Vec{-1.0, 0.0}, Mat(0, 0), {}, Mat{{1, 1}}, Vec{1.0}));
    CHECK(s.u_star[0] == doctest::Approx(1.0));
    CHECK(s.u_star[1] == doctest::Approx(0.0));
    CHECK(s.nu_star[0] == doctest::Approx(0.0));
}

TEST_CASE("qp_solve errors") {
    CHECK_THROWS_AS(qp_solve(make(Mat{{1}}, Vec{0.0}, Mat{{1}, {-1}}, Vec{-1.0, -1.0})), Infeasible);
    CHECK_THROWS_AS(qp_solve(make(Mat{{1, 0}, {0, -1}}, Vec{0.0, 0.0})), std::invalid_argument);
    CHECK_THROWS_AS(qp_solve(make(Mat{{1, 2}, {0, 1}}, Vec{0.0, 0.0})), std::invalid_argument);
    Gen gen(4);
    CHECK_THROWS_AS(qp_solve(make(Mat::identity(2), Vec{0.0, 0.0}, gen.mat(17, 2), Vec(17, 1.0))), MaxIterations);
}

TEST_CASE("qp_project_halfspace examples") {
    auto [u1, l1] = qp_project_halfspace(Vec{2.0, 0.0}, Vec{1.0, 0.0}, 1.0);
    CHECK(u1 == Vec{1.0, 0.0});
    CHECK(l1 == doctest::Approx(1.0));
    auto [u2, l2] = qp_project_halfspace(Vec{0.0, 0.0}, Vec{0.3, -2.0}, 1.0);
    CHECK(u2 == Vec{0.0, 0.0});
    CHECK(l2 == 0.0);
    auto [u3, l3] = qp_project_halfspace(Vec{3.0}, Vec{1.0}, 0.0);
    CHECK(u3[0] == doctest::Approx(0.0));
    CHECK(l3 == doctest::Approx(3.0));
    CHECK_THROWS_AS(qp_project_halfspace(Vec{1.0, 1.0}, Vec{0.0, 1e-13}, 0.0), ZeroConstraintRow);
}

TEST_CASE("halfspace projection agrees with a grid search") {
    // closest feasible point to (2, 0) in {u1 <= 1}, searched on a 0.01 grid
    double best = 1e300;
    Vec arg(2);
    for (int i = -300; i <= 100; ++i)
        for (int j = -200; j <= 200; ++j) {
            const double a = i * 0.01, b = j * 0.01;
            const double d = (a - 2) * (a - 2) + b * b;
            if (d < best) best = d, arg = {a, b};
        }
    auto [u, lam] = qp_project_halfspace(Vec{2.0, 0.0}, Vec{1.0, 0.0}, 1.0);
    CHECK(std::abs(arg[0] - u[0]) < 1e-9);
    CHECK(std::abs(arg[1] - u[1]) < 1e-9);
    (void)lam;
}

TEST_CASE("qp_solve equals the halfspace projection on single-row problems") {
    Gen gen(5);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = gen.index(1, 3);
        const Vec u_ref = gen.vec(n, -3, 3), g = gen.vec(n, -2, 2);
        const double h = gen.uniform(-2, 2);
        const QpSolution s = qp_solve(make(Mat::identity(n), scaled(u_ref, -1.0), Mat::from_rows(1, n, g), Vec{h}));
        auto [u, lam] = qp_project_halfspace(u_ref, g, h);
        CHECK(norm_inf(sub(s.u_star, u)) <= 1e-8);
        CHECK(std::abs(s.lambda_star[0] - lam) <= 1e-8);
    }
}

TEST_CASE("solutions satisfy KKT and complementary slackness") {
    Gen gen(6);
    for (int trial = 0; trial < 200; ++trial) {
        const QpProblem prob = random_problem(gen, gen.index(1, 3), gen.index(0, 3), gen.index(0, 1));
        const QpSolution s = qp_solve(prob);
        CHECK(s.kkt_residual <= 1e-8);
        CHECK(kkt_residual(prob, s) <= 1e-8);
        for (std::size_t i = 0; i < prob.num_ineq(); ++i) {
            const double gu = dot(prob.G.row(i), s.u_star);
            CHECK(s.lambda_star[i] >= -1e-8);
            CHECK(gu - prob.h[i] <= 1e-8);
            CHECK(std::abs(s.lambda_star[i] * (gu - prob.h[i])) <= 1e-8);
        }
    }
}

TEST_CASE("argmin is invariant to scaling the objective") {
    Gen gen(7);
    for (int trial = 0; trial < 30; ++trial) {
        const QpProblem prob = random_problem(gen, 2, 2, 0);
        const Vec u = qp_solve(prob).u_star;
        for (double c : {0.5, 2.0, 10.0}) {
            QpProblem scaled_prob = prob;
            scaled_prob.Q = c * prob.Q;
            scaled_prob.q = scaled(prob.q, c);
            CHECK(norm_inf(sub(qp_solve(scaled_prob).u_star, u)) <= 1e-9);
        }
    }
}

TEST_CASE("qp_backward examples") {
    const QpProblem p1 = make(Mat{{2}}, Vec{1.0});
    const QpGradients g1 = qp_backward(p1, qp_solve(p1), Vec{1.0});
    CHECK(g1.dq[0] == doctest::Approx(-0.5));

    const QpProblem p2 = make(Mat::identity(2), Vec{-1.0, -1.0}, Mat{{1, 0}}, Vec{5.0});
    const QpGradients g2 = qp_backward(p2, qp_solve(p2), Vec{0.3, -0.7});
    CHECK(g2.dh[0] == 0.0);
    CHECK(max_abs(g2.dG) == 0.0);

    // active case: l = c'u, compare with finite differences over (q, h)
    const QpProblem p3 = make(Mat::identity(2), Vec{-1.0, -1.0}, Mat{{1, 0}}, Vec{0.0});
    const Vec c{0.4, -1.1};
    const QpGradients g3 = qp_backward(p3, qp_solve(p3), c);
    auto loss = [&](std::span<const double> v) {
        QpProblem p = p3;
        p.q = {v[0], v[1]};
        p.h = {v[2]};
        return dot(c, qp_solve(p).u_star);
    };
    const Vec fd = finite_diff_grad(loss, Vec{-1.0, -1.0, 0.0}, 1e-6);
    CHECK(rel_error(Vec{g3.dq[0], g3.dq[1], g3.dh[0]}, fd) <= 1e-4);
}

TEST_CASE("qp_backward matches finite differences on random non-degenerate instances") {
    Gen gen(8);
    int checked = 0, active = 0, with_eq = 0;
    while (checked < 100) {
        const std::size_t n = gen.index(1, 3);
        const QpProblem prob = random_problem(gen, n, gen.index(0, 2), gen.index(0, 1));
        const QpSolution sol = qp_solve(prob);
        if (prob.num_ineq() > 0 && margin(prob, sol) < 1e-3) continue;
        ++checked;
        for (double l : sol.lambda_star) active += l > 0;
        with_eq += prob.num_eq() > 0;

        const Vec c = gen.vec(n);
        const QpGradients g = qp_backward(prob, sol, c);
        const Vec x0 = pack(prob);
        // Q is perturbed symmetrically, so compare against the symmetrized gradient.
        auto loss = [&](std::span<const double> v) {
            QpProblem p = unpack(prob, v);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < i; ++j) p.Q(j, i) = p.Q(i, j) = 0.5 * (p.Q(i, j) + p.Q(j, i));
            return dot(c, qp_solve(p).u_star);
        };
        const Vec fd = finite_diff_grad(loss, x0, 1e-6);
        Vec analytic = g.dQ.data();
        analytic.insert(analytic.end(), g.dq.begin(), g.dq.end());
        analytic.insert(analytic.end(), g.dA.data().begin(), g.dA.data().end());
        analytic.insert(analytic.end(), g.db.begin(), g.db.end());
        analytic.insert(analytic.end(), g.dG.data().begin(), g.dG.data().end());
        analytic.insert(analytic.end(), g.dh.begin(), g.dh.end());
        CHECK(rel_error(analytic, fd, 1e-6) <= 1e-4);
    }
    CHECK(active > 10);
    CHECK(with_eq > 10);
}

TEST_CASE("qp_jacobian_full examples and consistency") {
    const QpProblem p0 = make(Mat::identity(2), Vec{0.3, -0.2});
    const Mat j0 = qp_jacobian_full(p0, qp_solve(p0));
    const QpDataLayout l0 = qp_data_layout(p0);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(j0(r, l0.q + c) == doctest::Approx(r == c ? -1.0 : 0.0));

    const Vec g{1.0, 2.0};
    const QpProblem p1 = make(Mat::identity(2), Vec{-3.0, -3.0}, Mat::from_rows(1, 2, g), Vec{1.0});
    const QpSolution s1 = qp_solve(p1);
    REQUIRE(s1.lambda_star[0] > 0.0);
    const Mat j1 = qp_jacobian_full(p1, s1);
    const QpDataLayout l1 = qp_data_layout(p1);
    CHECK(j1(0, l1.h) == doctest::Approx(g[0] / dot(g, g)));
    CHECK(j1(1, l1.h) == doctest::Approx(g[1] / dot(g, g)));

    Gen gen(9);
    int checked = 0;
    while (checked < 60) {
        const std::size_t n = gen.index(1, 3);
        const QpProblem prob = random_problem(gen, n, gen.index(0, 2), gen.index(0, 1));
        const QpSolution sol = qp_solve(prob);
        if (prob.num_ineq() > 0 && margin(prob, sol) < 1e-3) continue;
        ++checked;
        const Mat jac = qp_jacobian_full(prob, sol);
        const QpDataLayout lay = qp_data_layout(prob);
        CHECK(jac.cols() == lay.total);
        // (u, q) and (u, h) blocks against unit cotangents through qp_backward
        for (std::size_t r = 0; r < n; ++r) {
            Vec e(n, 0.0);
            e[r] = 1.0;
            const QpGradients g = qp_backward(prob, sol, e);
            for (std::size_t c = 0; c < n; ++c) CHECK(std::abs(jac(r, lay.q + c) - g.dq[c]) <= 1e-8);
            for (std::size_t c = 0; c < prob.num_ineq(); ++c) CHECK(std::abs(jac(r, lay.h + c) - g.dh[c]) <= 1e-8);
        }
        // directional derivative along a random symmetric perturbation
        QpProblem dir = prob;
        for (auto& v : dir.Q.data()) v = 0.0;
        const Mat s = gen.mat(n, n);
        dir.Q = s + s.transposed();
        dir.q = gen.vec(n);
        for (auto& v : dir.A.data()) v = gen.uniform(-1, 1);
        for (auto& v : dir.b) v = gen.uniform(-1, 1);
        for (auto& v : dir.G.data()) v = gen.uniform(-1, 1);
        for (auto& v : dir.h) v = gen.uniform(-1, 1);
        const Vec x = pack(prob), dx = pack(dir);
        const double eps = 1e-6;
        Vec xp = x, xm = x;
        axpy(eps, dx, xp);
        axpy(-eps, dx, xm);
        const Vec fd = scaled(sub(qp_solve(unpack(prob, xp)).u_star, qp_solve(unpack(prob, xm)).u_star), 0.5 / eps);
        const Vec lin = jac * dx;
        CHECK(rel_error(Vec(lin.begin(), lin.begin() + static_cast<std::ptrdiff_t>(n)), fd, 1e-3) <= 1e-5);
    }
}

TEST_CASE("degenerate active sets") {
    // u_ref = (1, 0) sits exactly on u1 <= 1: lambda = 0 and slack = 0.
    const QpProblem prob = make(Mat::identity(2), Vec{-1.0, 0.0}, Mat{{1, 0}}, Vec{1.0});
    const QpSolution sol = qp_solve(prob);
    CHECK(degenerate_constraints(prob, sol, 1e-7) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(qp_backward(prob, sol, Vec{1.0, 0.0}), DegenerateActiveSet);
    CHECK_THROWS_AS(qp_jacobian_full(prob, sol), DegenerateActiveSet);

    const QpDiffOptions inactive{Degeneracy::TreatInactive, 1e-7};
    const QpGradients g = qp_backward(prob, sol, Vec{1.0, 0.0}, inactive);
    CHECK(g.dq[0] == doctest::Approx(-1.0));
    CHECK(g.dh[0] == 0.0);
}
