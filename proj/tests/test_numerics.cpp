#include <doctest.h>

#include <cmath>

#include "optode/errors.hpp"
#include "optode/numerics.hpp"
#include "support.hpp"

using namespace optode;
using testing::Gen;

TEST_CASE("solve_linear on identity and diagonal systems") {
    CHECK(solve_linear(Mat::identity(2), Vec{3.0, -1.0}) == Vec{3.0, -1.0});
    const Vec s = solve_linear(Mat{{2, 0}, {0, 4}}, Vec{2.0, 8.0});
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] == doctest::Approx(2.0));
}

TEST_CASE("solve_linear residual on random well-conditioned systems") {
    Gen gen(1);
    for (int trial = 0; trial < 50; ++trial) {
        Mat m = gen.mat(5, 5);
        for (std::size_t i = 0; i < 5; ++i) m(i, i) += 4.0;
        const Vec r = gen.vec(5, -10, 10);
        const Vec s = solve_linear(m, r);
        CHECK(norm_inf(sub(m * s, r)) <= 1e-9 * (1.0 + norm_inf(r)));
    }
}

TEST_CASE("solve_linear then multiply is the identity up to conditioning") {
    Gen gen(2);
    for (int trial = 0; trial < 50; ++trial) {
        // m = U diag(d) V with orthogonal-ish factors replaced by a
        // controlled spectrum: a diagonal scaled by up to 1e5, then mixed.
        const std::size_t n = 4;
        Mat d(n, n);
        for (std::size_t i = 0; i < n; ++i) d(i, i) = std::pow(10.0, gen.uniform(0.0, 5.0));
        Mat mix = Mat::identity(n);
        mix(0, 1) = gen.uniform(-1, 1);
        mix(2, 3) = gen.uniform(-1, 1);
        const Mat m = mix * d;
        const Vec x = gen.vec(n);
        const Vec back = solve_linear(m, m * x);
        CHECK(rel_error(back, x) <= 1e-8);
    }
}

TEST_CASE("solve_linear rejects singular systems") {
    CHECK_THROWS_AS(solve_linear(Mat{{1, 2}, {2, 4}}, Vec{1.0, 2.0}), SingularMatrix);
    CHECK_THROWS_AS(solve_linear(Mat{{1e-13, 0}, {0, 1}}, Vec{1.0, 1.0}), SingularMatrix);
}

TEST_CASE("solve_linear with several right-hand sides") {
    const Mat m{{4, 1}, {2, 3}};
    const Mat inv = solve_linear(m, Mat::identity(2));
    const Mat id = m * inv;
    CHECK(max_abs(id - Mat::identity(2)) < 1e-14);
}

TEST_CASE("kron examples") {
    const Mat m{{1, 2, 3}, {4, 5, 6}};
    CHECK(kron(Mat::identity(1), m) == m);
    CHECK(kron(Mat{{1, 2}}, Mat{{0}, {3}}) == Mat{{0, 0}, {3, 6}});
    const Mat big = kron(Mat(2, 3, 1.0), Mat(4, 5, 1.0));
    CHECK(big.rows() == 8);
    CHECK(big.cols() == 15);
}

TEST_CASE("kron mixed-product property") {
    Gen gen(3);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = trial % 2 ? 2 : 3;
        const Mat a = gen.mat(n, n), b = gen.mat(n, n), c = gen.mat(n, n), d = gen.mat(n, n);
        const Mat lhs = kron(a, b) * kron(c, d);
        const Mat rhs = kron(a * c, b * d);
        CHECK(max_abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("finite_diff_grad examples") {
    const Vec g = finite_diff_grad([](std::span<const double> v) { return 0.5 * dot(v, v); }, Vec{1.0, -2.0}, 1e-5);
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(-2.0).epsilon(1e-6));

    const Vec z = finite_diff_grad([](std::span<const double>) { return 7.0; }, Vec{0.3, 0.4, 0.5}, 1e-3);
    CHECK(z == Vec{0.0, 0.0, 0.0});

    const Vec c = finite_diff_grad([](std::span<const double> v) { return std::sin(v[0]); }, Vec{0.0}, 1e-5);
    CHECK(c[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("finite_diff_grad error is second order on cubics") {
    // f = x^3 + 2 x y^2 - y ; central difference error = eps^2 * f'''/6 per axis
    auto f = [](std::span<const double> v) { return v[0] * v[0] * v[0] + 2 * v[0] * v[1] * v[1] - v[1]; };
    const Vec v{0.7, -1.3};
    const Vec exact{3 * v[0] * v[0] + 2 * v[1] * v[1], 4 * v[0] * v[1] - 1.0};
    const double e1 = norm_inf(sub(finite_diff_grad(f, v, 1e-2), exact));
    const double e2 = norm_inf(sub(finite_diff_grad(f, v, 1e-3), exact));
    CHECK(e1 == doctest::Approx(1e-4).epsilon(1e-3));  // x-axis: eps^2 * 6 / 6
    CHECK(e2 < e1 / 50.0);
}

TEST_CASE("finite_diff_jacobian matches a linear map") {
    const Mat a{{1, 2, 3}, {-1, 0, 4}};
    const Mat j = finite_diff_jacobian([&](std::span<const double> v) { return a * v; }, Vec{0.1, 0.2, 0.3}, 1e-6);
    CHECK(max_abs(j - a) < 1e-8);
}

TEST_CASE("matrix helpers") {
    const Mat a{{1, 2}, {3, 4}};
    CHECK(a.transposed() == Mat{{1, 3}, {2, 4}});
    CHECK(vec_mat(Vec{1.0, 1.0}, a) == Vec{4.0, 6.0});
    CHECK(outer(Vec{1.0, 2.0}, Vec{3.0}) == Mat{{3}, {6}});
    CHECK(diag(Vec{2.0, 5.0}) == Mat{{2, 0}, {0, 5}});
    CHECK(rel_error(Vec{1.0, 2.0}, Vec{1.0, 2.5}) == doctest::Approx(0.2));
    CHECK_FALSE(all_finite(Vec{1.0, NAN}));
    CHECK_THROWS_AS(Mat::from_rows(2, 2, Vec{1.0}), std::invalid_argument);
}
