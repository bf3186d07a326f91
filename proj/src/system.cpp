#include "optode/system.hpp"

#include <stdexcept>
#include <vector>

namespace optode {

Vec ControlAffineSystem::f(std::span<const double> x, double t) const {
    Vec out(state_dim());
    drift(x, t, out);
    return out;
}

Mat ControlAffineSystem::g(std::span<const double> x, double t) const {
    Mat out(state_dim(), control_dim());
    input_matrix(x, t, out.data());
    return out;
}

Vec ControlAffineSystem::closed_loop(std::span<const double> x, std::span<const double> u, double t) const {
    if (u.size() != control_dim()) throw std::invalid_argument("closed_loop: control size mismatch");
    Vec xdot = f(x, t);
    const Mat gm = g(x, t);
    for (std::size_t i = 0; i < state_dim(); ++i) xdot[i] += dot(gm.row(i), u);
    return xdot;
}

namespace {

std::vector<D1> seeded(std::span<const double> x, std::size_t k) {
    std::vector<D1> xs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xs[i] = D1(x[i], i == k ? 1.0 : 0.0);
    return xs;
}

}  // namespace

Mat ControlAffineSystem::jacobian_f(std::span<const double> x, double t) const {
    const std::size_t n = state_dim();
    Mat jac(n, n);
    std::vector<D1> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto xs = seeded(x, k);
        drift(std::span<const D1>(xs), t, std::span<D1>(out));
        for (std::size_t i = 0; i < n; ++i) jac(i, k) = out[i].d;
    }
    return jac;
}

Mat ControlAffineSystem::jacobian_gu(std::span<const double> x, std::span<const double> u, double t) const {
    const std::size_t n = state_dim();
    const std::size_t m = control_dim();
    Mat jac(n, n);
    std::vector<D1> gm(n * m);
    for (std::size_t k = 0; k < n; ++k) {
        const auto xs = seeded(x, k);
        input_matrix(std::span<const D1>(xs), t, std::span<D1>(gm));
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += gm[i * m + j].d * u[j];
            jac(i, k) = s;
        }
    }
    return jac;
}

Vec field_gradient(const ScalarField& s, std::span<const double> x) {
    Vec grad(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const auto xs = seeded(x, k);
        grad[k] = s.eval(std::span<const D1>(xs)).d;
    }
    return grad;
}

Mat field_hessian(const ScalarField& s, std::span<const double> x) {
    const std::size_t n = x.size();
    Mat hess(n, n);
    std::vector<D2> xs(n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t i = 0; i < n; ++i)
                xs[i] = D2(D1(x[i], i == a ? 1.0 : 0.0), D1(i == b ? 1.0 : 0.0, 0.0));
            hess(a, b) = s.eval(std::span<const D2>(xs)).d.d;
        }
    return hess;
}

}  // namespace optode
