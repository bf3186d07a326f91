#include "optode/certificates.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "optode/errors.hpp"

namespace optode {

namespace {

constexpr double kVanishingRow = 1e-12;

// psi1(y) = L_f B(y) + k1 B(y), evaluated on the scalar type of y.
template <class T>
struct FirstLevelChain {
    const ControlAffineSystem& sys;
    const ScalarField& B;
    T k1;
    double t;

    template <class S>
    S operator()(std::span<const S> y) const {
        std::vector<S> fy(y.size());
        sys.drift(y, t, std::span<S>(fy));
        return lie_derivative<S>(B, y, std::span<const S>(fy)) + S{k1} * B.eval(y);
    }
};

template <class T>
double row_scale(std::span<const T> lg) {
    double s = 0.0;
    for (const T& v : lg) s += primal(v) * primal(v);
    return std::sqrt(s);
}

// Rows G (row-major p x m) and h for every barrier, on scalar type T.
template <class T>
void rows_t(const SafetyFilterSpec& spec, std::span<const T> x, std::span<const T> kappa, double t,
            std::span<T> G, std::span<T> h) {
    const ControlAffineSystem& sys = *spec.system;
    const std::size_t n = sys.state_dim();
    const std::size_t m = sys.control_dim();
    std::vector<T> f(n), g(n * m), col(n), lg(m);
    sys.drift(x, t, std::span<T>(f));
    sys.input_matrix(x, t, std::span<T>(g));

    for (std::size_t i = 0; i < spec.barriers.size(); ++i) {
        const Barrier& bar = spec.barriers[i];
        const std::size_t off = spec.kappa_offset(i);
        T lf{}, value{};
        if (bar.relative_degree == 1) {
            lf = lie_derivative<T>(*bar.B, x, std::span<const T>(f));
            for (std::size_t j = 0; j < m; ++j) {
                for (std::size_t r = 0; r < n; ++r) col[r] = g[r * m + j];
                lg[j] = lie_derivative<T>(*bar.B, x, std::span<const T>(col));
            }
            value = bar.B->eval(x);
            h[i] = lf + kappa[off] * value;
        } else if (bar.relative_degree == 2) {
            for (std::size_t j = 0; j < m; ++j) {
                for (std::size_t r = 0; r < n; ++r) col[r] = g[r * m + j];
                lg[j] = lie_derivative<T>(*bar.B, x, std::span<const T>(col));
            }
            if (row_scale<T>(lg) >= kVanishingRow)
                throw RelativeDegreeMismatch("barrier '" + bar.name +
                                             "': control enters the first derivative, relative degree is 1");
            const FirstLevelChain<T> psi1{sys, *bar.B, kappa[off], t};
            lf = directional_derivative<T>(psi1, x, std::span<const T>(f));
            for (std::size_t j = 0; j < m; ++j) {
                for (std::size_t r = 0; r < n; ++r) col[r] = g[r * m + j];
                lg[j] = directional_derivative<T>(psi1, x, std::span<const T>(col));
            }
            value = psi1(x);
            h[i] = lf + kappa[off + 1] * value;
        } else {
            throw std::invalid_argument("barrier '" + bar.name + "': relative degree must be 1 or 2");
        }
        if (row_scale<T>(lg) < kVanishingRow)
            throw RelativeDegreeMismatch("barrier '" + bar.name + "': control row vanishes at relative degree " +
                                         std::to_string(bar.relative_degree));
        for (std::size_t j = 0; j < m; ++j) G[i * m + j] = -lg[j];
    }
}

void require_degree(const SafetyFilterSpec& spec, int degree) {
    for (const Barrier& b : spec.barriers)
        if (b.relative_degree != degree)
            throw RelativeDegreeMismatch("barrier '" + b.name + "' has relative degree " +
                                        std::to_string(b.relative_degree) + ", expected " + std::to_string(degree));
}

}  // namespace

std::size_t SafetyFilterSpec::kappa_count() const { return kappa_offset(barriers.size()); }

std::size_t SafetyFilterSpec::kappa_offset(std::size_t barrier) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < barrier; ++i) off += static_cast<std::size_t>(barriers[i].relative_degree);
    return off;
}

void SafetyFilterSpec::validate() const {
    if (!system) throw std::invalid_argument("SafetyFilterSpec: missing system");
    if (class_k.size() != kappa_count())
        throw std::invalid_argument("SafetyFilterSpec: expected " + std::to_string(kappa_count()) +
                                    " class-K coefficients, got " + std::to_string(class_k.size()));
}

CbfRows build_rows(const SafetyFilterSpec& spec, std::span<const double> x, double t) {
    spec.validate();
    const std::size_t p = spec.num_rows();
    const std::size_t m = spec.system->control_dim();
    CbfRows rows{Mat(p, m), Vec(p)};
    const Vec kappa = spec.class_k.kappas();
    rows_t<double>(spec, x, kappa, t, rows.G.data(), rows.h);
    return rows;
}

CbfRows build_cbf_rows(const SafetyFilterSpec& spec, std::span<const double> x, double t) {
    require_degree(spec, 1);
    return build_rows(spec, x, t);
}

CbfRows build_hocbf_rows(const SafetyFilterSpec& spec, std::span<const double> x, double t) {
    require_degree(spec, 2);
    return build_rows(spec, x, t);
}

CbfRowJacobians build_rows_jacobians(const SafetyFilterSpec& spec, std::span<const double> x, double t) {
    spec.validate();
    const std::size_t n = spec.system->state_dim();
    const std::size_t m = spec.system->control_dim();
    const std::size_t p = spec.num_rows();
    const std::size_t k = spec.kappa_count();
    const Vec kappa = spec.class_k.kappas();

    CbfRowJacobians jac{Mat(p * m, n), Mat(p, n), Mat(p * m, k), Mat(p, k)};
    std::vector<D1> xs(n), ks(k), G(p * m), h(p);
    // One forward pass per state coordinate and per class-K coefficient;
    // d kappa / d theta2 = kappa.
    for (std::size_t s = 0; s < n + k; ++s) {
        for (std::size_t i = 0; i < n; ++i) xs[i] = D1(x[i], s == i ? 1.0 : 0.0);
        for (std::size_t j = 0; j < k; ++j) ks[j] = D1(kappa[j], s == n + j ? kappa[j] : 0.0);
        rows_t<D1>(spec, xs, ks, t, std::span<D1>(G), std::span<D1>(h));
        Mat& dG = s < n ? jac.dG_dx : jac.dG_dtheta2;
        Mat& dh = s < n ? jac.dh_dx : jac.dh_dtheta2;
        const std::size_t c = s < n ? s : s - n;
        for (std::size_t r = 0; r < p * m; ++r) dG(r, c) = G[r].d;
        for (std::size_t r = 0; r < p; ++r) dh(r, c) = h[r].d;
    }
    return jac;
}

Vec barrier_values(const SafetyFilterSpec& spec, std::span<const double> x) {
    Vec b(spec.barriers.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = spec.barriers[i].value(x);
    return b;
}

FilterResult safety_filter(const SafetyFilterSpec& spec, const MlpPolicy& policy, std::span<const double> x,
                           double t, double tol) {
    FilterResult res;
    res.u_nn = policy.forward(x);
    if (!all_finite(res.u_nn)) throw NonFiniteState("non-finite policy output", -1);
    const std::size_t m = res.u_nn.size();
    if (spec.system && m != spec.system->control_dim())
        throw std::invalid_argument("safety_filter: policy output does not match control dimension");
    res.problem.Q = Mat::identity(m);
    res.problem.q = scaled(res.u_nn, -1.0);
    res.problem.A = Mat(0, m);
    if (spec.barriers.empty() || !spec.enabled) {
        res.problem.G = Mat(0, m);
        res.u_safe = res.u_nn;
        res.sol.u_star = res.u_nn;
        return res;
    }
    CbfRows rows = build_rows(spec, x, t);
    if (!all_finite(rows.G.data()) || !all_finite(rows.h)) throw NonFiniteState("non-finite constraint data", -1);
    res.problem.G = std::move(rows.G);
    res.problem.h = std::move(rows.h);
    res.sol = qp_solve(res.problem, tol);
    res.u_safe = res.sol.u_star;
    return res;
}

double clf_pointwise_loss(const Lyapunov& lyap, std::span<const double> x, std::span<const double> xdot) {
    const double arg = lie_derivative<double>(*lyap.V, x, xdot) + lyap.gamma * lyap.value(x);
    return relu(arg);
}

double clf_trajectory_loss(const Lyapunov& lyap, const Trajectory& traj) {
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < traj.size(); ++k)
        total += clf_pointwise_loss(lyap, traj.states[k], traj.xdot[k]) * (traj.times[k + 1] - traj.times[k]);
    return total;
}

double clf_trajectory_loss(const Lyapunov& lyap, std::span<const Trajectory> batch) {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    for (const Trajectory& tr : batch) total += clf_trajectory_loss(lyap, tr);
    return total / static_cast<double>(batch.size());
}

}  // namespace optode
