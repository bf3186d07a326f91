#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <span>

#include "optode/numerics.hpp"
#include "optode/system.hpp"

namespace testing {

using optode::Mat;
using optode::Vec;

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    std::size_t index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    }
    Vec vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
        Vec v(n);
        for (auto& e : v) e = uniform(lo, hi);
        return v;
    }
    Mat mat(std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
        Mat m(r, c);
        for (auto& e : m.data()) e = uniform(lo, hi);
        return m;
    }
    // Symmetric positive definite with eigenvalues roughly in [shift, shift + n].
    Mat spd(std::size_t n, double shift = 0.5) {
        const Mat a = mat(n, n);
        Mat q = a * a.transposed();
        for (std::size_t i = 0; i < n; ++i) q(i, i) += shift;
        return q;
    }
};

// x' = u
class SingleIntegrator final : public optode::ControlAffineModel<SingleIntegrator> {
public:
    explicit SingleIntegrator(std::size_t n) : n_(n) {}
    std::size_t state_dim() const override { return n_; }
    std::size_t control_dim() const override { return n_; }
    template <class T>
    void drift_t(std::span<const T>, double, std::span<T> f) const {
        for (auto& v : f) v = T(0.0);
    }
    template <class T>
    void input_matrix_t(std::span<const T>, double, std::span<T> g) const {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) g[i * n_ + j] = T(i == j ? 1.0 : 0.0);
    }

private:
    std::size_t n_;
};

// x1' = x2, x2' = u
class DoubleIntegrator final : public optode::ControlAffineModel<DoubleIntegrator> {
public:
    std::size_t state_dim() const override { return 2; }
    std::size_t control_dim() const override { return 1; }
    template <class T>
    void drift_t(std::span<const T> x, double, std::span<T> f) const {
        f[0] = x[1];
        f[1] = T(0.0);
    }
    template <class T>
    void input_matrix_t(std::span<const T>, double, std::span<T> g) const {
        g[0] = T(0.0);
        g[1] = T(1.0);
    }
};

// Nonlinear 2-state, 1-input plant with state-dependent g, for gradient checks.
class Pendulumish final : public optode::ControlAffineModel<Pendulumish> {
public:
    std::size_t state_dim() const override { return 2; }
    std::size_t control_dim() const override { return 1; }
    template <class T>
    void drift_t(std::span<const T> x, double, std::span<T> f) const {
        using std::sin;
        f[0] = x[1];
        f[1] = -0.5 * sin(x[0]) - 0.1 * x[1];
    }
    template <class T>
    void input_matrix_t(std::span<const T> x, double, std::span<T> g) const {
        using std::cos;
        g[0] = T(0.0);
        g[1] = 1.0 + 0.2 * cos(x[0]);
    }
};

// x' = A x + B u with constant matrices.
class LinearSystem final : public optode::ControlAffineModel<LinearSystem> {
public:
    LinearSystem(Mat a, Mat b) : a_(std::move(a)), b_(std::move(b)) {}
    std::size_t state_dim() const override { return a_.rows(); }
    std::size_t control_dim() const override { return b_.cols(); }
    template <class T>
    void drift_t(std::span<const T> x, double, std::span<T> f) const {
        for (std::size_t i = 0; i < a_.rows(); ++i) {
            T s(0.0);
            for (std::size_t j = 0; j < a_.cols(); ++j) s = s + a_(i, j) * x[j];
            f[i] = s;
        }
    }
    template <class T>
    void input_matrix_t(std::span<const T>, double, std::span<T> g) const {
        for (std::size_t i = 0; i < b_.data().size(); ++i) g[i] = T(b_.data()[i]);
    }

private:
    Mat a_, b_;
};

template <class Fn>
std::shared_ptr<const optode::ScalarField> field(std::size_t dim, Fn fn) {
    return std::make_shared<optode::ScalarFieldModel<Fn>>(dim, std::move(fn));
}

}  // namespace testing
