#pragma once

#include <cstddef>
#include <span>

#include "optode/dual.hpp"
#include "optode/numerics.hpp"

namespace optode {

/// Scalar function of the state (barrier, Lyapunov candidate), evaluable on
/// doubles and on up to three nested dual levels so that Lie derivatives and
/// their state Jacobians come out exact.
class ScalarField {
public:
    virtual ~ScalarField() = default;
    virtual std::size_t dim() const = 0;
    virtual double eval(std::span<const double> x) const = 0;
    virtual D1 eval(std::span<const D1> x) const = 0;
    virtual D2 eval(std::span<const D2> x) const = 0;
    virtual D3 eval(std::span<const D3> x) const = 0;
};

/// Adapter: `Fn` provides `template <class T> T operator()(std::span<const T>) const`.
template <class Fn>
class ScalarFieldModel final : public ScalarField {
public:
    ScalarFieldModel(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
    std::size_t dim() const override { return dim_; }
    double eval(std::span<const double> x) const override { return fn_(x); }
    D1 eval(std::span<const D1> x) const override { return fn_(x); }
    D2 eval(std::span<const D2> x) const override { return fn_(x); }
    D3 eval(std::span<const D3> x) const override { return fn_(x); }
    const Fn& fn() const { return fn_; }

private:
    std::size_t dim_;
    Fn fn_;
};

/// x' = f(x, t) + g(x, t) u.
class ControlAffineSystem {
public:
    virtual ~ControlAffineSystem() = default;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t control_dim() const = 0;

    // g is written row-major, state_dim x control_dim.
    virtual void drift(std::span<const double> x, double t, std::span<double> f) const = 0;
    virtual void drift(std::span<const D1> x, double t, std::span<D1> f) const = 0;
    virtual void drift(std::span<const D2> x, double t, std::span<D2> f) const = 0;
    virtual void drift(std::span<const D3> x, double t, std::span<D3> f) const = 0;
    virtual void input_matrix(std::span<const double> x, double t, std::span<double> g) const = 0;
    virtual void input_matrix(std::span<const D1> x, double t, std::span<D1> g) const = 0;
    virtual void input_matrix(std::span<const D2> x, double t, std::span<D2> g) const = 0;
    virtual void input_matrix(std::span<const D3> x, double t, std::span<D3> g) const = 0;

    Vec f(std::span<const double> x, double t) const;
    Mat g(std::span<const double> x, double t) const;
    /// f(x,t) + g(x,t) u
    Vec closed_loop(std::span<const double> x, std::span<const double> u, double t) const;
    /// d f / d x
    Mat jacobian_f(std::span<const double> x, double t) const;
    /// d (g(x) u) / d x at fixed u
    Mat jacobian_gu(std::span<const double> x, std::span<const double> u, double t) const;
};

/// Adapter: `Derived` provides templated `drift_t` and `input_matrix_t`.
template <class Derived>
class ControlAffineModel : public ControlAffineSystem {
public:
    void drift(std::span<const double> x, double t, std::span<double> f) const override { self().drift_t(x, t, f); }
    void drift(std::span<const D1> x, double t, std::span<D1> f) const override { self().drift_t(x, t, f); }
    void drift(std::span<const D2> x, double t, std::span<D2> f) const override { self().drift_t(x, t, f); }
    void drift(std::span<const D3> x, double t, std::span<D3> f) const override { self().drift_t(x, t, f); }
    void input_matrix(std::span<const double> x, double t, std::span<double> g) const override {
        self().input_matrix_t(x, t, g);
    }
    void input_matrix(std::span<const D1> x, double t, std::span<D1> g) const override { self().input_matrix_t(x, t, g); }
    void input_matrix(std::span<const D2> x, double t, std::span<D2> g) const override { self().input_matrix_t(x, t, g); }
    void input_matrix(std::span<const D3> x, double t, std::span<D3> g) const override { self().input_matrix_t(x, t, g); }

private:
    const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// Gradient of a scalar field (one forward pass per coordinate).
Vec field_gradient(const ScalarField& s, std::span<const double> x);
Mat field_hessian(const ScalarField& s, std::span<const double> x);

/// Directional derivative d/ds phi(x + s*dir) at s = 0, for any scalar type
/// with a dual level available above it.
template <class T, class Phi>
T directional_derivative(const Phi& phi, std::span<const T> x, std::span<const T> dir) {
    std::vector<Dual<T>> xs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xs[i] = Dual<T>(x[i], dir[i]);
    return phi(std::span<const Dual<T>>(xs)).d;
}

/// Lie derivative of a scalar field along a vector field value.
template <class T>
T lie_derivative(const ScalarField& s, std::span<const T> x, std::span<const T> dir) {
    return directional_derivative<T>([&s](auto xs) { return s.eval(xs); }, x, dir);
}

}  // namespace optode
