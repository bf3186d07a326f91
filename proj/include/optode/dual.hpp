#pragma once

#include <cmath>
#include <type_traits>

namespace optode {

/// Forward-mode dual number v + d*eps. Nests (Dual<Dual<double>>) for
/// higher derivatives; each level carries one tangent direction.
template <class T>
struct Dual {
    T v{};
    T d{};

    constexpr Dual() = default;
    constexpr Dual(double value) : v(value), d(0.0) {}  // NOLINT: implicit lift of constants
    constexpr Dual(T value, T tangent) : v(value), d(tangent) {}
    constexpr explicit Dual(const T& value)
        requires(!std::is_same_v<T, double>)
        : v(value), d(0.0) {}
};

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

/// Value with every tangent stripped.
inline double primal(double x) { return x; }
template <class T>
double primal(const Dual<T>& x) {
    return primal(x.v);
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
    return {a.v + b.v, a.d + b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
    return {a.v - b.v, a.d - b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
    return {-a.v, -a.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
    const T inv = T(1.0) / b.v;
    return {a.v * inv, (a.d - a.v * inv * b.d) * inv};
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double b) { return {a.v + b, a.d}; }
template <class T>
Dual<T> operator+(double a, const Dual<T>& b) { return {a + b.v, b.d}; }
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) { return {a.v - b, a.d}; }
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) { return {a - b.v, -b.d}; }
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) { return {a.v * b, a.d * b}; }
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) { return {a * b.v, a * b.d}; }
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) { return {a.v / b, a.d / b}; }
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(a) / b; }

template <class T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) { return a = a + b; }
template <class T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) { return a = a - b; }
template <class T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) { return a = a * b; }

template <class T>
bool operator<(const Dual<T>& a, const Dual<T>& b) { return primal(a) < primal(b); }
template <class T>
bool operator<(const Dual<T>& a, double b) { return primal(a) < b; }
template <class T>
bool operator<(double a, const Dual<T>& b) { return a < primal(b); }
template <class T>
bool operator>(const Dual<T>& a, double b) { return primal(a) > b; }
template <class T>
bool operator>(double a, const Dual<T>& b) { return a > primal(b); }

using std::abs;
using std::cos;
using std::exp;
using std::sin;
using std::sqrt;

template <class T>
Dual<T> sin(const Dual<T>& a) {
    return {sin(a.v), cos(a.v) * a.d};
}
template <class T>
Dual<T> cos(const Dual<T>& a) {
    return {cos(a.v), -sin(a.v) * a.d};
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
    const T e = exp(a.v);
    return {e, e * a.d};
}
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
    const T s = sqrt(a.v);
    return {s, a.d / (2.0 * s)};
}
/// Derivative of |x| taken as sign(x), 0 at the kink.
template <class T>
Dual<T> abs(const Dual<T>& a) {
    const double p = primal(a);
    if (p > 0.0) return a;
    if (p < 0.0) return -a;
    return {abs(a.v), T(0.0) * a.d};
}

/// max(0, a) with subgradient 0 at the kink.
inline double relu(double a) { return a > 0.0 ? a : 0.0; }
template <class T>
Dual<T> relu(const Dual<T>& a) {
    return primal(a) > 0.0 ? a : Dual<T>(0.0);
}

}  // namespace optode
