#include "optode/numerics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "optode/errors.hpp"

namespace optode {

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw std::invalid_argument("Mat: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::from_rows(std::size_t rows, std::size_t cols, Vec data) {
    if (data.size() != rows * cols) throw std::invalid_argument("Mat::from_rows: size mismatch");
    Mat m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
}

Mat Mat::transposed() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("Mat*Mat: shape mismatch");
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

Vec operator*(const Mat& a, std::span<const double> v) {
    if (a.cols() != v.size()) throw std::invalid_argument("Mat*Vec: shape mismatch");
    Vec out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), v);
    return out;
}

Mat operator+(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("Mat+Mat: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Mat operator-(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("Mat-Mat: shape mismatch");
    Mat c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Mat operator*(double s, const Mat& a) {
    Mat c = a;
    for (auto& x : c.data()) x *= s;
    return c;
}

Vec vec_mat(std::span<const double> v, const Mat& m) {
    if (m.rows() != v.size()) throw std::invalid_argument("vec_mat: shape mismatch");
    Vec out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) axpy(v[i], m.row(i), out);
    return out;
}

Mat outer(std::span<const double> a, std::span<const double> b) {
    Mat m(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
    return m;
}

Mat diag(std::span<const double> d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double norm_inf(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

Vec add(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    Vec out(a.begin(), a.end());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
    return out;
}

Vec sub(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    Vec out(a.begin(), a.end());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
    return out;
}

Vec scaled(std::span<const double> a, double s) {
    Vec out(a.begin(), a.end());
    for (auto& x : out) x *= s;
    return out;
}

void axpy(double s, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double max_abs(const Mat& m) { return norm_inf(m.data()); }

namespace {

struct LuFactor {
    Mat lu;
    std::vector<std::size_t> perm;
};

LuFactor lu_factor(const Mat& m, double pivot_tol) {
    if (m.rows() != m.cols()) throw std::invalid_argument("solve_linear: matrix not square");
    const std::size_t n = m.rows();
    LuFactor f{m, std::vector<std::size_t>(n)};
    std::iota(f.perm.begin(), f.perm.end(), 0);
    Mat& a = f.lu;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (std::abs(a(piv, k)) < pivot_tol)
            throw SingularMatrix("solve_linear: pivot " + std::to_string(a(piv, k)) + " at column " +
                                 std::to_string(k));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(f.perm[k], f.perm[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double l = a(i, k) / a(k, k);
            a(i, k) = l;
            if (l == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= l * a(k, j);
        }
    }
    return f;
}

Vec lu_solve(const LuFactor& f, std::span<const double> r) {
    const std::size_t n = f.lu.rows();
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = r[f.perm[i]];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) x[i] -= f.lu(i, j) * x[j];
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = i + 1; j < n; ++j) x[i] -= f.lu(i, j) * x[j];
        x[i] /= f.lu(i, i);
    }
    return x;
}

}  // namespace

Vec solve_linear(const Mat& m, std::span<const double> r, double pivot_tol) {
    if (r.size() != m.rows()) throw std::invalid_argument("solve_linear: rhs size mismatch");
    return lu_solve(lu_factor(m, pivot_tol), r);
}

Mat solve_linear(const Mat& m, const Mat& r, double pivot_tol) {
    if (r.rows() != m.rows()) throw std::invalid_argument("solve_linear: rhs size mismatch");
    const LuFactor f = lu_factor(m, pivot_tol);
    Mat out(r.rows(), r.cols());
    Vec col(r.rows());
    for (std::size_t j = 0; j < r.cols(); ++j) {
        for (std::size_t i = 0; i < r.rows(); ++i) col[i] = r(i, j);
        const Vec s = lu_solve(f, col);
        for (std::size_t i = 0; i < r.rows(); ++i) out(i, j) = s[i];
    }
    return out;
}

Mat kron(const Mat& a, const Mat& b) {
    Mat k(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            for (std::size_t p = 0; p < b.rows(); ++p)
                for (std::size_t q = 0; q < b.cols(); ++q)
                    k(i * b.rows() + p, j * b.cols() + q) = aij * b(p, q);
        }
    return k;
}

Vec finite_diff_grad(const ScalarFn& f, std::span<const double> v, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Vec x(v.begin(), v.end());
    Vec g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + eps;
        const double fp = f(x);
        x[i] = xi - eps;
        const double fm = f(x);
        x[i] = xi;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

Mat finite_diff_jacobian(const std::function<Vec(std::span<const double>)>& f,
                         std::span<const double> v, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_jacobian: eps must be positive");
    Vec x(v.begin(), v.end());
    Mat jac;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + eps;
        const Vec fp = f(x);
        x[i] = xi - eps;
        const Vec fm = f(x);
        x[i] = xi;
        if (i == 0) jac = Mat(fp.size(), v.size());
        for (std::size_t r = 0; r < fp.size(); ++r) jac(r, i) = (fp[r] - fm[r]) / (2.0 * eps);
    }
    return jac;
}

double rel_error(std::span<const double> a, std::span<const double> b, double floor) {
    assert(a.size() == b.size());
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) num = std::max(num, std::abs(a[i] - b[i]));
    return num / std::max(floor, norm_inf(b));
}

}  // namespace optode
