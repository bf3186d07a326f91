#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace optode {

using Vec = std::vector<double>;

/// Dense row-major matrix. Sizes in this project are tiny (state <= 10,
/// control <= 2, constraints <= 2), so no blocking or sparsity.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
    Mat(std::initializer_list<std::initializer_list<double>> rows);

    static Mat identity(std::size_t n);
    static Mat from_rows(std::size_t rows, std::size_t cols, Vec data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const Vec& data() const { return data_; }
    Vec& data() { return data_; }

    Mat transposed() const;

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

Mat operator*(const Mat& a, const Mat& b);
Vec operator*(const Mat& a, std::span<const double> v);
Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(double s, const Mat& a);

/// v^T * M
Vec vec_mat(std::span<const double> v, const Mat& m);
Mat outer(std::span<const double> a, std::span<const double> b);
Mat diag(std::span<const double> d);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double norm_inf(std::span<const double> v);
Vec add(std::span<const double> a, std::span<const double> b);
Vec sub(std::span<const double> a, std::span<const double> b);
Vec scaled(std::span<const double> a, double s);
/// y += s * x
void axpy(double s, std::span<const double> x, std::span<double> y);
bool all_finite(std::span<const double> v);
double max_abs(const Mat& m);

/// Solves M s = r with partial pivoting. Throws SingularMatrix when a pivot
/// falls below `pivot_tol` in magnitude.
Vec solve_linear(const Mat& m, std::span<const double> r, double pivot_tol = 1e-12);

/// Same factorization applied to several right-hand sides (columns of R).
Mat solve_linear(const Mat& m, const Mat& r, double pivot_tol = 1e-12);

/// Kronecker product, shape (rA*rB, cA*cB).
Mat kron(const Mat& a, const Mat& b);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(v+eps e_i) - f(v-eps e_i)) / (2 eps).
Vec finite_diff_grad(const ScalarFn& f, std::span<const double> v, double eps);

/// Central-difference Jacobian of a vector function, shape (len(f(v)), len(v)).
Mat finite_diff_jacobian(const std::function<Vec(std::span<const double>)>& f,
                         std::span<const double> v, double eps);

/// max_i |a_i - b_i| / max(floor, max_i |b_i|)
double rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

}  // namespace optode
