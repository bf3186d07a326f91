#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "optode/numerics.hpp"

namespace optode {

/// Fully connected controller u_nn = pi(x; theta1): tanh hidden layers,
/// identity output. theta1 stores, per layer, W (rows = fan_out, row-major)
/// followed by b.
class MlpPolicy {
public:
    MlpPolicy() = default;
    /// All parameters zero.
    explicit MlpPolicy(std::vector<std::size_t> layer_dims);
    MlpPolicy(std::vector<std::size_t> layer_dims, Vec theta1);

    /// Weights and biases uniform in +-1/sqrt(fan_in).
    static MlpPolicy initialized(std::vector<std::size_t> layer_dims, std::uint64_t seed);

    static std::size_t param_count(std::span<const std::size_t> layer_dims);

    const std::vector<std::size_t>& layer_dims() const { return dims_; }
    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }
    std::size_t num_params() const { return theta_.size(); }

    const Vec& theta() const { return theta_; }
    Vec& theta() { return theta_; }

    Vec forward(std::span<const double> x) const;

    struct Vjp {
        Vec d_theta;
        Vec d_x;
    };
    /// cotangent' * d pi / d(theta, x)
    Vjp vjp(std::span<const double> x, std::span<const double> cotangent) const;

private:
    std::vector<std::size_t> dims_;
    Vec theta_;
};

Vec policy_forward(const MlpPolicy& p, std::span<const double> x);
/// d pi / d x, shape (control_dim, state_dim).
Mat policy_jacobian_x(const MlpPolicy& p, std::span<const double> x);
/// cotangent' * d pi / d theta1, length num_params().
Vec policy_grad_theta(const MlpPolicy& p, std::span<const double> x, std::span<const double> cotangent);
/// d pi / d theta1, shape (control_dim, num_params()).
Mat policy_jacobian_theta(const MlpPolicy& p, std::span<const double> x);

/// Linear class-K functions alpha_i(B) = kappa_i * B with kappa_i = exp(theta2_i).
struct ClassKParams {
    Vec theta2;

    static ClassKParams from_kappas(std::span<const double> kappas);

    std::size_t size() const { return theta2.size(); }
    double kappa(std::size_t i) const;
    Vec kappas() const;
};

double class_k_apply(const ClassKParams& ck, std::size_t i, double b_val);
/// d alpha_i(B) / d theta2_i = kappa_i * B.
double class_k_dtheta(const ClassKParams& ck, std::size_t i, double b_val);

}  // namespace optode
