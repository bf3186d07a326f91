#include "optode/policy.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace optode {

namespace {

void check_dims(std::span<const std::size_t> dims) {
    if (dims.size() < 2) throw std::invalid_argument("MlpPolicy: need at least input and output dims");
    for (std::size_t d : dims)
        if (d == 0) throw std::invalid_argument("MlpPolicy: layer dims must be positive");
}

}  // namespace

std::size_t MlpPolicy::param_count(std::span<const std::size_t> dims) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l] * dims[l + 1] + dims[l + 1];
    return n;
}

MlpPolicy::MlpPolicy(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
    check_dims(dims_);
    theta_.assign(param_count(dims_), 0.0);
}

MlpPolicy::MlpPolicy(std::vector<std::size_t> layer_dims, Vec theta1)
    : dims_(std::move(layer_dims)), theta_(std::move(theta1)) {
    check_dims(dims_);
    if (theta_.size() != param_count(dims_))
        throw std::invalid_argument("MlpPolicy: theta1 length does not match layer dims");
}

MlpPolicy MlpPolicy::initialized(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
    MlpPolicy p(std::move(layer_dims));
    std::mt19937_64 rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < p.dims_.size(); ++l) {
        const std::size_t fan_in = p.dims_[l];
        const std::size_t fan_out = p.dims_[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = 0; k < fan_in * fan_out + fan_out; ++k) p.theta_[off + k] = dist(rng);
        off += fan_in * fan_out + fan_out;
    }
    return p;
}

Vec MlpPolicy::forward(std::span<const double> x) const {
    if (x.size() != input_dim()) throw std::invalid_argument("MlpPolicy::forward: input size mismatch");
    Vec a(x.begin(), x.end());
    std::size_t off = 0;
    const std::size_t layers = dims_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = dims_[l], out = dims_[l + 1];
        Vec z(out);
        const double* w = theta_.data() + off;
        const double* b = w + in * out;
        for (std::size_t r = 0; r < out; ++r) {
            double s = b[r];
            for (std::size_t c = 0; c < in; ++c) s += w[r * in + c] * a[c];
            z[r] = l + 1 < layers ? std::tanh(s) : s;
        }
        a = std::move(z);
        off += in * out + out;
    }
    return a;
}

MlpPolicy::Vjp MlpPolicy::vjp(std::span<const double> x, std::span<const double> cotangent) const {
    if (x.size() != input_dim()) throw std::invalid_argument("MlpPolicy::vjp: input size mismatch");
    if (cotangent.size() != output_dim()) throw std::invalid_argument("MlpPolicy::vjp: cotangent size mismatch");
    const std::size_t layers = dims_.size() - 1;

    // Forward, keeping every layer input.
    std::vector<Vec> acts;
    acts.reserve(layers + 1);
    acts.emplace_back(x.begin(), x.end());
    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        const std::size_t in = dims_[l], out = dims_[l + 1];
        const double* w = theta_.data() + off;
        const double* b = w + in * out;
        Vec z(out);
        for (std::size_t r = 0; r < out; ++r) {
            double s = b[r];
            for (std::size_t c = 0; c < in; ++c) s += w[r * in + c] * acts[l][c];
            z[r] = l + 1 < layers ? std::tanh(s) : s;
        }
        acts.push_back(std::move(z));
        off += in * out + out;
    }

    Vjp res{Vec(theta_.size(), 0.0), {}};
    Vec delta(cotangent.begin(), cotangent.end());  // dl/d(pre-activation) of current layer
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = dims_[l], out = dims_[l + 1];
        if (l + 1 < layers)
            for (std::size_t r = 0; r < out; ++r) delta[r] *= 1.0 - acts[l + 1][r] * acts[l + 1][r];
        const double* w = theta_.data() + offsets[l];
        double* dw = res.d_theta.data() + offsets[l];
        double* db = dw + in * out;
        Vec prev(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            const double dr = delta[r];
            db[r] = dr;
            if (dr == 0.0) continue;
            for (std::size_t c = 0; c < in; ++c) {
                dw[r * in + c] = dr * acts[l][c];
                prev[c] += dr * w[r * in + c];
            }
        }
        delta = std::move(prev);
    }
    res.d_x = std::move(delta);
    return res;
}

Vec policy_forward(const MlpPolicy& p, std::span<const double> x) { return p.forward(x); }

Mat policy_jacobian_x(const MlpPolicy& p, std::span<const double> x) {
    Mat jac(p.output_dim(), p.input_dim());
    Vec e(p.output_dim(), 0.0);
    for (std::size_t r = 0; r < p.output_dim(); ++r) {
        e.assign(p.output_dim(), 0.0);
        e[r] = 1.0;
        const Vec dx = p.vjp(x, e).d_x;
        for (std::size_t c = 0; c < p.input_dim(); ++c) jac(r, c) = dx[c];
    }
    return jac;
}

Vec policy_grad_theta(const MlpPolicy& p, std::span<const double> x, std::span<const double> cotangent) {
    return p.vjp(x, cotangent).d_theta;
}

Mat policy_jacobian_theta(const MlpPolicy& p, std::span<const double> x) {
    Mat jac(p.output_dim(), p.num_params());
    Vec e(p.output_dim(), 0.0);
    for (std::size_t r = 0; r < p.output_dim(); ++r) {
        e.assign(p.output_dim(), 0.0);
        e[r] = 1.0;
        const Vec g = p.vjp(x, e).d_theta;
        std::copy(g.begin(), g.end(), jac.row(r).begin());
    }
    return jac;
}

ClassKParams ClassKParams::from_kappas(std::span<const double> kappas) {
    ClassKParams ck;
    for (double k : kappas) {
        if (!(k > 0.0)) throw std::invalid_argument("ClassKParams: kappa must be positive");
        ck.theta2.push_back(std::log(k));
    }
    return ck;
}

double ClassKParams::kappa(std::size_t i) const { return std::exp(theta2.at(i)); }

Vec ClassKParams::kappas() const {
    Vec k(theta2.size());
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = kappa(i);
    return k;
}

double class_k_apply(const ClassKParams& ck, std::size_t i, double b_val) { return ck.kappa(i) * b_val; }

double class_k_dtheta(const ClassKParams& ck, std::size_t i, double b_val) { return ck.kappa(i) * b_val; }

}  // namespace optode
