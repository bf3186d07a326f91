#pragma once

#include <algorithm>
#include <memory>

#include "optode/envs.hpp"
#include "optode/ode.hpp"
#include "support.hpp"

// Small random closed-loop problems shared by the ODE tests and the acceptance suite.
namespace testing {

using namespace optode;

struct HalfSq {
    template <class T>
    T operator()(std::span<const T> x) const {
        T s(0.0);
        for (const T& v : x) s = s + 0.5 * v * v;
        return s;
    }
};

struct ShiftedHalfSq {
    Vec target;
    template <class T>
    T operator()(std::span<const T> x) const {
        T s(0.0);
        for (std::size_t i = 0; i < x.size(); ++i) s = s + 0.5 * (x[i] - target[i]) * (x[i] - target[i]);
        return s;
    }
};

// c - x[i]
struct Cap {
    std::size_t i;
    double c;
    template <class T>
    T operator()(std::span<const T> x) const { return c - x[i]; }
};

// x[i] - c
struct Floor {
    std::size_t i;
    double c;
    template <class T>
    T operator()(std::span<const T> x) const { return x[i] - c; }
};

inline MlpPolicy linear_policy(const Mat& w, const Vec& b) {
    Vec theta = w.data();
    theta.insert(theta.end(), b.begin(), b.end());
    return MlpPolicy({w.cols(), w.rows()}, theta);
}

struct Instance {
    SafetyFilterSpec spec;
    MlpPolicy policy;
    Lyapunov lyap;
    Vec x0;
    SolveConfig cfg;
    LossWeights weights;

    ClosedLoop loop() const { return {spec, policy, lyap}; }
};

inline double loss_of(const Instance& in) {
    const std::vector<Vec> b{in.x0};
    return batch_loss(in.loop(), b, in.cfg, in.weights);
}

// Concatenated finite-difference gradient over (theta1, theta2).
inline Vec fd_gradient(const Instance& in, double eps) {
    Vec theta = in.policy.theta();
    theta.insert(theta.end(), in.spec.class_k.theta2.begin(), in.spec.class_k.theta2.end());
    const std::size_t n1 = in.policy.num_params();
    return finite_diff_grad(
        [&](std::span<const double> v) {
            Instance c = in;
            c.policy.theta().assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n1));
            c.spec.class_k.theta2.assign(v.begin() + static_cast<std::ptrdiff_t>(n1), v.end());
            return loss_of(c);
        },
        theta, eps);
}

inline Vec joined(const GradientResult& g) {
    Vec v = g.d_theta1;
    v.insert(v.end(), g.d_theta2.begin(), g.d_theta2.end());
    return v;
}

// Smallest distance from a kink (active-set change or hinge) along the rollout.
inline double kink_margin(const Instance& in) {
    const ClosedLoop cl = in.loop();
    const Trajectory tr = rollout(cl, in.x0, in.cfg);
    double m = 1e300;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const FieldEval e = evaluate_field(cl, tr.states[k], tr.times[k]);
        if (k + 1 < tr.size()) m = std::min(m, std::abs(e.clf_argument));
        const auto& p = e.filter.problem;
        for (std::size_t i = 0; i < p.num_ineq() && in.spec.enabled; ++i)
            m = std::min(m, std::max(e.filter.sol.lambda_star[i], p.h[i] - dot(p.G.row(i), e.filter.u_safe)));
    }
    return m;
}

inline Instance random_pendulum(Gen& gen, std::uint64_t seed) {
    auto sys = std::make_shared<Pendulumish>();
    Instance in{{{{field(2, Cap{1, gen.uniform(0.3, 1.0)}), 1, "speed"}},
                 ClassKParams::from_kappas(Vec{gen.uniform(0.5, 5.0)}),
                 sys},
                MlpPolicy::initialized({2, 4, 1}, seed),
                {field(2, HalfSq{}), gen.uniform(0.5, 3.0)},
                gen.vec(2, -0.8, 0.8),
                {0.0, 0.02 * static_cast<double>(gen.index(5, 20)), 0.02, Method::Euler},
                {1.0, gen.uniform(0.0, 1.0)}};
    // push the nominal input upward so the speed cap binds on part of the runs
    in.policy.theta().back() += gen.uniform(0.0, 3.0);
    return in;
}

inline Instance random_unicycle(Gen& gen, std::uint64_t seed) {
    const Environment env = make_unicycle_env(UnicycleParams{}, gen.uniform(1.0, 5.0));
    Instance in{{env.barriers, ClassKParams::from_kappas(Vec{gen.uniform(0.5, 10.0)}), env.system},
                MlpPolicy::initialized({3, 5, 2}, seed),
                env.lyapunov,
                {gen.uniform(-1.9, -1.55), gen.uniform(-0.2, 0.2), gen.uniform(-0.3, 0.3)},
                {0.0, 0.05 * static_cast<double>(gen.index(2, 8)), 0.05, Method::Euler},
                {1.0, gen.uniform(0.0, 1.0)}};
    in.policy.theta()[in.policy.num_params() - 2] += gen.uniform(0.5, 2.0);
    return in;
}

}  // namespace testing
