#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optode/certificates.hpp"
#include "optode/system.hpp"
#include "optode/trajectory.hpp"

namespace optode {

enum class EnvKind { Unicycle, Unicycle4, Cars };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

/// Point l_p ahead of the unicycle: (x1 + l_p cos th, x2 + l_p sin th).
template <class T>
std::array<T, 2> lookahead_point(std::span<const T> x, double l_p) {
    using std::cos;
    using std::sin;
    return {x[0] + l_p * cos(x[2]), x[1] + l_p * sin(x[2])};
}

Vec unicycle_dynamics(std::span<const double> x, std::span<const double> u);
Vec unicycle_lookahead(std::span<const double> x, double l_p);

/// x = (x1, x2, theta), u = (v, omega); f = 0, g = [[cos, 0], [sin, 0], [0, 1]].
class UnicycleSystem final : public ControlAffineModel<UnicycleSystem> {
public:
    std::size_t state_dim() const override { return 3; }
    std::size_t control_dim() const override { return 2; }

    template <class T>
    void drift_t(std::span<const T> /*x*/, double /*t*/, std::span<T> f) const {
        for (auto& v : f) v = T(0.0);
    }
    template <class T>
    void input_matrix_t(std::span<const T> x, double /*t*/, std::span<T> g) const {
        using std::cos;
        using std::sin;
        g[0] = cos(x[2]);
        g[1] = T(0.0);
        g[2] = sin(x[2]);
        g[3] = T(0.0);
        g[4] = T(0.0);
        g[5] = T(1.0);
    }
};

/// x = (x1, x2, theta, v), u = (omega, a); f = (v cos, v sin, 0, 0).
class Unicycle4System final : public ControlAffineModel<Unicycle4System> {
public:
    std::size_t state_dim() const override { return 4; }
    std::size_t control_dim() const override { return 2; }

    template <class T>
    void drift_t(std::span<const T> x, double /*t*/, std::span<T> f) const {
        using std::cos;
        using std::sin;
        f[0] = x[3] * cos(x[2]);
        f[1] = x[3] * sin(x[2]);
        f[2] = T(0.0);
        f[3] = T(0.0);
    }
    template <class T>
    void input_matrix_t(std::span<const T> /*x*/, double /*t*/, std::span<T> g) const {
        for (auto& v : g) v = T(0.0);
        g[2 * 2 + 0] = T(1.0);
        g[3 * 2 + 1] = T(1.0);
    }
};

/// Constants of the five-car chain.
struct CarChainParams {
    double v_s = 3.0;
    double k_v = 4.0;
    double k_b = 20.0;
    double disturbance = 0.1;  // d_i on cars 1, 2, 3, 5
    double follow_threshold = 6.5;
    double rear_threshold = 13.0;
};

/// State (p1, v1, ..., p5, v5); u is the acceleration of car 4. Switching
/// conditions are evaluated at the current state.
class CarChainSystem final : public ControlAffineModel<CarChainSystem> {
public:
    explicit CarChainSystem(CarChainParams params = {}) : prm_(params) {}
    std::size_t state_dim() const override { return 10; }
    std::size_t control_dim() const override { return 1; }
    const CarChainParams& params() const { return prm_; }

    /// Accelerations of the uncontrolled cars (index 0..4, entry 3 unused).
    template <class T>
    std::array<T, 5> accelerations(std::span<const T> x, double t) const {
        using std::abs;
        auto p = [&](int i) { return x[2 * (i - 1)]; };
        auto v = [&](int i) { return x[2 * (i - 1) + 1]; };
        std::array<T, 5> a{};
        a[0] = prm_.k_v * (prm_.v_s - 4.0 * std::sin(t) - v(1));
        for (int i : {2, 3}) {
            const T gap = p(i - 1) - p(i);
            a[i - 1] = prm_.k_v * (prm_.v_s - v(i));
            if (abs(gap) < prm_.follow_threshold) a[i - 1] = a[i - 1] - prm_.k_b * gap;
        }
        a[3] = T(0.0);
        const T rear_gap = p(3) - p(5);
        a[4] = prm_.k_v * (prm_.v_s - v(5));
        if (abs(rear_gap) < prm_.rear_threshold) a[4] = a[4] - prm_.k_b * rear_gap;
        return a;
    }

    template <class T>
    void drift_t(std::span<const T> x, double t, std::span<T> f) const {
        const auto a = accelerations(x, t);
        for (int i = 0; i < 5; ++i) {
            f[2 * i] = x[2 * i + 1];
            f[2 * i + 1] = i == 3 ? T(0.0) : (1.0 + prm_.disturbance) * a[i];
        }
    }
    template <class T>
    void input_matrix_t(std::span<const T> /*x*/, double /*t*/, std::span<T> g) const {
        for (auto& v : g) v = T(0.0);
        g[7] = T(1.0);
    }

private:
    CarChainParams prm_;
};

Vec car_chain_dynamics(std::span<const double> x, std::span<const double> u, double t,
                       const CarChainParams& params = {});

struct UnicycleParams {
    Vec obstacle{-1.0, 0.0};
    double obstacle_radius = 0.5;  // delta_1
    Vec target{0.0, 0.0};
    double target_radius = 0.1;    // delta_2
    double lookahead = 0.1;        // l_p
    bool obstacle_enabled = true;
    Vec x0_low{-2.2, -0.2, -0.2};
    Vec x0_high{-1.8, 0.2, 0.2};
};

struct Unicycle4Params {
    Vec obstacle{-1.0, 0.0};
    double obstacle_radius = 0.5;
    Vec target{0.0, 0.0};
    double target_radius = 0.1;
    bool obstacle_enabled = true;
    Vec x0_low{-2.2, -0.2, -0.2, 0.0};
    Vec x0_high{-1.8, 0.2, 0.2, 0.5};
};

struct CarsParams {
    CarChainParams chain;
    double min_distance = 2.0;  // delta
    double d_desired = 6.0;
    double band_low = 5.5;
    double band_high = 6.5;
    Vec x0_low{14.0, 2.5, 8.0, 2.5, 0.0, 2.5, -9.0, 2.5, -16.0, 2.5};
    Vec x0_high{16.0, 3.5, 10.0, 3.5, 0.0, 3.5, -7.0, 3.5, -14.0, 3.5};
};

/// Everything an experiment needs about one environment.
struct Environment {
    EnvKind kind = EnvKind::Unicycle;
    std::shared_ptr<const ControlAffineSystem> system;
    std::vector<Barrier> barriers;
    Lyapunov lyapunov;
    Vec x0_low;
    Vec x0_high;
    /// Terminal error reported as mean error.
    std::function<double(std::span<const double>)> target_error;
    /// Signal exported to distance.csv (distance to target, or the car gap d).
    std::string signal_name;
    std::function<double(std::span<const double>)> signal;
    /// Desired band of `signal` for the reward metric, when defined.
    std::optional<std::array<double, 2>> band;

    std::size_t state_dim() const { return system->state_dim(); }
    std::size_t control_dim() const { return system->control_dim(); }
    std::size_t kappa_count() const;
};

Environment make_unicycle_env(const UnicycleParams& prm, double gamma);
Environment make_unicycle4_env(const Unicycle4Params& prm, double gamma);
Environment make_cars_env(const CarsParams& prm, double gamma);

/// Batch mean of the terminal target error.
double mean_error(const Environment& env, std::span<const Trajectory> batch);
/// True iff some barrier goes negative at some grid point of some trajectory.
bool collision_check(std::span<const Trajectory> batch);
/// Grid points with min_i B_i < 0, summed over the batch.
std::size_t violation_count(std::span<const Trajectory> batch);
double min_barrier(std::span<const Trajectory> batch);
/// Fraction of grid points whose signal lies in the env band.
double reward_cars(const Environment& env, const Trajectory& traj);

}  // namespace optode
