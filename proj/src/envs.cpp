#include "optode/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace optode {

std::string to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::Unicycle: return "unicycle";
        case EnvKind::Unicycle4: return "unicycle4";
        case EnvKind::Cars: return "cars";
    }
    return "unknown";
}

EnvKind env_kind_from_string(const std::string& name) {
    if (name == "unicycle") return EnvKind::Unicycle;
    if (name == "unicycle4") return EnvKind::Unicycle4;
    if (name == "cars") return EnvKind::Cars;
    throw std::invalid_argument("unknown environment '" + name + "'");
}

Vec unicycle_dynamics(std::span<const double> x, std::span<const double> u) {
    if (x.size() != 3 || u.size() != 2) throw std::invalid_argument("unicycle_dynamics: expects x in R^3, u in R^2");
    return UnicycleSystem{}.closed_loop(x, u, 0.0);
}

Vec unicycle_lookahead(std::span<const double> x, double l_p) {
    if (x.size() < 3) throw std::invalid_argument("unicycle_lookahead: expects x in R^3");
    const auto p = lookahead_point<double>(x, l_p);
    return {p[0], p[1]};
}

Vec car_chain_dynamics(std::span<const double> x, std::span<const double> u, double t,
                       const CarChainParams& params) {
    if (x.size() != 10 || u.size() != 1) throw std::invalid_argument("car_chain_dynamics: expects x in R^10, u in R^1");
    return CarChainSystem(params).closed_loop(x, u, t);
}

namespace {

// 1/2 (||c - center||^2 - r^2), optionally clamped below at zero.
struct RingPotential {
    std::array<double, 2> center;
    double radius;
    double lookahead;  // < 0: use (x0, x1) directly
    bool clamp;

    template <class T>
    T operator()(std::span<const T> x) const {
        std::array<T, 2> c{x[0], x[1]};
        if (lookahead >= 0.0) c = lookahead_point<T>(x, lookahead);
        const T dx = c[0] - center[0];
        const T dy = c[1] - center[1];
        const T v = 0.5 * (dx * dx + dy * dy - radius * radius);
        return clamp ? relu(v) : v;
    }
};

// sign * (x[a] - x[b]) - offset
struct GapBarrier {
    std::size_t a, b;
    double offset;

    template <class T>
    T operator()(std::span<const T> x) const {
        return x[a] - x[b] - offset;
    }
};

struct AbsGap {
    double desired;

    template <class T>
    T operator()(std::span<const T> x) const {
        using std::abs;
        return abs(x[4] - x[6] - desired);
    }
};

template <class Fn>
std::shared_ptr<const ScalarField> field(std::size_t dim, Fn fn) {
    return std::make_shared<ScalarFieldModel<Fn>>(dim, std::move(fn));
}

void check_box(const Vec& lo, const Vec& hi, std::size_t n) {
    if (lo.size() != n || hi.size() != n) throw std::invalid_argument("initial-state box has wrong dimension");
    for (std::size_t i = 0; i < n; ++i)
        if (lo[i] > hi[i]) throw std::invalid_argument("initial-state box has low > high");
}

double planar_distance(std::span<const double> c, const Vec& target) {
    return std::hypot(c[0] - target[0], c[1] - target[1]);
}

}  // namespace

std::size_t Environment::kappa_count() const {
    std::size_t k = 0;
    for (const Barrier& b : barriers) k += static_cast<std::size_t>(b.relative_degree);
    return k;
}

Environment make_unicycle_env(const UnicycleParams& prm, double gamma) {
    check_box(prm.x0_low, prm.x0_high, 3);
    Environment env;
    env.kind = EnvKind::Unicycle;
    env.system = std::make_shared<UnicycleSystem>();
    if (prm.obstacle_enabled)
        env.barriers.push_back({field(3, RingPotential{{prm.obstacle[0], prm.obstacle[1]}, prm.obstacle_radius,
                                                       prm.lookahead, false}),
                                1, "obstacle"});
    env.lyapunov = {field(3, RingPotential{{prm.target[0], prm.target[1]}, prm.target_radius, prm.lookahead, true}),
                    gamma};
    env.x0_low = prm.x0_low;
    env.x0_high = prm.x0_high;
    const Vec target = prm.target;
    const double l_p = prm.lookahead;
    env.target_error = [target, l_p](std::span<const double> x) {
        return planar_distance(unicycle_lookahead(x, l_p), target);
    };
    env.signal_name = "distance";
    env.signal = env.target_error;
    return env;
}

Environment make_unicycle4_env(const Unicycle4Params& prm, double gamma) {
    check_box(prm.x0_low, prm.x0_high, 4);
    Environment env;
    env.kind = EnvKind::Unicycle4;
    env.system = std::make_shared<Unicycle4System>();
    if (prm.obstacle_enabled)
        env.barriers.push_back(
            {field(4, RingPotential{{prm.obstacle[0], prm.obstacle[1]}, prm.obstacle_radius, -1.0, false}), 2,
             "obstacle"});
    env.lyapunov = {field(4, RingPotential{{prm.target[0], prm.target[1]}, prm.target_radius, -1.0, true}), gamma};
    env.x0_low = prm.x0_low;
    env.x0_high = prm.x0_high;
    const Vec target = prm.target;
    env.target_error = [target](std::span<const double> x) { return planar_distance(x, target); };
    env.signal_name = "distance";
    env.signal = env.target_error;
    return env;
}

Environment make_cars_env(const CarsParams& prm, double gamma) {
    check_box(prm.x0_low, prm.x0_high, 10);
    Environment env;
    env.kind = EnvKind::Cars;
    env.system = std::make_shared<CarChainSystem>(prm.chain);
    // B1 = p3 - p4 - delta, B2 = p4 - p5 - delta
    env.barriers.push_back({field(10, GapBarrier{4, 6, prm.min_distance}), 2, "front_gap"});
    env.barriers.push_back({field(10, GapBarrier{6, 8, prm.min_distance}), 2, "rear_gap"});
    env.lyapunov = {field(10, AbsGap{prm.d_desired}), gamma};
    env.x0_low = prm.x0_low;
    env.x0_high = prm.x0_high;
    const double desired = prm.d_desired;
    env.target_error = [desired](std::span<const double> x) { return std::abs(x[4] - x[6] - desired); };
    env.signal_name = "d";
    env.signal = [](std::span<const double> x) { return x[4] - x[6]; };
    env.band = std::array<double, 2>{prm.band_low, prm.band_high};
    return env;
}

double mean_error(const Environment& env, std::span<const Trajectory> batch) {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    for (const Trajectory& tr : batch) total += env.target_error(tr.states.back());
    return total / static_cast<double>(batch.size());
}

double min_barrier(std::span<const Trajectory> batch) {
    double lo = std::numeric_limits<double>::infinity();
    for (const Trajectory& tr : batch)
        for (const Vec& b : tr.barrier_values)
            for (double v : b) lo = std::min(lo, v);
    return lo;
}

bool collision_check(std::span<const Trajectory> batch) { return min_barrier(batch) < 0.0; }

std::size_t violation_count(std::span<const Trajectory> batch) {
    std::size_t count = 0;
    for (const Trajectory& tr : batch)
        for (const Vec& b : tr.barrier_values)
            if (!b.empty() && *std::min_element(b.begin(), b.end()) < 0.0) ++count;
    return count;
}

double reward_cars(const Environment& env, const Trajectory& traj) {
    if (!env.band) throw std::invalid_argument("reward_cars: environment has no desired band");
    if (traj.size() == 0) return 0.0;
    std::size_t inside = 0;
    for (const Vec& x : traj.states) {
        const double s = env.signal(x);
        if (s >= (*env.band)[0] && s <= (*env.band)[1]) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(traj.size());
}

}  // namespace optode
