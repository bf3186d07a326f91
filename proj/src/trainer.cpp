#include "optode/trainer.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "optode/errors.hpp"
#include "optode/parallel.hpp"

namespace optode {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }
std::string to_string(GradientPath g) { return g == GradientPath::Discrete ? "discrete" : "adjoint"; }

Optimizer::Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

void Optimizer::step(Vec& theta, std::span<const double> grad) {
    if (grad.size() != theta.size()) throw std::invalid_argument("Optimizer: gradient length mismatch");
    ++t_;
    if (kind_ == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr_ * grad[i];
        return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (m_.size() != theta.size()) {
        m_.assign(theta.size(), 0.0);
        v_.assign(theta.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
        theta[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
}

void TrainConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be positive");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (batches_per_epoch == 0) throw std::invalid_argument("TrainConfig: batches_per_epoch must be positive");
    if (!(lr1 >= 0.0) || !(lr2 >= 0.0)) throw std::invalid_argument("TrainConfig: learning rates must be non-negative");
    if (eval_size == 0) throw std::invalid_argument("TrainConfig: eval_size must be positive");
    (void)solve.steps();
}

MlpPolicy make_policy(const Environment& env, std::span<const std::size_t> hidden, std::uint64_t seed) {
    std::vector<std::size_t> dims{env.state_dim()};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(env.control_dim());
    return MlpPolicy::initialized(dims, seed);
}

Vec expand_kappas(const Environment& env, std::span<const double> values) {
    const std::size_t total = env.kappa_count();
    if (values.size() == total) return Vec(values.begin(), values.end());
    if (total == 0) return {};
    if (values.size() == 1) return Vec(total, values[0]);
    std::size_t max_level = 0;
    for (const Barrier& b : env.barriers) max_level = std::max(max_level, static_cast<std::size_t>(b.relative_degree));
    if (values.size() != max_level)
        throw std::invalid_argument("expected 1, " + std::to_string(max_level) + " or " + std::to_string(total) +
                                    " class-K coefficients, got " + std::to_string(values.size()));
    Vec out;
    for (const Barrier& b : env.barriers)
        for (int l = 0; l < b.relative_degree; ++l) out.push_back(values[static_cast<std::size_t>(l)]);
    return out;
}

SafetyFilterSpec make_filter(const Environment& env, const ClassKParams& class_k, bool enabled) {
    SafetyFilterSpec spec{env.barriers, class_k, env.system};
    spec.enabled = enabled;
    spec.validate();
    return spec;
}

std::vector<Vec> sample_initial_states(const Environment& env, std::size_t count, std::mt19937_64& rng) {
    std::vector<Vec> out(count, Vec(env.state_dim()));
    for (auto& x : out)
        for (std::size_t i = 0; i < x.size(); ++i) {
            std::uniform_real_distribution<double> dist(env.x0_low[i], env.x0_high[i]);
            x[i] = env.x0_low[i] == env.x0_high[i] ? env.x0_low[i] : dist(rng);
        }
    return out;
}

std::vector<Vec> evaluation_states(const Environment& env, std::size_t count, std::uint64_t seed) {
    std::seed_seq seq{seed, std::uint64_t{0x65766131}};
    std::mt19937_64 rng(seq);
    return sample_initial_states(env, count, rng);
}

EvalMetrics evaluate(const Environment& env, const MlpPolicy& policy, const ClassKParams& class_k, bool use_filter,
                     std::span<const Vec> x0s, const SolveConfig& solve, const LossWeights& weights) {
    const SafetyFilterSpec spec = make_filter(env, class_k, use_filter);
    const ClosedLoop cl{spec, policy, env.lyapunov};
    std::vector<Trajectory> trajs(x0s.size());
    parallel_for(x0s.size(), [&](std::size_t i) { trajs[i] = rollout(cl, x0s[i], solve); });

    EvalMetrics m;
    for (const auto& tr : trajs) m.loss += trajectory_loss(cl, tr, weights);
    m.loss /= static_cast<double>(trajs.size());
    m.mean_error = mean_error(env, trajs);
    m.collision = collision_check(trajs);
    m.violations = violation_count(trajs);
    m.min_barrier = env.barriers.empty() ? std::numeric_limits<double>::infinity() : min_barrier(trajs);
    if (env.band) {
        double r = 0.0;
        for (const auto& tr : trajs) r += reward_cars(env, tr);
        m.reward = r / static_cast<double>(trajs.size());
    }
    return m;
}

namespace {

std::string epoch_prefix(std::size_t epoch) { return "epoch " + std::to_string(epoch) + ": "; }

}  // namespace

TrainReport train(const Environment& env, MlpPolicy policy, ClassKParams class_k, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (class_k.size() != env.kappa_count())
        throw std::invalid_argument("train: class-K parameter count does not match the environment");

    std::seed_seq seq{cfg.seed, std::uint64_t{0x7472616e}};
    std::mt19937_64 rng(seq);
    const std::vector<Vec> eval_x0 = evaluation_states(env, cfg.eval_size, cfg.seed);
    const bool update_kappa = cfg.use_filter && cfg.learn_kappa && class_k.size() > 0;

    Optimizer opt1(cfg.optimizer, cfg.lr1);
    Optimizer opt2(cfg.optimizer, cfg.lr2);
    GradientOptions gopts;
    gopts.weights = cfg.weights;

    TrainReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochMetrics em;
        em.epoch = epoch;
        try {
            for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
                const std::vector<Vec> batch = sample_initial_states(env, cfg.batch_size, rng);
                const SafetyFilterSpec spec = make_filter(env, class_k, cfg.use_filter);
                const ClosedLoop cl{spec, policy, env.lyapunov};
                const GradientResult g = cfg.gradient == GradientPath::Discrete ? grad_discrete(cl, batch, cfg.solve, gopts)
                                                                               : grad_adjoint(cl, batch, cfg.solve, gopts);
                if (!std::isfinite(g.loss) || !all_finite(g.d_theta1) || !all_finite(g.d_theta2))
                    throw DivergedLoss(epoch_prefix(epoch) + "non-finite loss or gradient", epoch);
                em.loss += g.loss / static_cast<double>(cfg.batches_per_epoch);
                em.active_set_switches += g.diagnostics.active_set_switches;
                opt1.step(policy.theta(), g.d_theta1);
                if (update_kappa) opt2.step(class_k.theta2, g.d_theta2);
            }
            em.eval = evaluate(env, policy, class_k, cfg.use_filter, eval_x0, cfg.solve, cfg.weights);
        } catch (const QpInfeasible& e) {
            throw QpInfeasible(epoch_prefix(epoch) + e.what(), e.step());
        } catch (const NonFiniteState& e) {
            throw DivergedLoss(epoch_prefix(epoch) + e.what(), epoch);
        }
        if (!std::isfinite(em.eval.loss))
            throw DivergedLoss(epoch_prefix(epoch) + "non-finite evaluation loss", epoch);
        em.kappas = class_k.kappas();
        report.epochs.push_back(em);
        if (on_epoch) on_epoch(em, policy, class_k);
    }
    report.policy = std::move(policy);
    report.class_k = std::move(class_k);
    return report;
}

AblationMode AblationMode::parse(const std::string& text) {
    AblationMode m;
    if (text == "no_qp") {
        m.kind = Kind::NoQp;
    } else if (text == "inference_qp") {
        m.kind = Kind::InferenceQp;
    } else if (text == "learned_kappa") {
        m.kind = Kind::LearnedKappa;
    } else if (text.rfind("fixed_kappa:", 0) == 0) {
        m.kind = Kind::FixedKappa;
        std::stringstream ss(text.substr(12));
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(item, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != item.size() || item.empty() || !(v > 0.0))
                throw std::invalid_argument("ablation mode '" + text + "': bad kappa '" + item + "'");
            m.kappa.push_back(v);
        }
        if (m.kappa.empty()) throw std::invalid_argument("ablation mode '" + text + "': missing kappa");
    } else {
        throw std::invalid_argument("unknown ablation mode '" + text + "'");
    }
    return m;
}

std::string AblationMode::label() const {
    switch (kind) {
        case Kind::NoQp: return "no_qp";
        case Kind::InferenceQp: return "inference_qp";
        case Kind::LearnedKappa: return "learned_kappa";
        case Kind::FixedKappa: break;
    }
    std::ostringstream os;
    os << "fixed_kappa:";
    for (std::size_t i = 0; i < kappa.size(); ++i) os << (i ? "," : "") << kappa[i];
    return os.str();
}

std::vector<AblationRow> ablate(const Environment& env, const AblationConfig& acfg, const TrainConfig& cfg) {
    const std::vector<Vec> eval_x0 = evaluation_states(env, acfg.eval_size, acfg.eval_seed);
    const ClassKParams init = ClassKParams::from_kappas(expand_kappas(env, acfg.kappa_init));
    const MlpPolicy policy0 = make_policy(env, acfg.hidden, cfg.seed);

    std::optional<TrainReport> unfiltered;
    auto train_unfiltered = [&]() -> const TrainReport& {
        if (!unfiltered) {
            TrainConfig c = cfg;
            c.use_filter = false;
            c.learn_kappa = false;
            unfiltered = train(env, policy0, init, c);
        }
        return *unfiltered;
    };

    std::vector<AblationRow> rows;
    for (const AblationMode& mode : acfg.modes) {
        AblationRow row;
        row.mode = mode.label();
        switch (mode.kind) {
            case AblationMode::Kind::NoQp: {
                const TrainReport& r = train_unfiltered();
                row.metrics = evaluate(env, r.policy, r.class_k, false, eval_x0, cfg.solve, cfg.weights);
                break;
            }
            case AblationMode::Kind::InferenceQp: {
                const TrainReport& r = train_unfiltered();
                row.metrics = evaluate(env, r.policy, init, true, eval_x0, cfg.solve, cfg.weights);
                row.kappas = init.kappas();
                break;
            }
            case AblationMode::Kind::FixedKappa: {
                TrainConfig c = cfg;
                c.learn_kappa = false;
                const ClassKParams fixed = ClassKParams::from_kappas(expand_kappas(env, mode.kappa));
                const TrainReport r = train(env, policy0, fixed, c);
                row.metrics = evaluate(env, r.policy, r.class_k, true, eval_x0, cfg.solve, cfg.weights);
                row.kappas = r.class_k.kappas();
                break;
            }
            case AblationMode::Kind::LearnedKappa: {
                TrainConfig c = cfg;
                c.learn_kappa = true;
                const TrainReport r = train(env, policy0, init, c);
                row.metrics = evaluate(env, r.policy, r.class_k, true, eval_x0, cfg.solve, cfg.weights);
                row.kappas = r.class_k.kappas();
                break;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace optode
