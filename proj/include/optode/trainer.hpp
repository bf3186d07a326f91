#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "optode/envs.hpp"
#include "optode/ode.hpp"
#include "optode/policy.hpp"

namespace optode {

enum class OptimizerKind { SGD, Adam };
enum class GradientPath { Discrete, Adjoint };

std::string to_string(OptimizerKind k);
std::string to_string(GradientPath g);

/// Plain SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8) on one parameter vector.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr);
    void step(Vec& theta, std::span<const double> grad);
    std::size_t steps_taken() const { return t_; }

private:
    OptimizerKind kind_;
    double lr_;
    std::size_t t_ = 0;
    Vec m_, v_;
};

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    /// Parameter updates per epoch, each on a fresh batch.
    std::size_t batches_per_epoch = 1;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double lr1 = 1e-3;
    double lr2 = 1e-2;
    std::uint64_t seed = 0;
    SolveConfig solve;
    LossWeights weights;
    GradientPath gradient = GradientPath::Discrete;
    /// Train theta2 (ignored when the filter is off).
    bool learn_kappa = true;
    /// Safety filter active during training.
    bool use_filter = true;
    /// Initial states used for the per-epoch metrics.
    std::size_t eval_size = 16;

    /// Throws std::invalid_argument on zero counts or negative rates.
    void validate() const;
};

struct EvalMetrics {
    double loss = 0.0;
    double mean_error = 0.0;
    bool collision = false;
    std::size_t violations = 0;
    double min_barrier = 0.0;
    std::optional<double> reward;  // only for envs with a band
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;  // mean training loss over the epoch's batches, before the updates
    EvalMetrics eval;
    Vec kappas;
    std::size_t active_set_switches = 0;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    MlpPolicy policy;
    ClassKParams class_k;
};

using EpochCallback = std::function<void(const EpochMetrics&, const MlpPolicy&, const ClassKParams&)>;

MlpPolicy make_policy(const Environment& env, std::span<const std::size_t> hidden, std::uint64_t seed);

/// Class-K coefficients for every barrier level. `values` is either one
/// entry per coefficient, one shared value, or one value per chain level
/// (shared across barriers).
Vec expand_kappas(const Environment& env, std::span<const double> values);

SafetyFilterSpec make_filter(const Environment& env, const ClassKParams& class_k, bool enabled);

/// Uniform samples from the env's initial-state box.
std::vector<Vec> sample_initial_states(const Environment& env, std::size_t count, std::mt19937_64& rng);
/// The fixed evaluation set derived from a seed.
std::vector<Vec> evaluation_states(const Environment& env, std::size_t count, std::uint64_t seed);

EvalMetrics evaluate(const Environment& env, const MlpPolicy& policy, const ClassKParams& class_k, bool use_filter,
                     std::span<const Vec> x0s, const SolveConfig& solve, const LossWeights& weights = {});

/// Iterates rollout, loss and simultaneous updates of theta1 and theta2.
/// Throws DivergedLoss (non-finite loss or gradient) and QpInfeasible with
/// the epoch in the message.
TrainReport train(const Environment& env, MlpPolicy policy, ClassKParams class_k, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct AblationMode {
    enum class Kind { NoQp, InferenceQp, FixedKappa, LearnedKappa };
    Kind kind = Kind::LearnedKappa;
    Vec kappa;  // FixedKappa only

    /// "no_qp", "inference_qp", "learned_kappa", "fixed_kappa:5" or "fixed_kappa:60,900".
    static AblationMode parse(const std::string& text);
    std::string label() const;
};

struct AblationRow {
    std::string mode;
    EvalMetrics metrics;
    Vec kappas;
};

struct AblationConfig {
    std::vector<AblationMode> modes;
    std::vector<std::size_t> hidden;
    Vec kappa_init{1.0};
    std::size_t eval_size = 50;
    std::uint64_t eval_seed = 12345;
};

/// Trains one controller per mode (shared seed and config) and evaluates all
/// of them on the same initial states. no_qp and inference_qp share one
/// filter-free training run.
std::vector<AblationRow> ablate(const Environment& env, const AblationConfig& acfg, const TrainConfig& cfg);

}  // namespace optode
