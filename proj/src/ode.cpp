#include "optode/ode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

#include "optode/errors.hpp"
#include "optode/parallel.hpp"

namespace optode {

std::size_t SolveConfig::steps() const {
    if (!(dt > 0.0)) throw std::invalid_argument("SolveConfig: dt must be positive");
    if (!(tf >= t0)) throw std::invalid_argument("SolveConfig: tf must not precede t0");
    const double ratio = (tf - t0) / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument("SolveConfig: (tf - t0) / dt is not an integer");
    return static_cast<std::size_t>(rounded);
}

std::size_t batch_threads() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("OPT_ODENET_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = static_cast<std::size_t>(v);
    }
    return n;
}

namespace {

double clf_argument(const Lyapunov& lyap, std::span<const double> x, std::span<const double> xdot) {
    return lie_derivative<double>(*lyap.V, x, xdot) + lyap.gamma * lyap.value(x);
}

FieldEval evaluate_at_step(const ClosedLoop& cl, std::span<const double> x, double t, std::ptrdiff_t step) {
    try {
        return evaluate_field(cl, x, t);
    } catch (const Infeasible& e) {
        throw QpInfeasible(std::string("step ") + std::to_string(step) + ": " + e.what(), step);
    } catch (const NonFiniteState& e) {
        throw NonFiniteState(std::string(e.what()) + " at step " + std::to_string(step), step);
    }
}

void check_finite(std::span<const double> x, std::ptrdiff_t step) {
    if (!all_finite(x)) throw NonFiniteState("non-finite state at step " + std::to_string(step), step);
}

// One integration step from `x`; `stages` receives the field evaluations
// (1 for Euler, 4 for RK4), the first one at x itself.
Vec integrate_step(const ClosedLoop& cl, std::span<const double> x, double t, double dt, Method method,
                   std::ptrdiff_t step, std::vector<FieldEval>& stages) {
    stages.clear();
    stages.push_back(evaluate_at_step(cl, x, t, step));
    Vec next(x.begin(), x.end());
    if (method == Method::Euler) {
        axpy(dt, stages[0].xdot, next);
        return next;
    }
    Vec y(x.begin(), x.end());
    axpy(0.5 * dt, stages[0].xdot, y);
    stages.push_back(evaluate_at_step(cl, y, t + 0.5 * dt, step));
    y.assign(x.begin(), x.end());
    axpy(0.5 * dt, stages[1].xdot, y);
    stages.push_back(evaluate_at_step(cl, y, t + 0.5 * dt, step));
    y.assign(x.begin(), x.end());
    axpy(dt, stages[2].xdot, y);
    stages.push_back(evaluate_at_step(cl, y, t + dt, step));
    const double w[4] = {1.0, 2.0, 2.0, 1.0};
    for (int s = 0; s < 4; ++s) axpy(dt * w[s] / 6.0, stages[s].xdot, next);
    return next;
}

void record(Trajectory& tr, const FieldEval& e) {
    tr.times.push_back(e.t);
    tr.states.push_back(e.x);
    tr.xdot.push_back(e.xdot);
    tr.u_nn.push_back(e.filter.u_nn);
    tr.u_safe.push_back(e.filter.u_safe);
    tr.barrier_values.push_back(e.barriers);
    tr.lyapunov.push_back(e.lyapunov);
    tr.pointwise_loss.push_back(e.loss);
}

// Forward pass keeping every stage evaluation (for backprop).
struct ForwardRecord {
    std::vector<std::vector<FieldEval>> steps;  // N entries
    FieldEval terminal;                          // at x_N
};

ForwardRecord forward_record(const ClosedLoop& cl, std::span<const double> x0, const SolveConfig& cfg) {
    const std::size_t n_steps = cfg.steps();
    ForwardRecord rec;
    rec.steps.resize(n_steps);
    Vec x(x0.begin(), x0.end());
    check_finite(x, 0);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = cfg.t0 + static_cast<double>(k) * cfg.dt;
        x = integrate_step(cl, x, t, cfg.dt, cfg.method, static_cast<std::ptrdiff_t>(k), rec.steps[k]);
        check_finite(x, static_cast<std::ptrdiff_t>(k + 1));
    }
    rec.terminal = evaluate_at_step(cl, x, cfg.t0 + static_cast<double>(n_steps) * cfg.dt,
                                    static_cast<std::ptrdiff_t>(n_steps));
    return rec;
}

bool filter_active(const ClosedLoop& cl) { return cl.filter.enabled && !cl.filter.barriers.empty(); }

std::vector<bool> active_set(const FieldEval& e, double margin) {
    std::vector<bool> s;
    for (double l : e.filter.sol.lambda_star) s.push_back(l > margin);
    return s;
}

// Accumulates the cotangent of one field evaluation into (dx, dtheta1, dtheta2):
// cot_xdot . d xdot + cot_loss . d loss, through filter and policy.
void field_vjp(const ClosedLoop& cl, const FieldEval& e, std::span<const double> cot_xdot, double cot_loss,
               const QpDiffOptions& qp_opts, Vec& dx, Vec& dth1, Vec& dth2) {
    const ControlAffineSystem& sys = cl.system();
    const std::size_t n = sys.state_dim();
    const std::size_t m = sys.control_dim();
    const Vec& u = e.filter.u_safe;

    const Mat g = sys.g(e.x, e.t);
    Vec cot_u = vec_mat(cot_xdot, g);
    Vec dx_local = vec_mat(cot_xdot, sys.jacobian_f(e.x, e.t) + sys.jacobian_gu(e.x, u, e.t));
    if (cot_loss != 0.0 && e.clf_argument > 0.0) {
        const ClfSource src = clf_source_terms(cl.lyap, sys, e.x, u, e.t);
        axpy(cot_loss, src.du, cot_u);
        axpy(cot_loss, src.dx, dx_local);
    }

    Vec d_unn(m);
    if (filter_active(cl)) {
        const QpGradients qg = qp_backward(e.filter.problem, e.filter.sol, cot_u, qp_opts);
        for (std::size_t j = 0; j < m; ++j) d_unn[j] = -qg.dq[j];
        const CbfRowJacobians rj = build_rows_jacobians(cl.filter, e.x, e.t);
        const Vec dx_rows = add(vec_mat(qg.dG.data(), rj.dG_dx), vec_mat(qg.dh, rj.dh_dx));
        axpy(1.0, dx_rows, dx_local);
        const Vec dk = add(vec_mat(qg.dG.data(), rj.dG_dtheta2), vec_mat(qg.dh, rj.dh_dtheta2));
        axpy(1.0, dk, dth2);
    } else {
        d_unn = cot_u;
    }
    const MlpPolicy::Vjp pv = cl.policy.vjp(e.x, d_unn);
    axpy(1.0, pv.d_theta, dth1);
    axpy(1.0, pv.d_x, dx_local);
    (void)n;
    axpy(1.0, dx_local, dx);
}

double terminal_value(const ClosedLoop& cl, std::span<const double> x) { return cl.lyap.value(x); }

GradientResult single_discrete(const ClosedLoop& cl, std::span<const double> x0, const SolveConfig& cfg,
                               const GradientOptions& opts) {
    const ForwardRecord rec = forward_record(cl, x0, cfg);
    const std::size_t n = cl.system().state_dim();
    const double dt = cfg.dt;
    const LossWeights& w = opts.weights;

    GradientResult res;
    res.d_theta1.assign(cl.policy.num_params(), 0.0);
    res.d_theta2.assign(cl.filter.class_k.size(), 0.0);
    for (const auto& st : rec.steps) res.loss += w.clf * dt * st.front().loss;
    res.loss += w.terminal * terminal_value(cl, rec.terminal.x);

    Vec a(n, 0.0);
    if (w.terminal != 0.0) a = scaled(cl.lyap.gradient(rec.terminal.x), w.terminal);

    std::vector<bool> prev_set = active_set(rec.terminal, opts.qp.margin);
    for (std::size_t k = rec.steps.size(); k-- > 0;) {
        const auto& st = rec.steps[k];
        const std::vector<bool> cur = active_set(st.front(), opts.qp.margin);
        if (cur != prev_set) ++res.diagnostics.active_set_switches;
        prev_set = cur;
        if (filter_active(cl) &&
            !degenerate_constraints(st.front().filter.problem, st.front().filter.sol, opts.qp.margin).empty())
            ++res.diagnostics.degenerate_points;
        try {
            Vec dx(n, 0.0);
            if (st.size() == 1) {
                field_vjp(cl, st[0], scaled(a, dt), w.clf * dt, opts.qp, dx, res.d_theta1, res.d_theta2);
            } else {
                // x' = x + dt/6 (k1 + 2 k2 + 2 k3 + k4); stage j input y_j depends on k_{j-1}.
                Vec d4(n, 0.0), d3(n, 0.0), d2(n, 0.0), d1(n, 0.0);
                field_vjp(cl, st[3], scaled(a, dt / 6.0), 0.0, opts.qp, d4, res.d_theta1, res.d_theta2);
                Vec c3 = scaled(a, dt / 3.0);
                axpy(dt, d4, c3);
                field_vjp(cl, st[2], c3, 0.0, opts.qp, d3, res.d_theta1, res.d_theta2);
                Vec c2 = scaled(a, dt / 3.0);
                axpy(0.5 * dt, d3, c2);
                field_vjp(cl, st[1], c2, 0.0, opts.qp, d2, res.d_theta1, res.d_theta2);
                Vec c1 = scaled(a, dt / 6.0);
                axpy(0.5 * dt, d2, c1);
                field_vjp(cl, st[0], c1, w.clf * dt, opts.qp, d1, res.d_theta1, res.d_theta2);
                dx = add(add(d1, d2), add(d3, d4));
            }
            axpy(1.0, dx, a);
        } catch (const DegenerateActiveSet& e) {
            throw DegenerateActiveSet(std::string("step ") + std::to_string(k) + ": " + e.what(),
                                      static_cast<std::ptrdiff_t>(k));
        }
    }
    return res;
}

// Full Jacobians of the closed-loop field and the running loss at one point.
struct FieldJacobians {
    Mat dF_dx, dF_dth1, dF_dth2;
    Vec dL_dx, dL_dth1, dL_dth2;
};

FieldJacobians field_jacobians(const ClosedLoop& cl, const FieldEval& e, const QpDiffOptions& qp_opts) {
    const ControlAffineSystem& sys = cl.system();
    const std::size_t n = sys.state_dim();
    const std::size_t m = sys.control_dim();
    const std::size_t np = cl.policy.num_params();
    const std::size_t nk = cl.filter.class_k.size();
    const Vec& u = e.filter.u_safe;

    const Mat pi_x = policy_jacobian_x(cl.policy, e.x);
    const Mat pi_th = policy_jacobian_theta(cl.policy, e.x);
    Mat tau_x, tau_th1, tau_th2(m, nk);
    if (filter_active(cl)) {
        const Mat jyx = qp_jacobian_full(e.filter.problem, e.filter.sol, qp_opts);
        const QpDataLayout lay = qp_data_layout(e.filter.problem);
        const std::size_t p = e.filter.problem.num_ineq();
        Mat du_dq(m, m), du_dG(m, p * m), du_dh(m, p);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < m; ++c) du_dq(r, c) = jyx(r, lay.q + c);
            for (std::size_t c = 0; c < p * m; ++c) du_dG(r, c) = jyx(r, lay.G + c);
            for (std::size_t c = 0; c < p; ++c) du_dh(r, c) = jyx(r, lay.h + c);
        }
        // q = -pi(x, theta1)
        const Mat du_dpi = -1.0 * du_dq;
        const CbfRowJacobians rj = build_rows_jacobians(cl.filter, e.x, e.t);
        tau_x = du_dpi * pi_x + du_dG * rj.dG_dx + du_dh * rj.dh_dx;
        tau_th1 = du_dpi * pi_th;
        tau_th2 = du_dG * rj.dG_dtheta2 + du_dh * rj.dh_dtheta2;
    } else {
        tau_x = pi_x;
        tau_th1 = pi_th;
    }

    const Mat g = sys.g(e.x, e.t);
    FieldJacobians fj;
    fj.dF_dx = sys.jacobian_f(e.x, e.t) + sys.jacobian_gu(e.x, u, e.t) + g * tau_x;
    fj.dF_dth1 = g * tau_th1;
    fj.dF_dth2 = g * tau_th2;
    fj.dL_dx.assign(n, 0.0);
    fj.dL_dth1.assign(np, 0.0);
    fj.dL_dth2.assign(nk, 0.0);
    if (e.clf_argument > 0.0) {
        const ClfSource src = clf_source_terms(cl.lyap, sys, e.x, u, e.t);
        fj.dL_dx = add(src.dx, vec_mat(src.du, tau_x));
        fj.dL_dth1 = vec_mat(src.du, tau_th1);
        fj.dL_dth2 = vec_mat(src.du, tau_th2);
    }
    return fj;
}

AdjointTrace adjoint_from_record(const ClosedLoop& cl, const ForwardRecord& rec, const SolveConfig& cfg,
                                 const GradientOptions& opts, GradientDiagnostics* diag) {
    const std::size_t n = cl.system().state_dim();
    const std::size_t n_steps = rec.steps.size();
    const LossWeights& w = opts.weights;
    AdjointTrace tr;
    tr.p.resize(n_steps + 1);
    tr.mu1.resize(n_steps + 1);
    tr.mu2.resize(n_steps + 1);

    // Boundary conditions at tf.
    tr.p[n_steps] = w.terminal != 0.0 ? scaled(cl.lyap.gradient(rec.terminal.x), w.terminal) : Vec(n, 0.0);
    tr.mu1[n_steps].assign(cl.policy.num_params(), 0.0);
    tr.mu2[n_steps].assign(cl.filter.class_k.size(), 0.0);

    auto jacobians_at = [&](std::size_t k) {
        const FieldEval& e = k == n_steps ? rec.terminal : rec.steps[k].front();
        try {
            return field_jacobians(cl, e, opts.qp);
        } catch (const DegenerateActiveSet& err) {
            throw DegenerateActiveSet(std::string("step ") + std::to_string(k) + ": " + err.what(),
                                      static_cast<std::ptrdiff_t>(k));
        }
    };
    // -pdot = p dF/dx + dL/dx, -mudot = p dF/dtheta + dL/dtheta
    auto add_rates = [&](const FieldJacobians& fj, const Vec& p, double h, Vec& dp, Vec& d1, Vec& d2) {
        axpy(h, vec_mat(p, fj.dF_dx), dp);
        axpy(h * w.clf, fj.dL_dx, dp);
        axpy(h, vec_mat(p, fj.dF_dth1), d1);
        axpy(h * w.clf, fj.dL_dth1, d1);
        axpy(h, vec_mat(p, fj.dF_dth2), d2);
        axpy(h * w.clf, fj.dL_dth2, d2);
    };

    // Heun steps in reverse time over the stored grid.
    std::vector<bool> prev_set = active_set(rec.terminal, opts.qp.margin);
    FieldJacobians right = jacobians_at(n_steps);
    for (std::size_t k = n_steps; k-- > 0;) {
        const FieldJacobians left = jacobians_at(k);
        const Vec& p = tr.p[k + 1];
        Vec predictor = p, scratch1(tr.mu1[k + 1].size()), scratch2(tr.mu2[k + 1].size());
        add_rates(right, p, cfg.dt, predictor, scratch1, scratch2);

        Vec p_next = p, mu1 = tr.mu1[k + 1], mu2 = tr.mu2[k + 1];
        add_rates(right, p, 0.5 * cfg.dt, p_next, mu1, mu2);
        add_rates(left, predictor, 0.5 * cfg.dt, p_next, mu1, mu2);
        tr.p[k] = std::move(p_next);
        tr.mu1[k] = std::move(mu1);
        tr.mu2[k] = std::move(mu2);
        right = left;

        if (diag) {
            const std::vector<bool> cur = active_set(rec.steps[k].front(), opts.qp.margin);
            if (cur != prev_set) ++diag->active_set_switches;
            prev_set = cur;
        }
    }
    return tr;
}

template <class Single>
GradientResult batch_gradient(const ClosedLoop& cl, std::span<const Vec> x0_batch, Single single) {
    if (x0_batch.empty()) throw std::invalid_argument("gradient: empty batch");
    std::vector<GradientResult> per(x0_batch.size());
    parallel_for(x0_batch.size(), [&](std::size_t i) { per[i] = single(x0_batch[i]); });
    GradientResult out;
    out.d_theta1.assign(cl.policy.num_params(), 0.0);
    out.d_theta2.assign(cl.filter.class_k.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(x0_batch.size());
    for (const auto& r : per) {
        out.loss += inv * r.loss;
        axpy(inv, r.d_theta1, out.d_theta1);
        axpy(inv, r.d_theta2, out.d_theta2);
        out.diagnostics.active_set_switches += r.diagnostics.active_set_switches;
        out.diagnostics.degenerate_points += r.diagnostics.degenerate_points;
    }
    return out;
}

}  // namespace

FieldEval evaluate_field(const ClosedLoop& cl, std::span<const double> x, double t) {
    FieldEval e;
    e.t = t;
    e.x.assign(x.begin(), x.end());
    e.filter = safety_filter(cl.filter, cl.policy, x, t);
    e.xdot = cl.system().closed_loop(x, e.filter.u_safe, t);
    e.barriers = barrier_values(cl.filter, x);
    e.lyapunov = cl.lyap.value(x);
    e.clf_argument = clf_argument(cl.lyap, x, e.xdot);
    e.loss = relu(e.clf_argument);
    return e;
}

Trajectory rollout(const ClosedLoop& cl, std::span<const double> x0, const SolveConfig& cfg) {
    const std::size_t n_steps = cfg.steps();
    Trajectory tr;
    Vec x(x0.begin(), x0.end());
    check_finite(x, 0);
    std::vector<FieldEval> stages;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = cfg.t0 + static_cast<double>(k) * cfg.dt;
        Vec next = integrate_step(cl, x, t, cfg.dt, cfg.method, static_cast<std::ptrdiff_t>(k), stages);
        record(tr, stages.front());
        check_finite(next, static_cast<std::ptrdiff_t>(k + 1));
        x = std::move(next);
    }
    record(tr, evaluate_at_step(cl, x, cfg.t0 + static_cast<double>(n_steps) * cfg.dt,
                                static_cast<std::ptrdiff_t>(n_steps)));
    return tr;
}

template <class T>
static T clf_argument_t(const Lyapunov& lyap, const ControlAffineSystem& sys, std::span<const T> x,
                        std::span<const double> u, double t) {
    const std::size_t n = sys.state_dim();
    const std::size_t m = sys.control_dim();
    std::vector<T> f(n), g(n * m);
    sys.drift(x, t, std::span<T>(f));
    sys.input_matrix(x, t, std::span<T>(g));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) f[i] = f[i] + g[i * m + j] * u[j];
    return lie_derivative<T>(*lyap.V, x, std::span<const T>(f)) + lyap.gamma * lyap.V->eval(x);
}

ClfSource clf_source_terms(const Lyapunov& lyap, const ControlAffineSystem& sys, std::span<const double> x,
                           std::span<const double> u_safe, double t) {
    const std::size_t n = sys.state_dim();
    ClfSource src;
    const double arg = clf_argument_t<double>(lyap, sys, x, u_safe, t);
    src.value = relu(arg);
    src.active = arg > 0.0;
    src.dx.assign(n, 0.0);
    src.du.assign(sys.control_dim(), 0.0);
    if (!src.active) return src;
    std::vector<D1> xs(n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) xs[i] = D1(x[i], i == k ? 1.0 : 0.0);
        src.dx[k] = clf_argument_t<D1>(lyap, sys, std::span<const D1>(xs), u_safe, t).d;
    }
    src.du = vec_mat(lyap.gradient(x), sys.g(x, t));
    return src;
}

double trajectory_loss(const ClosedLoop& cl, const Trajectory& traj, const LossWeights& w) {
    double loss = 0.0;
    for (std::size_t k = 0; k + 1 < traj.size(); ++k)
        loss += w.clf * traj.pointwise_loss[k] * (traj.times[k + 1] - traj.times[k]);
    if (w.terminal != 0.0) loss += w.terminal * terminal_value(cl, traj.states.back());
    return loss;
}

double batch_loss(const ClosedLoop& cl, std::span<const Vec> x0_batch, const SolveConfig& cfg,
                  const LossWeights& w) {
    if (x0_batch.empty()) return 0.0;
    std::vector<double> per(x0_batch.size());
    parallel_for(x0_batch.size(), [&](std::size_t i) { per[i] = trajectory_loss(cl, rollout(cl, x0_batch[i], cfg), w); });
    double total = 0.0;
    for (double v : per) total += v;
    return total / static_cast<double>(x0_batch.size());
}

GradientResult grad_discrete(const ClosedLoop& cl, std::span<const Vec> x0_batch, const SolveConfig& cfg,
                             const GradientOptions& opts) {
    return batch_gradient(cl, x0_batch, [&](const Vec& x0) { return single_discrete(cl, x0, cfg, opts); });
}

GradientResult grad_adjoint(const ClosedLoop& cl, std::span<const Vec> x0_batch, const SolveConfig& cfg,
                            const GradientOptions& opts) {
    return batch_gradient(cl, x0_batch, [&](const Vec& x0) {
        const ForwardRecord rec = forward_record(cl, x0, cfg);
        GradientResult r;
        for (const auto& st : rec.steps) r.loss += opts.weights.clf * cfg.dt * st.front().loss;
        r.loss += opts.weights.terminal * terminal_value(cl, rec.terminal.x);
        AdjointTrace tr = adjoint_from_record(cl, rec, cfg, opts, &r.diagnostics);
        r.d_theta1 = std::move(tr.mu1.front());
        r.d_theta2 = std::move(tr.mu2.front());
        return r;
    });
}

AdjointTrace adjoint_trace(const ClosedLoop& cl, std::span<const double> x0, const SolveConfig& cfg,
                           const GradientOptions& opts) {
    const ForwardRecord rec = forward_record(cl, x0, cfg);
    return adjoint_from_record(cl, rec, cfg, opts, nullptr);
}

}  // namespace optode
