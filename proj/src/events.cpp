#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "etwadc/events.hpp"

namespace etwadc::events {

namespace {

double lambda_min_sym(const Eigen::MatrixXd& q) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
    return es.eigenvalues().minCoeff();
}

}  // namespace

TriggerConfig compute_trigger_threshold(const wadc::ClosedLoop& loop, const Eigen::MatrixXd& q,
                                        double sigma) {
    if (!(sigma > 0.0 && sigma < 1.0)) {
        throw SigmaOutOfRange("compute_trigger_threshold: sigma must lie in (0,1)");
    }
    const Eigen::VectorXcd eig = loop.a.eigenvalues();
    if (eig.real().maxCoeff() >= 0.0) {
        throw UnstableClosedLoop("compute_trigger_threshold: closed loop is not Hurwitz");
    }
    const double lam_min = lambda_min_sym(q);
    if (lam_min <= 0.0) {
        throw ValidationError("compute_trigger_threshold: Q must be positive definite");
    }

    TriggerConfig cfg;
    cfg.sigma = sigma;
    cfg.q = q;
    cfg.p = lti::solve_lyapunov(loop.a, q);
    const double pb_norm = lti::spectral_norm(cfg.p * loop.b);
    const double c_norm2 = loop.c_tilde.squaredNorm();
    cfg.rho = sigma * lam_min * lam_min / (4.0 * pb_norm * pb_norm * c_norm2);
    return cfg;
}

bool check_trigger(double y1_held, double y1_now, const TriggerConfig& cfg) {
    const double ey2 = (y1_held - y1_now) * (y1_held - y1_now);
    if (ey2 == 0.0) {
        return false;
    }
    return ey2 >= cfg.rho * y1_now * y1_now;
}

double EventLog::min_tau() const {
    return inter_event_times.empty()
               ? 0.0
               : *std::min_element(inter_event_times.begin(), inter_event_times.end());
}

double EventLog::mean_tau() const {
    if (inter_event_times.empty()) {
        return 0.0;
    }
    return std::accumulate(inter_event_times.begin(), inter_event_times.end(), 0.0) /
           static_cast<double>(inter_event_times.size());
}

double EventLog::max_tau() const {
    return inter_event_times.empty()
               ? 0.0
               : *std::max_element(inter_event_times.begin(), inter_event_times.end());
}

Eigen::VectorXd modal_initial_state(const wadc::ClosedLoop& loop) {
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(loop.order());
    const auto plant_modes = lti::modes(loop.plant.A);
    for (const auto& mode : plant_modes) {  // worst damped first
        if (mode.eigenvalue.imag() > 0.0) {
            Eigen::VectorXd shape = mode.right_eigenvector.real();
            const double nrm = shape.norm();
            if (nrm > 0.0) {
                x0.head(loop.plant_states) = shape / nrm;
                return x0;
            }
        }
    }
    x0.head(loop.plant_states).setOnes();
    x0 /= x0.norm();
    return x0;
}

EventSimResult run_event_sim(const wadc::ClosedLoop& loop, const TriggerConfig& cfg,
                             const Eigen::VectorXd& x0, double dt, double t_end, bool continuous) {
    if (dt <= 0.0) {
        throw ValidationError("run_event_sim: dt must be positive");
    }
    if (x0.size() != loop.order()) {
        throw DimensionMismatch("run_event_sim: initial state size mismatch");
    }
    const int steps = static_cast<int>(std::llround(t_end / dt));
    const int n = loop.order();

    // Between refreshes e_y = held − C̃x, so the held signal drives
    // ẋ = (A − B·C̃)x + B·held.
    const Eigen::MatrixXd a_hold = loop.a - loop.b * loop.c_tilde;

    EventSimResult result;
    lti::SimTrace& trace = result.trace;
    trace.kind = lti::TraceKind::LinearAugmented;
    trace.time = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, steps * dt);
    trace.states.resize(steps + 1, n);
    trace.outputs.resize(steps + 1, 1);
    Eigen::VectorXd y1(steps + 1), y1_held(steps + 1), ey(steps + 1), threshold(steps + 1),
        u_p(steps + 1), lyap(steps + 1);

    EventLog& log = result.log;
    log.baseline_samples = steps;

    const bool have_p = cfg.p.size() == n * n;
    Eigen::VectorXd x = x0;
    double held = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const double t = trace.time(k);
        const double y_now = loop.c_tilde * x;
        if (k < steps) {
            // The initial measurement is always transmitted (t0 = 0).
            const bool fire = continuous || k == 0 || check_trigger(held, y_now, cfg);
            if (fire) {
                if (!log.instants.empty()) {
                    log.inter_event_times.push_back(t - log.instants.back());
                }
                log.error_at_fire.push_back(std::abs(held - y_now));
                held = y_now;
                log.instants.push_back(t);
                log.held_values.push_back(held);
            }
        }
        trace.states.row(k) = x.transpose();
        trace.outputs(k, 0) = y_now;
        y1(k) = y_now;
        y1_held(k) = held;
        ey(k) = held - y_now;
        threshold(k) = std::sqrt(cfg.rho) * std::abs(y_now);
        u_p(k) = loop.control_input(x, ey(k));
        lyap(k) = have_p ? x.dot(cfg.p * x) : 0.0;
        if (k == steps) {
            break;
        }
        auto f = [&](double, const Eigen::VectorXd& xs) -> Eigen::VectorXd {
            return a_hold * xs + loop.b * held;
        };
        x = lti::detail::rk4_step(f, t, x, dt);
        lti::detail::check_state_finite(x, t + dt);
    }

    trace.channels["y1"] = y1;
    trace.channels["y1_held"] = y1_held;
    trace.channels["e_y"] = ey;
    trace.channels["threshold"] = threshold;
    trace.channels["u_p"] = u_p;
    trace.channels["lyapunov"] = lyap;
    return result;
}

EventSimResult run_event_sim(const NonlinearWadcSetup& setup, const TriggerConfig& cfg, double dt,
                             double t_end, bool continuous) {
    if (dt <= 0.0) {
        throw ValidationError("run_event_sim: dt must be positive");
    }
    const grid::DynamicModel& model = *setup.model;
    const lti::LtiSystem& ctrl = setup.loop->controller;
    const int nm = model.total_states;
    const int nc = ctrl.order();
    const int wadc_k = model.machine_index(setup.wadc_machine_bus);
    const int remote_k = model.machine_index(setup.remote_machine_bus);
    const int local_k = model.machine_index(setup.local_machine_bus);
    const int steps = static_cast<int>(std::llround(t_end / dt));

    auto clamp_u = [&](double u) {
        if (setup.output_limit) {
            return std::clamp(u, -*setup.output_limit, *setup.output_limit);
        }
        return u;
    };

    EventSimResult result;
    lti::SimTrace& trace = result.trace;
    trace.kind = lti::TraceKind::Nonlinear;
    trace.time = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, steps * dt);
    trace.states.resize(steps + 1, nm + nc);
    trace.outputs.resize(steps + 1, static_cast<int>(model.machines.size()));
    Eigen::VectorXd y1(steps + 1), y1_held(steps + 1), ey(steps + 1), threshold(steps + 1),
        u_p(steps + 1);
    std::vector<Eigen::VectorXd> delta_rel(model.machines.size(),
                                           Eigen::VectorXd(steps + 1));

    EventLog& log = result.log;
    log.baseline_samples = steps;

    Eigen::VectorXd z = Eigen::VectorXd::Zero(nm + nc);
    z.head(nm) = model.x0;
    double held = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const double t = trace.time(k);
        const double y_now = model.relative_speed(z.head(nm), remote_k);
        if (k < steps) {
            const bool fire = continuous || k == 0 || check_trigger(held, y_now, cfg);
            if (fire) {
                if (!log.instants.empty()) {
                    log.inter_event_times.push_back(t - log.instants.back());
                }
                log.error_at_fire.push_back(std::abs(held - y_now));
                held = y_now;
                log.instants.push_back(t);
                log.held_values.push_back(held);
            }
        }
        trace.states.row(k) = z.transpose();
        for (size_t i = 0; i < model.machines.size(); ++i) {
            trace.outputs(k, static_cast<int>(i)) = model.speed(z.head(nm), static_cast<int>(i));
            delta_rel[i](k) = model.relative_angle(z.head(nm), static_cast<int>(i));
            if (std::abs(delta_rel[i](k)) > std::numbers::pi) {
                trace.loss_of_synchronism = true;
            }
        }
        y1(k) = y_now;
        y1_held(k) = held;
        ey(k) = held - y_now;
        threshold(k) = std::sqrt(cfg.rho) * std::abs(y_now);
        {
            const double ctrl_in = model.relative_speed(z.head(nm), local_k) - held;
            u_p(k) = clamp_u((ctrl.C * z.tail(nc))(0) + ctrl.D(0, 0) * ctrl_in);
        }
        if (k == steps) {
            break;
        }
        const int stage = model.stage_at(t);
        auto f = [&](double, const Eigen::VectorXd& zs) -> Eigen::VectorXd {
            Eigen::VectorXd dz(nm + nc);
            const double ctrl_in = model.relative_speed(zs.head(nm), local_k) - held;
            const double u = clamp_u((ctrl.C * zs.tail(nc))(0) + ctrl.D(0, 0) * ctrl_in);
            dz.head(nm) = model.deriv(zs.head(nm), stage, u, wadc_k);
            dz.tail(nc) = ctrl.A * zs.tail(nc) + ctrl.B * ctrl_in;
            return dz;
        };
        z = lti::detail::rk4_step(f, t, z, dt);
        lti::detail::check_state_finite(z, t + dt);
    }

    trace.channels["y1"] = y1;
    trace.channels["y1_held"] = y1_held;
    trace.channels["e_y"] = ey;
    trace.channels["threshold"] = threshold;
    trace.channels["u_p"] = u_p;
    for (size_t i = 0; i < model.machines.size(); ++i) {
        trace.channels["delta_rel_" + std::to_string(model.machines[i].bus)] = delta_rel[i];
    }
    return result;
}

IssReport verify_iss(const lti::SimTrace& trace, const TriggerConfig& cfg) {
    if (trace.kind != lti::TraceKind::LinearAugmented) {
        throw WrongMode("verify_iss: trace does not carry the augmented linear state");
    }
    const int n = static_cast<int>(trace.states.cols());
    if (cfg.p.rows() != n || cfg.p.cols() != n) {
        throw DimensionMismatch("verify_iss: Lyapunov matrix does not match trace state size");
    }
    const auto& y1 = trace.channels.at("y1");
    const auto& ey = trace.channels.at("e_y");
    const int samples = trace.samples();
    const double lam_min = lambda_min_sym(cfg.q);

    IssReport report;
    report.v.resize(samples);
    for (int k = 0; k < samples; ++k) {
        const Eigen::VectorXd x = trace.states.row(k).transpose();
        report.v(k) = x.dot(cfg.p * x);
    }
    const double v_max = report.v.maxCoeff();
    const double tol = 1e-6 * v_max;

    report.vdot.resize(samples - 1);
    report.bound.resize(samples - 1);
    for (int k = 0; k + 1 < samples; ++k) {
        const double dt = trace.time(k + 1) - trace.time(k);
        report.vdot(k) = (report.v(k + 1) - report.v(k)) / dt;
        const double xsq = trace.states.row(k).squaredNorm();
        report.bound(k) = -(1.0 - cfg.sigma) * 0.5 * lam_min * xsq;
        const double excess = report.vdot(k) - report.bound(k);
        if (excess > tol) {
            ++report.vdot_violations;
            report.max_violation = std::max(report.max_violation, excess);
        }
        if (ey(k) * ey(k) > cfg.rho * y1(k) * y1(k) + 1e-9) {
            ++report.trigger_violations;
            report.max_violation =
                std::max(report.max_violation, ey(k) * ey(k) - cfg.rho * y1(k) * y1(k));
        }
    }
    return report;
}

double comparison_crossing_time(double quad, double lin, double cons, double eta_star) {
    if (eta_star <= 0.0) {
        throw ValidationError("comparison_crossing_time: threshold must be positive");
    }
    if (quad == 0.0 && cons == 0.0) {
        throw Error("comparison_crossing_time: drive-free dynamics never reach the threshold");
    }
    if (quad == 0.0) {
        // η̇ = lin·η + cons with η(0) = 0.
        if (lin == 0.0) {
            return eta_star / cons;
        }
        return std::log(1.0 + lin * eta_star / cons) / lin;
    }
    const double disc = lin * lin - 4.0 * quad * cons;
    if (disc <= 0.0) {
        return comparison_crossing_time_ode(quad, lin, cons, eta_star);
    }
    const double root = std::sqrt(disc);
    const double r_plus = (-lin + root) / (2.0 * quad);
    const double r_minus = (-lin - root) / (2.0 * quad);
    return std::log(((eta_star - r_plus) * (0.0 - r_minus)) /
                    ((eta_star - r_minus) * (0.0 - r_plus))) /
           root;
}

double comparison_crossing_time_ode(double quad, double lin, double cons, double eta_star) {
    if (quad == 0.0 && cons == 0.0) {
        throw Error("comparison_crossing_time_ode: drive-free dynamics never reach the threshold");
    }
    double eta = 0.0;
    double t = 0.0;
    // Step resolves both the local growth rate and the distance to the
    // threshold, so short crossing times stay well sampled.
    for (int iter = 0; iter < 20000000; ++iter) {
        const double rate = quad * eta * eta + lin * eta + cons;
        if (rate <= 0.0) {
            throw Error("comparison_crossing_time_ode: dynamics stalled before the threshold");
        }
        const double dt = std::min(std::min(1.0 + eta, eta_star) / (512.0 * rate), 1e-3);
        const double eta_prev = eta;
        Eigen::VectorXd state(1);
        state(0) = eta;
        auto f = [&](double, const Eigen::VectorXd& s) -> Eigen::VectorXd {
            Eigen::VectorXd d(1);
            d(0) = quad * s(0) * s(0) + lin * s(0) + cons;
            return d;
        };
        state = lti::detail::rk4_step(f, t, state, dt);
        eta = state(0);
        t += dt;
        if (eta >= eta_star) {
            // Linear interpolation inside the crossing step.
            const double frac = (eta_star - eta_prev) / (eta - eta_prev);
            return t - dt + frac * dt;
        }
    }
    throw Error("comparison_crossing_time_ode: threshold not reached");
}

InterEventBound inter_event_bound(const wadc::ClosedLoop& loop, const TriggerConfig& cfg) {
    InterEventBound bound;
    const Eigen::RowVectorXd ca = loop.c_tilde * loop.a;
    const double c_norm = loop.c_tilde.norm();
    bound.m1 = ca.norm() / c_norm;
    bound.m2 = std::abs(loop.c_tilde * loop.b);
    bound.m3 = bound.m1 + bound.m2;
    bound.eta_star = std::sqrt(cfg.rho);
    bound.note = "drive term ‖C̃A‖ and error gain ‖C̃B‖ taken from the time derivative of the "
                 "held-measurement error; the error gain multiplies the quadratic term of the "
                 "comparison dynamics";

    if (bound.m1 == 0.0 && bound.m2 == 0.0) {
        throw Error("inter_event_bound: drive-free loop, bound undefined");
    }
    // η̇ = M₂η² + M₃η + M₁; the discriminant M₃² − 4M₁M₂ is symmetric in
    // the two coefficients.
    const double disc = bound.m3 * bound.m3 - 4.0 * bound.m1 * bound.m2;
    if (disc <= 0.0 && bound.m2 != 0.0) {
        bound.discriminant_ok = false;
        bound.tau_min = comparison_crossing_time_ode(bound.m2, bound.m3, bound.m1, bound.eta_star);
        return bound;
    }
    bound.discriminant_ok = true;
    bound.tau_min = comparison_crossing_time(bound.m2, bound.m3, bound.m1, bound.eta_star);
    const double ode_time =
        comparison_crossing_time_ode(bound.m2, bound.m3, bound.m1, bound.eta_star);
    if (std::abs(ode_time - bound.tau_min) > 0.01 * bound.tau_min) {
        throw Error("inter_event_bound: closed form and integrated crossing times disagree");
    }
    return bound;
}

double log_decrement(const Eigen::VectorXd& time, const Eigen::VectorXd& signal, double window_s) {
    const int n = static_cast<int>(time.size());
    if (n < 3) {
        return 0.0;
    }
    const double t_start = time(n - 1) - window_s;
    const double floor = 1e-12 * signal.cwiseAbs().maxCoeff();

    std::vector<double> peaks;
    for (int k = 1; k + 1 < n; ++k) {
        if (time(k) < t_start) {
            continue;
        }
        const double a = std::abs(signal(k));
        if (a > floor && a >= std::abs(signal(k - 1)) && a >= std::abs(signal(k + 1))) {
            peaks.push_back(a);
        }
    }
    if (peaks.size() < 2 || peaks.front() <= 0.0 || peaks.back() <= 0.0) {
        return 0.0;
    }
    return std::log(peaks.front() / peaks.back()) / static_cast<double>(peaks.size() - 1);
}

std::vector<ComparisonRow> compare_transmissions(
    const std::function<EventSimResult(double)>& run_sigma, const std::vector<double>& sigmas) {
    std::vector<ComparisonRow> rows;
    rows.reserve(sigmas.size());
    for (double sigma : sigmas) {
        const EventSimResult result = run_sigma(sigma);
        ComparisonRow row;
        row.sigma = sigma;
        row.baseline = result.log.baseline_samples;
        row.et_count = result.log.count();
        row.tau_min_s = result.log.min_tau();
        row.tau_mean_s = result.log.mean_tau();
        row.tau_max_s = result.log.max_tau();
        row.damping_metric = log_decrement(result.trace.time, result.trace.channels.at("y1"));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace etwadc::events
