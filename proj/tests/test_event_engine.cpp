#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "etwadc/events.hpp"
#include "etwadc/grid.hpp"
#include "etwadc/lti.hpp"
#include "etwadc/wadc.hpp"

using namespace etwadc;
using namespace etwadc::events;
using lti::LtiSystem;
using lti::Matrix;
using lti::Vector;

namespace {

const std::string kDataDir = ETWADC_DATA_DIR;

/// Scalar loop ẋ = -x + e_y with unit output selector.
wadc::ClosedLoop scalar_loop() {
    wadc::ClosedLoop loop;
    loop.a = Matrix::Constant(1, 1, -1.0);
    loop.b = Vector::Constant(1, 1.0);
    loop.c_tilde = Eigen::RowVectorXd::Constant(1, 1.0);
    loop.plant_states = 1;
    loop.controller_states = 0;
    loop.plant = LtiSystem(loop.a, loop.b, Matrix::Ones(2, 1), Matrix::Zero(2, 1));
    loop.controller = LtiSystem::gain(0.0);
    return loop;
}

struct TwoAreaRig {
    grid::Network net;
    grid::PowerFlowSolution pf;
    grid::DynamicModel fault_model;
    grid::DynamicModel eq_model;
    LtiSystem reduced;
    LtiSystem controller;
    wadc::ClosedLoop loop;  // calibrated as shipped in the scenario

    TwoAreaRig()
        : net(grid::load_network(kDataDir + "/two_area/bus.csv", kDataDir + "/two_area/branch.csv",
                                 kDataDir + "/two_area/machine.csv")),
          pf(grid::solve_power_flow(net, 1e-8, 20)),
          fault_model(grid::init_dynamics(net, pf, grid::FaultSchedule{8, 1.0, 1.133}, 4, pss())),
          eq_model(grid::init_dynamics(net, pf, grid::FaultSchedule{}, 4, pss())),
          reduced(lti::reduce_order(
              grid::deflate_reference_angle(eq_model,
                                            grid::linearize(eq_model, {3}, {{2, 4}, {3, 4}})),
              12)),
          controller(wadc::build_wadc(wadc_cfg())),
          loop(wadc::calibrate_certificate(reduced, controller, 0, 0.02)) {}

    static grid::PssDesign pss() {
        grid::PssDesign p;
        p.gain = 20.0;
        p.washout_s = 0.25;
        p.leadlag = {{0.4, 0.04}};
        return p;
    }

    static wadc::WadcConfig wadc_cfg() {
        wadc::WadcConfig cfg;
        cfg.gain = 30.0;
        cfg.washout_s = 10.0;
        cfg.lead_s = 0.3;
        cfg.lag_s = 0.05;
        cfg.delay_s = 0.1;
        return cfg;
    }

    Matrix identity_q() const { return Matrix::Identity(loop.order(), loop.order()); }

    static const TwoAreaRig& instance() {
        static TwoAreaRig rig;
        return rig;
    }
};

}  // namespace

TEST_CASE("threshold: scalar loop reduces to a bare sigma") {
    const auto loop = scalar_loop();
    Matrix q = Matrix::Constant(1, 1, 2.0);
    for (double sigma : {0.1, 0.5, 0.9}) {
        const TriggerConfig cfg = compute_trigger_threshold(loop, q, sigma);
        CHECK(cfg.p(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cfg.rho == doctest::Approx(sigma).epsilon(1e-12));
    }
}

TEST_CASE("threshold: vanishing sigma closes the continuous limit") {
    const auto loop = scalar_loop();
    const Matrix q = Matrix::Identity(1, 1);
    const double rho_small = compute_trigger_threshold(loop, q, 1e-12).rho;
    CHECK(rho_small <= 1e-12);
    CHECK(rho_small > 0.0);
}

TEST_CASE("threshold: power-of-two weight scaling leaves the coefficient bit-identical") {
    const auto& rig = TwoAreaRig::instance();
    const Matrix q = rig.identity_q();
    const TriggerConfig base = compute_trigger_threshold(rig.loop, q, 0.5);
    const TriggerConfig scaled = compute_trigger_threshold(rig.loop, 4.0 * q, 0.5);
    CHECK(base.rho == scaled.rho);
}

TEST_CASE("threshold: guards") {
    const auto loop = scalar_loop();
    const Matrix q = Matrix::Identity(1, 1);
    CHECK_THROWS_AS(compute_trigger_threshold(loop, q, 0.0), SigmaOutOfRange);
    CHECK_THROWS_AS(compute_trigger_threshold(loop, q, 1.0), SigmaOutOfRange);

    auto unstable = loop;
    unstable.a(0, 0) = 0.5;
    CHECK_THROWS_AS(compute_trigger_threshold(unstable, q, 0.5), UnstableClosedLoop);
}

TEST_CASE("trigger predicate: boundary semantics") {
    TriggerConfig cfg;
    cfg.rho = 0.25;
    CHECK(!check_trigger(1.0, 1.0, cfg));        // zero error never fires
    CHECK(check_trigger(0.1, 0.0, cfg));         // zero output, nonzero error
    CHECK(check_trigger(1.5, 1.0, cfg));         // ‖e‖² = ρ‖y‖² exactly: fires
    CHECK(!check_trigger(1.4999, 1.0, cfg));
}

TEST_CASE("event run: tiny sigma reproduces the periodic baseline") {
    const auto& rig = TwoAreaRig::instance();
    const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), 1e-10);
    const Vector x0 = modal_initial_state(rig.loop);
    const auto et = run_event_sim(rig.loop, cfg, x0, 0.005, 4.0);
    const auto periodic = run_event_sim(rig.loop, cfg, x0, 0.005, 4.0, true);
    CHECK((et.trace.states - periodic.trace.states).cwiseAbs().maxCoeff() <= 1e-9);
    // A step can legitimately skip only when the held error is exactly zero.
    CHECK(et.log.count() >= et.log.baseline_samples - 2);
}

TEST_CASE("event run: log invariants and hold reset") {
    const auto& rig = TwoAreaRig::instance();
    const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), 0.5);
    const Vector x0 = modal_initial_state(rig.loop);
    const auto result = run_event_sim(rig.loop, cfg, x0, 0.005, 10.0);

    REQUIRE(result.log.count() > 1);
    CHECK(result.log.instants.front() == 0.0);
    for (size_t k = 1; k < result.log.instants.size(); ++k) {
        CHECK(result.log.instants[k] > result.log.instants[k - 1]);
    }
    for (double tau : result.log.inter_event_times) {
        CHECK(tau >= 0.005 - 1e-12);
    }
    // Immediately after each refresh the recorded error is zero.
    const auto& ey = result.trace.channels.at("e_y");
    const auto& t = result.trace.time;
    for (double tk : result.log.instants) {
        const int idx = static_cast<int>(std::llround(tk / 0.005));
        CHECK(t(idx) == doctest::Approx(tk).epsilon(1e-12));
        CHECK(ey(idx) == 0.0);
    }
}

TEST_CASE("event run: trigger condition never exceeded at monitored steps") {
    const auto& rig = TwoAreaRig::instance();
    for (double sigma : {0.2, 0.9}) {
        const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), sigma);
        const auto result =
            run_event_sim(rig.loop, cfg, modal_initial_state(rig.loop), 0.005, 10.0);
        const auto& ey = result.trace.channels.at("e_y");
        const auto& y1 = result.trace.channels.at("y1");
        for (int k = 0; k + 1 < result.trace.samples(); ++k) {
            CHECK(ey(k) * ey(k) <= cfg.rho * y1(k) * y1(k) + 1e-9);
        }
    }
}

TEST_CASE("iss verification: continuous transmission decays at the full quadratic rate") {
    const auto& rig = TwoAreaRig::instance();
    const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), 0.5);
    const double dt = 1e-3;
    const auto result =
        run_event_sim(rig.loop, cfg, modal_initial_state(rig.loop), dt, 2.0, true);
    const auto report = verify_iss(result.trace, cfg);
    CHECK(report.trigger_violations == 0);
    CHECK(report.vdot_violations == 0);

    // V̇ ≈ −xᵀQx when the hold refreshes every step.
    double worst = 0.0;
    double scale = 0.0;
    for (int k = 0; k + 1 < result.trace.samples(); ++k) {
        const Vector x = result.trace.states.row(k).transpose();
        const double expected = -x.dot(cfg.q * x);
        worst = std::max(worst, std::abs(report.vdot(k) - expected));
        scale = std::max(scale, std::abs(expected));
    }
    CHECK(worst <= 0.01 * scale);
}

TEST_CASE("iss verification: event-triggered runs stay inside the decay bound") {
    const auto& rig = TwoAreaRig::instance();
    for (double sigma : {0.2, 0.5, 0.9}) {
        const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), sigma);
        const auto result =
            run_event_sim(rig.loop, cfg, modal_initial_state(rig.loop), 0.005, 10.0);
        const auto report = verify_iss(result.trace, cfg);
        CHECK(report.trigger_violations == 0);
        CHECK(report.vdot_violations == 0);
    }
}

TEST_CASE("iss verification: zero trace is vacuously clean") {
    const auto& rig = TwoAreaRig::instance();
    const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), 0.5);
    const auto result =
        run_event_sim(rig.loop, cfg, Vector::Zero(rig.loop.order()), 0.005, 1.0);
    const auto report = verify_iss(result.trace, cfg);
    CHECK(report.v.maxCoeff() == 0.0);
    CHECK(report.trigger_violations == 0);
    CHECK(report.vdot_violations == 0);
}

TEST_CASE("iss verification: nonlinear traces are rejected") {
    const auto& rig = TwoAreaRig::instance();
    const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), 0.5);
    NonlinearWadcSetup setup;
    setup.model = &rig.fault_model;
    setup.loop = &rig.loop;
    setup.wadc_machine_bus = 3;
    setup.remote_machine_bus = 2;
    setup.local_machine_bus = 3;
    const auto result = run_event_sim(setup, cfg, 0.005, 2.0);
    CHECK_THROWS_AS(verify_iss(result.trace, cfg), WrongMode);
}

TEST_CASE("inter-event bound: degenerate dynamics are an error") {
    CHECK_THROWS_AS(comparison_crossing_time(0.0, 1.0, 0.0, 0.5), Error);
}

TEST_CASE("inter-event bound: closed form matches direct integration") {
    // Symmetric coefficient triple, threshold 0.5.
    const double tau = comparison_crossing_time(1.0, 3.0, 1.0, 0.5);

    // Oracle: fine fixed-step integration of the scalar growth equation.
    double eta = 0.0, t = 0.0;
    const double h = 1e-6;
    while (eta < 0.5) {
        const double k1 = eta * eta + 3.0 * eta + 1.0;
        const double em = eta + 0.5 * h * k1;
        const double k2 = em * em + 3.0 * em + 1.0;
        eta += h * k2;  // midpoint rule
        t += h;
    }
    CHECK(tau == doctest::Approx(t).epsilon(0.01));
    CHECK(tau == doctest::Approx(0.29611).epsilon(1e-3));
}

TEST_CASE("inter-event bound: positive on the shipped fixture") {
    const auto& rig = TwoAreaRig::instance();
    for (double sigma : {0.2, 0.5, 0.9}) {
        const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), sigma);
        const auto bound = inter_event_bound(rig.loop, cfg);
        CHECK(bound.tau_min > 0.0);
        CHECK(bound.m3 == doctest::Approx(bound.m1 + bound.m2).epsilon(1e-12));
        CHECK(bound.eta_star == doctest::Approx(std::sqrt(cfg.rho)).epsilon(1e-12));
    }
}

TEST_CASE("trigger weight: scaling Q by four leaves events and trajectory bit-identical") {
    const auto& rig = TwoAreaRig::instance();
    const Matrix q = rig.identity_q();
    const TriggerConfig a = compute_trigger_threshold(rig.loop, q, 0.5);
    const TriggerConfig b = compute_trigger_threshold(rig.loop, 4.0 * q, 0.5);
    const Vector x0 = modal_initial_state(rig.loop);
    const auto ra = run_event_sim(rig.loop, a, x0, 0.005, 10.0);
    const auto rb = run_event_sim(rig.loop, b, x0, 0.005, 10.0);
    CHECK(a.rho == b.rho);
    CHECK(ra.log.instants == rb.log.instants);
    CHECK((ra.trace.states - rb.trace.states).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sigma monotonicity: transmissions never increase with sigma") {
    const auto& rig = TwoAreaRig::instance();
    const Vector x0 = modal_initial_state(rig.loop);
    int previous = 1 << 30;
    for (double sigma : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), sigma);
        const auto result = run_event_sim(rig.loop, cfg, x0, 0.005, 10.0);
        CHECK(result.log.count() <= previous);
        previous = result.log.count();
    }
}

TEST_CASE("continuous limit: vanishing sigma converges to the periodic trajectory") {
    const auto& rig = TwoAreaRig::instance();
    const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), 1e-8);
    const Vector x0 = modal_initial_state(rig.loop);
    const auto et = run_event_sim(rig.loop, cfg, x0, 0.005, 10.0);
    const auto periodic = run_event_sim(rig.loop, cfg, x0, 0.005, 10.0, true);
    CHECK((et.trace.states - periodic.trace.states).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("comparison table: single sigma gives a single row") {
    const auto& rig = TwoAreaRig::instance();
    const Vector x0 = modal_initial_state(rig.loop);
    auto runner = [&](double sigma) {
        const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), sigma);
        return run_event_sim(rig.loop, cfg, x0, 0.005, 10.0);
    };
    const auto rows = compare_transmissions(runner, {0.5});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].sigma == 0.5);
    CHECK(rows[0].baseline == 2000);
    CHECK(rows[0].et_count < 2000);
}

TEST_CASE("comparison table: transmissions fall strictly across the shipped sigmas") {
    const auto& rig = TwoAreaRig::instance();
    const Vector x0 = modal_initial_state(rig.loop);
    auto runner = [&](double sigma) {
        const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), sigma);
        return run_event_sim(rig.loop, cfg, x0, 0.005, 10.0);
    };
    const auto rows = compare_transmissions(runner, {0.2, 0.5, 0.9});
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK(row.baseline == 2000);
        CHECK(row.et_count * 2 < row.baseline);
        CHECK(row.tau_min_s >= 0.005 - 1e-12);
        CHECK(row.damping_metric > 0.0);
    }
    CHECK(rows[0].et_count > rows[1].et_count);
    CHECK(rows[1].et_count > rows[2].et_count);
}

TEST_CASE("nonlinear mode: event-triggered wide-area loop restores decay") {
    const auto& rig = TwoAreaRig::instance();
    NonlinearWadcSetup setup;
    setup.model = &rig.fault_model;
    setup.loop = &rig.loop;
    setup.wadc_machine_bus = 3;
    setup.remote_machine_bus = 2;
    setup.local_machine_bus = 3;

    const TriggerConfig cfg = compute_trigger_threshold(rig.loop, rig.identity_q(), 0.5);
    const auto result = run_event_sim(setup, cfg, 0.005, 10.0);
    const auto& y = result.trace.channels.at("y1");
    const double early = y.segment(300, 600).cwiseAbs().maxCoeff();
    const double late = y.segment(1400, 600).cwiseAbs().maxCoeff();
    CHECK(late < 0.5 * early);
    CHECK(result.log.count() * 2 < result.log.baseline_samples);
    // No transmissions before the disturbance arrives (beyond the initial one).
    for (size_t k = 1; k < result.log.instants.size(); ++k) {
        CHECK(result.log.instants[k] >= 1.0);
    }
}

TEST_CASE("stability margin: pushing sigma towards one starves the link") {
    const auto& rig = TwoAreaRig::instance();
    // Certificate deliberately calibrated at the starvation edge.
    const auto loop = wadc::calibrate_certificate(rig.reduced, rig.controller, 0, 1.05);
    NonlinearWadcSetup setup;
    setup.model = &rig.fault_model;
    setup.loop = &loop;
    setup.wadc_machine_bus = 3;
    setup.remote_machine_bus = 2;
    setup.local_machine_bus = 3;
    const Matrix q = Matrix::Identity(loop.order(), loop.order());

    std::vector<double> ratios;
    for (double sigma : {0.91, 0.96, 0.995}) {
        const TriggerConfig cfg = compute_trigger_threshold(loop, q, sigma);
        const auto result = run_event_sim(setup, cfg, 0.005, 10.0);
        const auto& y = result.trace.channels.at("y1");
        ratios.push_back(y.segment(1400, 600).cwiseAbs().maxCoeff() /
                         y.segment(300, 600).cwiseAbs().maxCoeff());
    }
    CHECK(ratios[0] < 0.9);       // still damped just above 0.9
    CHECK(ratios[1] >= ratios[0]);  // degrading as sigma grows
    CHECK(ratios[2] >= ratios[1]);
    CHECK(ratios[2] > 1.0);       // lost the damping before sigma reaches one
}
