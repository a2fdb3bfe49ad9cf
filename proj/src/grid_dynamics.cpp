#include <algorithm>
#include <cmath>
#include <numbers>

#include "etwadc/grid.hpp"

namespace etwadc::grid {

namespace {

constexpr Complex kImag(0.0, 1.0);
constexpr double kFaultAdmittance = 1e6;

lti::LtiSystem realize_pss(const PssDesign& design) {
    using lti::TransferFunction;
    lti::LtiSystem block =
        lti::realize(TransferFunction({design.gain * design.washout_s, 0.0}, {design.washout_s, 1.0}));
    for (const auto& [t1, t2] : design.leadlag) {
        block = lti::series(block, lti::realize(TransferFunction({t1, 1.0}, {t2, 1.0})));
    }
    return block;
}

}  // namespace

int DynamicModel::machine_index(int bus_id) const {
    for (size_t k = 0; k < machines.size(); ++k) {
        if (machines[k].bus == bus_id) {
            return static_cast<int>(k);
        }
    }
    throw ValidationError("no machine at bus " + std::to_string(bus_id));
}

int DynamicModel::stage_at(double t) const {
    if (fault.bus < 0) {
        return 0;
    }
    if (t >= fault.clear_s) {
        return 2;
    }
    if (t >= fault.start_s) {
        return 1;
    }
    return 0;
}

double DynamicModel::rotor_angle(const Eigen::VectorXd& x, int machine) const {
    return x(offset[machine]);
}

double DynamicModel::speed(const Eigen::VectorXd& x, int machine) const {
    return x(offset[machine] + 1);
}

double DynamicModel::relative_speed(const Eigen::VectorXd& x, int machine) const {
    return speed(x, machine) - speed(x, reference_machine);
}

double DynamicModel::relative_angle(const Eigen::VectorXd& x, int machine) const {
    return rotor_angle(x, machine) - rotor_angle(x, reference_machine);
}

double DynamicModel::pss_output(const Eigen::VectorXd& x, int machine) const {
    if (!has_pss[machine]) {
        return 0.0;
    }
    const lti::LtiSystem& blk = pss[machine];
    const int base = offset[machine] + 4;  // after [δ, Δω, E'q, E_fd]
    const double input = speed(x, machine);
    const double raw = (blk.C * x.segment(base, blk.order()))(0) + blk.D(0, 0) * input;
    return std::clamp(raw, -pss_limit, pss_limit);
}

Eigen::VectorXd DynamicModel::deriv(const Eigen::VectorXd& x, int stage, double u_wadc,
                                    int wadc_machine) const {
    const ComplexMatrix& y = y_stages[static_cast<size_t>(stage)];
    const int m = static_cast<int>(machines.size());

    ComplexVector e(m);
    for (int k = 0; k < m; ++k) {
        const double delta = x(offset[k]);
        const double mag =
            machines[k].model == MachineModel::Classical ? e_const(k) : x(offset[k] + 2);
        e(k) = std::polar(mag, delta);
    }
    const ComplexVector cur = y * e;

    Eigen::VectorXd dx(total_states);
    for (int k = 0; k < m; ++k) {
        const Machine& mc = machines[k];
        const int off = offset[k];
        const double delta = x(off);
        const double domega = x(off + 1);
        const double pe = (e(k) * std::conj(cur(k))).real();

        dx(off) = omega_s * domega;
        dx(off + 1) = (pm(k) - pe - mc.d * domega) / (2.0 * mc.h);

        if (mc.model == MachineModel::OneAxis) {
            const double eq = x(off + 2);
            const double efd = x(off + 3);
            const Complex rot = std::polar(1.0, -delta);
            const double id = -(cur(k) * rot).imag();
            const double vt = std::abs(e(k) - kImag * mc.xdp * cur(k));
            dx(off + 2) = (-eq - (mc.xd - mc.xdp) * id + efd) / mc.tdo;

            const double u_inj = (wadc_machine == k) ? u_wadc : 0.0;
            dx(off + 3) = (-efd + mc.ka * (vref(k) - vt + pss_output(x, k) + u_inj)) / mc.ta;

            if (has_pss[k]) {
                const lti::LtiSystem& blk = pss[k];
                const int base = off + 4;
                dx.segment(base, blk.order()) =
                    blk.A * x.segment(base, blk.order()) + blk.B * domega;
            }
        }
    }
    return dx;
}

std::string DynamicModel::state_label(int index) const {
    for (size_t k = 0; k < machines.size(); ++k) {
        const int off = offset[k];
        if (index < off || index >= off + count[k]) {
            continue;
        }
        const std::string tag = "m" + std::to_string(machines[k].bus);
        switch (index - off) {
            case 0:
                return tag + ":delta";
            case 1:
                return tag + ":domega";
            case 2:
                return tag + ":eqp";
            case 3:
                return tag + ":efd";
            default:
                return tag + ":pss" + std::to_string(index - off - 4);
        }
    }
    return "x" + std::to_string(index);
}

DynamicModel init_dynamics(const Network& net, const PowerFlowSolution& pf,
                           const FaultSchedule& fault, int reference_machine_bus,
                           const PssDesign& pss_design) {
    net.validate();
    if (net.machines.empty()) {
        throw ValidationError("init_dynamics: network has no machines");
    }
    const int nb = static_cast<int>(net.buses.size());
    const int m = static_cast<int>(net.machines.size());
    if (pf.v.size() != nb) {
        throw DimensionMismatch("init_dynamics: power-flow solution size mismatch");
    }

    DynamicModel model;
    model.net = net;
    model.machines = net.machines;
    model.fault = fault;
    model.omega_s = 2.0 * std::numbers::pi * net.f_hz;
    model.pss_limit = pss_design.limit;
    model.reference_machine = -1;
    for (int k = 0; k < m; ++k) {
        if (model.machines[k].bus == reference_machine_bus) {
            model.reference_machine = k;
        }
    }
    if (model.reference_machine < 0) {
        throw ValidationError("init_dynamics: reference machine bus " +
                              std::to_string(reference_machine_bus) + " hosts no machine");
    }

    std::vector<int> mach_at_bus(nb, -1);
    for (int k = 0; k < m; ++k) {
        mach_at_bus[net.bus_index(model.machines[k].bus)] = k;
    }

    // Net withdrawals become constant admittances at the solved voltage.
    // A negative net value at a machine bus is dispatch, not load.
    auto load_at_bus = [&](int i) -> Complex {
        const Bus& bus = net.buses[i];
        if (mach_at_bus[i] >= 0 && bus.pload < 0.0) {
            return Complex(0.0, 0.0);
        }
        return Complex(bus.pload, bus.qload);
    };

    const ComplexMatrix y_net = bus_admittance(net);
    ComplexMatrix yaug = ComplexMatrix::Zero(nb + m, nb + m);
    yaug.topLeftCorner(nb, nb) = y_net;
    for (int i = 0; i < nb; ++i) {
        const Complex s_load = load_at_bus(i);
        if (s_load != Complex(0.0, 0.0)) {
            yaug(i, i) += std::conj(s_load) / std::norm(pf.v(i));
        }
    }
    std::vector<int> keep(m);
    for (int k = 0; k < m; ++k) {
        const int term = net.bus_index(model.machines[k].bus);
        const int node = nb + k;
        const Complex link = 1.0 / (kImag * model.machines[k].xdp);
        yaug(node, node) += link;
        yaug(term, term) += link;
        yaug(node, term) -= link;
        yaug(term, node) -= link;
        keep[k] = node;
    }

    model.y_stages.resize(3);
    model.y_stages[0] = kron_reduce(yaug, keep);
    if (fault.bus >= 0) {
        ComplexMatrix yf = yaug;
        yf(net.bus_index(fault.bus), net.bus_index(fault.bus)) += kFaultAdmittance;
        model.y_stages[1] = kron_reduce(yf, keep);
    } else {
        model.y_stages[1] = model.y_stages[0];
    }
    model.y_stages[2] = model.y_stages[0];

    // State layout and stabiliser realisations.
    const lti::LtiSystem pss_template = realize_pss(pss_design);
    model.pss.resize(m);
    model.has_pss.resize(m);
    model.offset.resize(m);
    model.count.resize(m);
    int total = 0;
    for (int k = 0; k < m; ++k) {
        model.has_pss[k] = model.machines[k].pss;
        if (model.has_pss[k]) {
            model.pss[k] = pss_template;
        }
        model.offset[k] = total;
        int c = model.machines[k].model == MachineModel::Classical ? 2 : 4;
        if (model.has_pss[k]) {
            c += pss_template.order();
        }
        model.count[k] = c;
        total += c;
    }
    model.total_states = total;

    // Internal voltages from the solved operating point.
    const ComplexVector i_bus = y_net * pf.v;
    model.e_const = Eigen::VectorXd::Zero(m);
    model.pm = Eigen::VectorXd::Zero(m);
    model.vref = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(total);
    for (int k = 0; k < m; ++k) {
        const Machine& mc = model.machines[k];
        const int i = net.bus_index(mc.bus);
        const Complex v = pf.v(i);
        const Complex s_inj = v * std::conj(i_bus(i));
        const Complex s_mach = s_inj + load_at_bus(i);
        const Complex i_mach = std::conj(s_mach / v);
        const Complex e_int = v + kImag * mc.xdp * i_mach;

        x0(model.offset[k]) = std::arg(e_int);
        if (mc.model == MachineModel::Classical) {
            model.e_const(k) = std::abs(e_int);
        } else {
            x0(model.offset[k] + 2) = std::abs(e_int);
        }
    }

    // Close the remaining unknowns through the model's own network
    // evaluation so the stored state is an exact equilibrium.
    model.x0 = x0;
    {
        ComplexVector e(m);
        for (int k = 0; k < m; ++k) {
            const double delta = x0(model.offset[k]);
            const double mag =
                model.machines[k].model == MachineModel::Classical ? model.e_const(k)
                                                                   : x0(model.offset[k] + 2);
            e(k) = std::polar(mag, delta);
        }
        const ComplexVector cur = model.y_stages[0] * e;
        for (int k = 0; k < m; ++k) {
            const Machine& mc = model.machines[k];
            const int off = model.offset[k];
            model.pm(k) = (e(k) * std::conj(cur(k))).real();
            if (mc.model == MachineModel::OneAxis) {
                const Complex rot = std::polar(1.0, -x0(off));
                const double id = -(cur(k) * rot).imag();
                const double vt = std::abs(e(k) - kImag * mc.xdp * cur(k));
                const double efd = x0(off + 2) + (mc.xd - mc.xdp) * id;
                x0(off + 3) = efd;
                model.vref(k) = vt + efd / mc.ka;
            }
        }
    }
    model.x0 = x0;

    const double residual = model.deriv(x0, 0).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-8)) {
        throw EquilibriumResidual("init_dynamics: initial derivative residual " +
                                  std::to_string(residual));
    }
    return model;
}

lti::SimTrace simulate_nonlinear(const DynamicModel& model,
                                 const std::function<double(double)>& wadc_input,
                                 int wadc_machine_bus, double dt, double t_end) {
    if (dt <= 0.0) {
        throw ValidationError("simulate_nonlinear: dt must be positive");
    }
    if (model.fault.bus >= 0 && t_end < model.fault.clear_s) {
        throw ValidationError("simulate_nonlinear: simulation ends before the fault clears");
    }
    const int wadc_machine = wadc_input ? model.machine_index(wadc_machine_bus) : -1;
    const int steps = static_cast<int>(std::llround(t_end / dt));
    const int m = static_cast<int>(model.machines.size());

    lti::SimTrace trace;
    trace.kind = lti::TraceKind::Nonlinear;
    trace.time = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, steps * dt);
    trace.states.resize(steps + 1, model.total_states);
    trace.outputs.resize(steps + 1, m);

    std::vector<Eigen::VectorXd> delta(m, Eigen::VectorXd(steps + 1));
    std::vector<Eigen::VectorXd> delta_rel(m, Eigen::VectorXd(steps + 1));
    std::vector<Eigen::VectorXd> omega_rel(m, Eigen::VectorXd(steps + 1));
    std::vector<Eigen::VectorXd> u_pss(m, Eigen::VectorXd(steps + 1));
    Eigen::VectorXd u_wadc_ch = Eigen::VectorXd::Zero(steps + 1);

    Eigen::VectorXd x = model.x0;
    for (int k = 0; k <= steps; ++k) {
        const double t = k * dt;
        trace.states.row(k) = x.transpose();
        for (int i = 0; i < m; ++i) {
            trace.outputs(k, i) = model.speed(x, i);
            delta[i](k) = model.rotor_angle(x, i);
            delta_rel[i](k) = model.relative_angle(x, i);
            omega_rel[i](k) = model.relative_speed(x, i);
            u_pss[i](k) = model.pss_output(x, i);
            if (std::abs(delta_rel[i](k)) > std::numbers::pi) {
                trace.loss_of_synchronism = true;
            }
        }
        if (k == steps) {
            break;
        }
        const int stage = model.stage_at(t);
        const double u = wadc_input ? wadc_input(t) : 0.0;
        u_wadc_ch(k) = u;
        auto f = [&](double, const Eigen::VectorXd& xs) {
            return model.deriv(xs, stage, u, wadc_machine);
        };
        x = lti::detail::rk4_step(f, t, x, dt);
        lti::detail::check_state_finite(x, t + dt);
    }

    for (int i = 0; i < m; ++i) {
        const std::string tag = std::to_string(model.machines[i].bus);
        trace.channels["delta_" + tag] = delta[i];
        trace.channels["delta_rel_" + tag] = delta_rel[i];
        trace.channels["omega_rel_" + tag] = omega_rel[i];
        trace.channels["u_pss_" + tag] = u_pss[i];
    }
    trace.channels["u_wadc"] = u_wadc_ch;
    return trace;
}

lti::SimTrace simulate_nonlinear(const DynamicModel& model, double dt, double t_end) {
    return simulate_nonlinear(model, nullptr, -1, dt, t_end);
}

namespace detail {

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x0, double h) {
    const auto n = x0.size();
    Eigen::MatrixXd jac;
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd xp = x0;
        Eigen::VectorXd xm = x0;
        xp(j) += h;
        xm(j) -= h;
        const Eigen::VectorXd column = (f(xp) - f(xm)) / (2.0 * h);
        if (jac.size() == 0) {
            jac.resize(column.size(), n);
        }
        jac.col(j) = column;
    }
    return jac;
}

}  // namespace detail

lti::LtiSystem deflate_reference_angle(const DynamicModel& model, const lti::LtiSystem& plant) {
    if (plant.order() != model.total_states) {
        throw DimensionMismatch("deflate_reference_angle: plant does not match the model layout");
    }
    const int n = model.total_states;
    const int ref_angle = model.offset[model.reference_machine];

    // Projection onto relative coordinates and its gauge-fixed embedding
    // (reference angle pinned at zero). The vector field is invariant along
    // the uniform-angle direction, so P·A·S is an exact reduction.
    Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(n - 1, n);
    Eigen::MatrixXd embed = Eigen::MatrixXd::Zero(n, n - 1);
    int row = 0;
    for (int i = 0; i < n; ++i) {
        if (i == ref_angle) {
            continue;
        }
        proj(row, i) = 1.0;
        embed(i, row) = 1.0;
        ++row;
    }
    for (size_t k = 0; k < model.machines.size(); ++k) {
        if (static_cast<int>(k) == model.reference_machine) {
            continue;
        }
        const int idx = model.offset[k];  // this machine's angle state
        proj(idx < ref_angle ? idx : idx - 1, ref_angle) = -1.0;
    }

    lti::LtiSystem out(proj * plant.A * embed, proj * plant.B, plant.C * embed, plant.D);
    if (!plant.state_labels.empty()) {
        for (int i = 0; i < n; ++i) {
            if (i != ref_angle) {
                out.state_labels.push_back(plant.state_labels[i]);
            }
        }
    }
    return out;
}

lti::LtiSystem linearize(const DynamicModel& model, const std::vector<int>& input_machine_buses,
                         const std::vector<std::pair<int, int>>& output_pairs, double h) {
    if (h <= 0.0) {
        throw ValidationError("linearize: perturbation size must be positive");
    }
    const double residual = model.deriv(model.x0, 0).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-8)) {
        throw EquilibriumResidual("linearize: model is not at equilibrium");
    }

    const Eigen::MatrixXd a = detail::fd_jacobian(
        [&](const Eigen::VectorXd& x) { return model.deriv(x, 0); }, model.x0, h);

    Eigen::MatrixXd b(model.total_states, static_cast<Eigen::Index>(input_machine_buses.size()));
    for (size_t j = 0; j < input_machine_buses.size(); ++j) {
        const int k = model.machine_index(input_machine_buses[j]);
        if (model.machines[k].model != MachineModel::OneAxis) {
            throw ValidationError("linearize: machine at bus " +
                                  std::to_string(input_machine_buses[j]) +
                                  " has no excitation input");
        }
        b.col(static_cast<Eigen::Index>(j)) =
            (model.deriv(model.x0, 0, h, k) - model.deriv(model.x0, 0, -h, k)) / (2.0 * h);
    }

    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(output_pairs.size()),
                                              model.total_states);
    for (size_t r = 0; r < output_pairs.size(); ++r) {
        const int mk = model.machine_index(output_pairs[r].first);
        const int rk = model.machine_index(output_pairs[r].second);
        c(static_cast<Eigen::Index>(r), model.offset[mk] + 1) += 1.0;
        c(static_cast<Eigen::Index>(r), model.offset[rk] + 1) -= 1.0;
    }
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c.rows(), b.cols());

    lti::LtiSystem plant(a, b, c, d);
    plant.state_labels.resize(model.total_states);
    for (int i = 0; i < model.total_states; ++i) {
        plant.state_labels[i] = model.state_label(i);
    }
    return plant;
}

}  // namespace etwadc::grid
