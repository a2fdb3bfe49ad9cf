#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "etwadc/errors.hpp"
#include "etwadc/lti.hpp"

namespace etwadc::grid {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

enum class BusType { Slack, PV, PQ };

/// Loads are net scheduled withdrawals on the system base; a negative
/// pload_pu dispatches generation at that bus.
struct Bus {
    int id = 0;
    BusType type = BusType::PQ;
    double vm = 1.0;
    double va = 0.0;
    double pload = 0.0;
    double qload = 0.0;
    double gshunt = 0.0;
    double bshunt = 0.0;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;
    double tap = 1.0;  // off-nominal ratio on the from side; 1 = nominal
};

enum class MachineModel { Classical, OneAxis };

struct Machine {
    int bus = 0;
    MachineModel model = MachineModel::Classical;
    double h = 0.0;    // inertia constant, s
    double d = 0.0;    // damping, pu torque / pu speed
    double xd = 0.0;
    double xq = 0.0;
    double xdp = 0.0;  // transient reactance
    double tdo = 0.0;  // open-circuit time constant, s
    double ka = 0.0;   // exciter gain
    double ta = 0.0;   // exciter time constant, s
    bool pss = false;
};

struct Network {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Machine> machines;
    double base_mva = 100.0;
    double f_hz = 60.0;

    int bus_index(int id) const;
    void validate() const;
};

Network load_network(const std::string& bus_file, const std::string& branch_file,
                     const std::string& machine_file, double base_mva = 100.0,
                     double f_hz = 60.0);

/// Full bus admittance matrix including branch charging, taps and bus shunts.
ComplexMatrix bus_admittance(const Network& net);

struct PowerFlowSolution {
    ComplexVector v;         // complex bus voltage, network order
    Eigen::VectorXd p_inj;   // calculated net injection at the solution
    Eigen::VectorXd q_inj;
    int iterations = 0;
    double mismatch = 0.0;
};

/// Full Newton–Raphson in polar form, initialised from the bus file voltages.
PowerFlowSolution solve_power_flow(const Network& net, double tol = 1e-8, int max_iter = 20);

/// Gaussian elimination of the non-kept nodes:
/// Y_red = Y_kk − Y_ke · Y_ee⁻¹ · Y_ek.
ComplexMatrix kron_reduce(const ComplexMatrix& y, const std::vector<int>& keep);

struct FaultSchedule {
    int bus = -1;  // network bus id; -1 disables the fault
    double start_s = 0.0;
    double clear_s = 0.0;
};

/// Stabiliser template realised per equipped machine: gain · washout ·
/// cascaded lead-lag stages, output clamped to ±limit.
struct PssDesign {
    double gain = 30.0;
    double washout_s = 10.0;
    std::vector<std::pair<double, double>> leadlag = {{0.05, 0.03}, {3.0, 5.4}};
    double limit = 0.15;
};

/// Nonlinear multi-machine model over the reduced machine-node network.
/// Per-machine state layout: [δ, Δω] for classical machines,
/// [δ, Δω, E'q, E_fd] + stabiliser states for one-axis machines.
class DynamicModel {
  public:
    Network net;
    std::vector<Machine> machines;
    std::vector<ComplexMatrix> y_stages;  // pre-fault, faulted, post-fault
    FaultSchedule fault;
    int reference_machine = 0;  // index into machines
    double omega_s = 0.0;       // synchronous speed, rad/s
    double pss_limit = 0.15;

    std::vector<lti::LtiSystem> pss;  // order 0 when not equipped
    std::vector<bool> has_pss;

    std::vector<int> offset;  // first state index per machine
    std::vector<int> count;   // state count per machine
    int total_states = 0;

    Eigen::VectorXd pm;       // mechanical power, frozen at initialisation
    Eigen::VectorXd e_const;  // internal EMF magnitude for classical machines
    Eigen::VectorXd vref;     // exciter reference for one-axis machines
    Eigen::VectorXd x0;

    int machine_index(int bus_id) const;
    int stage_at(double t) const;

    /// Right-hand side of the state ODE; u_wadc injects into the exciter
    /// summing junction of `wadc_machine` (machine index, -1 disables).
    Eigen::VectorXd deriv(const Eigen::VectorXd& x, int stage, double u_wadc = 0.0,
                          int wadc_machine = -1) const;

    double rotor_angle(const Eigen::VectorXd& x, int machine) const;
    double speed(const Eigen::VectorXd& x, int machine) const;
    double relative_speed(const Eigen::VectorXd& x, int machine) const;
    double relative_angle(const Eigen::VectorXd& x, int machine) const;
    double pss_output(const Eigen::VectorXd& x, int machine) const;
    std::string state_label(int index) const;
};

/// Builds the reduced-network dynamic model at the solved operating point.
/// Loads become constant admittances at the solved voltage; the faulted bus
/// is grounded through an admittance of 1e6 pu in the faulted stage. The
/// result is an exact equilibrium of its own equations (checked to 1e-8).
DynamicModel init_dynamics(const Network& net, const PowerFlowSolution& pf,
                           const FaultSchedule& fault, int reference_machine_bus,
                           const PssDesign& pss_design = PssDesign{});

/// Fixed-step RK4 with the admittance stage switched at the first step at or
/// after the fault start/clear instants. `wadc_input` is zero-order held over
/// each step and injected at `wadc_machine_bus`. Flags (without aborting)
/// loss of synchronism when any relative rotor angle exceeds π.
lti::SimTrace simulate_nonlinear(const DynamicModel& model,
                                 const std::function<double(double)>& wadc_input,
                                 int wadc_machine_bus, double dt, double t_end);
lti::SimTrace simulate_nonlinear(const DynamicModel& model, double dt, double t_end);

/// Central finite-difference linearisation (h = 1e-6) about the stored
/// equilibrium. Inputs: one exciter-injection column per listed machine bus.
/// Outputs: relative speed of each listed (machine bus, reference bus) pair.
lti::LtiSystem linearize(const DynamicModel& model, const std::vector<int>& input_machine_buses,
                         const std::vector<std::pair<int, int>>& output_pairs, double h = 1e-6);

/// Exact removal of the uniform-rotor-angle invariance: rewrites the plant
/// in angles relative to the reference machine, dropping the reference
/// angle state and with it the structural zero eigenvalue. The input/output
/// behaviour is unchanged (the dropped direction is unobservable from
/// relative outputs).
lti::LtiSystem deflate_reference_angle(const DynamicModel& model, const lti::LtiSystem& plant);

namespace detail {

/// Central-difference Jacobian of a vector field, column by column.
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x0, double h);

}  // namespace detail

}  // namespace etwadc::grid
