#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "etwadc/events.hpp"
#include "etwadc/grid.hpp"
#include "etwadc/lti.hpp"
#include "etwadc/lti_io.hpp"
#include "etwadc/pipeline.hpp"
#include "etwadc/scenario.hpp"
#include "etwadc/wadc.hpp"

namespace py = pybind11;
using namespace etwadc;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Event-triggered wide-area damping control toolkit";

    py::register_exception<Error>(m, "EtwadcError");

    // ---- linear systems ----------------------------------------------
    py::class_<lti::LtiSystem>(m, "LtiSystem")
        .def(py::init<lti::Matrix, lti::Matrix, lti::Matrix, lti::Matrix>(), py::arg("A"),
             py::arg("B"), py::arg("C"), py::arg("D"))
        .def_static("gain", py::overload_cast<double>(&lti::LtiSystem::gain))
        .def_readwrite("A", &lti::LtiSystem::A)
        .def_readwrite("B", &lti::LtiSystem::B)
        .def_readwrite("C", &lti::LtiSystem::C)
        .def_readwrite("D", &lti::LtiSystem::D)
        .def_readwrite("state_labels", &lti::LtiSystem::state_labels)
        .def_property_readonly("order", &lti::LtiSystem::order)
        .def_property_readonly("inputs", &lti::LtiSystem::inputs)
        .def_property_readonly("outputs", &lti::LtiSystem::outputs)
        .def("__repr__", [](const lti::LtiSystem& s) {
            return "<LtiSystem n=" + std::to_string(s.order()) + " m=" +
                   std::to_string(s.inputs()) + " p=" + std::to_string(s.outputs()) + ">";
        });

    py::class_<lti::TransferFunction>(m, "TransferFunction")
        .def(py::init<std::vector<double>, std::vector<double>>(), py::arg("num"), py::arg("den"))
        .def_readonly("num", &lti::TransferFunction::num)
        .def_readonly("den", &lti::TransferFunction::den)
        .def("evaluate", &lti::TransferFunction::evaluate);

    py::class_<lti::ModeInfo>(m, "ModeInfo")
        .def_readonly("eigenvalue", &lti::ModeInfo::eigenvalue)
        .def_readonly("frequency_hz", &lti::ModeInfo::frequency_hz)
        .def_readonly("damping_ratio", &lti::ModeInfo::damping_ratio)
        .def_readonly("right_eigenvector", &lti::ModeInfo::right_eigenvector)
        .def_readonly("left_eigenvector", &lti::ModeInfo::left_eigenvector);

    py::class_<lti::SimTrace>(m, "SimTrace")
        .def_readonly("time", &lti::SimTrace::time)
        .def_readonly("states", &lti::SimTrace::states)
        .def_readonly("outputs", &lti::SimTrace::outputs)
        .def_readonly("channels", &lti::SimTrace::channels)
        .def_readonly("loss_of_synchronism", &lti::SimTrace::loss_of_synchronism)
        .def_property_readonly("samples", &lti::SimTrace::samples);

    m.def("solve_lyapunov", &lti::solve_lyapunov, py::arg("A"), py::arg("Q"));
    m.def("spectral_norm", &lti::spectral_norm);
    m.def("pade_delay", &lti::pade_delay, py::arg("delay_s"));
    m.def("realize", &lti::realize);
    m.def("series", &lti::series);
    m.def("parallel_diff", &lti::parallel_diff);
    m.def("feedback", &lti::feedback, py::arg("plant"), py::arg("controller"),
          py::arg("sign") = -1);
    m.def("reduce_order", &lti::reduce_order, py::arg("sys"), py::arg("target_order"));
    m.def("simulate_lti", &lti::simulate_lti, py::arg("sys"), py::arg("input"), py::arg("dt"),
          py::arg("x0"));
    m.def("frequency_response", &lti::frequency_response, py::arg("sys"), py::arg("omega"));
    m.def("modes", &lti::modes, py::arg("A"));
    m.def("rescale_states", &lti::rescale_states);

    // ---- grid ---------------------------------------------------------
    py::enum_<grid::BusType>(m, "BusType")
        .value("Slack", grid::BusType::Slack)
        .value("PV", grid::BusType::PV)
        .value("PQ", grid::BusType::PQ);

    py::enum_<grid::MachineModel>(m, "MachineModel")
        .value("Classical", grid::MachineModel::Classical)
        .value("OneAxis", grid::MachineModel::OneAxis);

    py::class_<grid::Bus>(m, "Bus")
        .def_readwrite("id", &grid::Bus::id)
        .def_readwrite("type", &grid::Bus::type)
        .def_readwrite("vm", &grid::Bus::vm)
        .def_readwrite("va", &grid::Bus::va)
        .def_readwrite("pload", &grid::Bus::pload)
        .def_readwrite("qload", &grid::Bus::qload);

    py::class_<grid::Machine>(m, "Machine")
        .def_readwrite("bus", &grid::Machine::bus)
        .def_readwrite("model", &grid::Machine::model)
        .def_readwrite("h", &grid::Machine::h)
        .def_readwrite("d", &grid::Machine::d)
        .def_readwrite("pss", &grid::Machine::pss);

    py::class_<grid::Network>(m, "Network")
        .def_readwrite("buses", &grid::Network::buses)
        .def_readwrite("machines", &grid::Network::machines)
        .def_readwrite("base_mva", &grid::Network::base_mva)
        .def_readwrite("f_hz", &grid::Network::f_hz)
        .def("validate", &grid::Network::validate);

    py::class_<grid::PowerFlowSolution>(m, "PowerFlowSolution")
        .def_readonly("v", &grid::PowerFlowSolution::v)
        .def_readonly("p_inj", &grid::PowerFlowSolution::p_inj)
        .def_readonly("q_inj", &grid::PowerFlowSolution::q_inj)
        .def_readonly("iterations", &grid::PowerFlowSolution::iterations)
        .def_readonly("mismatch", &grid::PowerFlowSolution::mismatch);

    py::class_<grid::FaultSchedule>(m, "FaultSchedule")
        .def(py::init<>())
        .def(py::init([](int bus, double start_s, double clear_s) {
                 return grid::FaultSchedule{bus, start_s, clear_s};
             }),
             py::arg("bus"), py::arg("start_s"), py::arg("clear_s"))
        .def_readwrite("bus", &grid::FaultSchedule::bus)
        .def_readwrite("start_s", &grid::FaultSchedule::start_s)
        .def_readwrite("clear_s", &grid::FaultSchedule::clear_s);

    py::class_<grid::PssDesign>(m, "PssDesign")
        .def(py::init<>())
        .def_readwrite("gain", &grid::PssDesign::gain)
        .def_readwrite("washout_s", &grid::PssDesign::washout_s)
        .def_readwrite("leadlag", &grid::PssDesign::leadlag)
        .def_readwrite("limit", &grid::PssDesign::limit);

    py::class_<grid::DynamicModel>(m, "DynamicModel")
        .def_readonly("total_states", &grid::DynamicModel::total_states)
        .def_readonly("x0", &grid::DynamicModel::x0)
        .def_readonly("pm", &grid::DynamicModel::pm)
        .def("machine_index", &grid::DynamicModel::machine_index)
        .def("deriv", &grid::DynamicModel::deriv, py::arg("x"), py::arg("stage"),
             py::arg("u_wadc") = 0.0, py::arg("wadc_machine") = -1)
        .def("speed", &grid::DynamicModel::speed)
        .def("relative_speed", &grid::DynamicModel::relative_speed)
        .def("state_label", &grid::DynamicModel::state_label);

    m.def("load_network", &grid::load_network, py::arg("bus_file"), py::arg("branch_file"),
          py::arg("machine_file"), py::arg("base_mva") = 100.0, py::arg("f_hz") = 60.0);
    m.def("bus_admittance", &grid::bus_admittance);
    m.def("solve_power_flow", &grid::solve_power_flow, py::arg("net"), py::arg("tol") = 1e-8,
          py::arg("max_iter") = 20);
    m.def("kron_reduce", &grid::kron_reduce, py::arg("Y"), py::arg("keep"));
    m.def("init_dynamics", &grid::init_dynamics, py::arg("net"), py::arg("pf"), py::arg("fault"),
          py::arg("reference_machine_bus"), py::arg("pss") = grid::PssDesign{});
    m.def("simulate_nonlinear",
          py::overload_cast<const grid::DynamicModel&, double, double>(&grid::simulate_nonlinear),
          py::arg("model"), py::arg("dt"), py::arg("t_end"));
    m.def("linearize", &grid::linearize, py::arg("model"), py::arg("input_machine_buses"),
          py::arg("output_pairs"), py::arg("h") = 1e-6);
    m.def("deflate_reference_angle", &grid::deflate_reference_angle);

    // ---- controller design ---------------------------------------------
    py::class_<wadc::WadcConfig>(m, "WadcConfig")
        .def(py::init<>())
        .def_readwrite("gain", &wadc::WadcConfig::gain)
        .def_readwrite("washout_s", &wadc::WadcConfig::washout_s)
        .def_readwrite("lead_s", &wadc::WadcConfig::lead_s)
        .def_readwrite("lag_s", &wadc::WadcConfig::lag_s)
        .def_readwrite("delay_s", &wadc::WadcConfig::delay_s)
        .def_readwrite("output_limit", &wadc::WadcConfig::output_limit);

    py::class_<wadc::ResidueEntry>(m, "ResidueEntry")
        .def_readonly("rank", &wadc::ResidueEntry::rank)
        .def_readonly("eigenvalue", &wadc::ResidueEntry::eigenvalue)
        .def_readonly("input", &wadc::ResidueEntry::input)
        .def_readonly("output", &wadc::ResidueEntry::output)
        .def_readonly("residue", &wadc::ResidueEntry::residue)
        .def_readonly("magnitude", &wadc::ResidueEntry::magnitude);

    py::class_<wadc::ResidueReport>(m, "ResidueReport")
        .def_readonly("entries", &wadc::ResidueReport::entries)
        .def("best", &wadc::ResidueReport::best, py::return_value_policy::reference_internal);

    py::class_<wadc::ClosedLoop>(m, "ClosedLoop")
        .def_readonly("a", &wadc::ClosedLoop::a)
        .def_readonly("b", &wadc::ClosedLoop::b)
        .def_readonly("c_tilde", &wadc::ClosedLoop::c_tilde)
        .def_readonly("plant_states", &wadc::ClosedLoop::plant_states)
        .def_readonly("controller_states", &wadc::ClosedLoop::controller_states)
        .def_readonly("certificate_scale", &wadc::ClosedLoop::certificate_scale)
        .def_readonly("plant", &wadc::ClosedLoop::plant)
        .def_readonly("controller", &wadc::ClosedLoop::controller)
        .def_property_readonly("order", &wadc::ClosedLoop::order);

    m.def("modal_residues", &wadc::modal_residues, py::arg("plant"), py::arg("modes"));
    m.def("build_wadc", &wadc::build_wadc, py::arg("config"));
    m.def("assemble_closed_loop", &wadc::assemble_closed_loop, py::arg("plant"),
          py::arg("controller"), py::arg("remote_output"));
    m.def("calibrate_certificate", &wadc::calibrate_certificate, py::arg("plant"),
          py::arg("controller"), py::arg("remote_output"), py::arg("rho_over_sigma"));
    m.def("screen_interarea", &wadc::screen_interarea, py::arg("modes"));

    // ---- event engine ---------------------------------------------------
    py::class_<events::TriggerConfig>(m, "TriggerConfig")
        .def_readonly("sigma", &events::TriggerConfig::sigma)
        .def_readonly("q", &events::TriggerConfig::q)
        .def_readonly("p", &events::TriggerConfig::p)
        .def_readonly("rho", &events::TriggerConfig::rho);

    py::class_<events::EventLog>(m, "EventLog")
        .def_readonly("instants", &events::EventLog::instants)
        .def_readonly("held_values", &events::EventLog::held_values)
        .def_readonly("error_at_fire", &events::EventLog::error_at_fire)
        .def_readonly("inter_event_times", &events::EventLog::inter_event_times)
        .def_readonly("baseline_samples", &events::EventLog::baseline_samples)
        .def_property_readonly("count", &events::EventLog::count)
        .def("min_tau", &events::EventLog::min_tau)
        .def("mean_tau", &events::EventLog::mean_tau)
        .def("max_tau", &events::EventLog::max_tau);

    py::class_<events::EventSimResult>(m, "EventSimResult")
        .def_readonly("trace", &events::EventSimResult::trace)
        .def_readonly("log", &events::EventSimResult::log);

    py::class_<events::IssReport>(m, "IssReport")
        .def_readonly("v", &events::IssReport::v)
        .def_readonly("vdot", &events::IssReport::vdot)
        .def_readonly("bound", &events::IssReport::bound)
        .def_readonly("trigger_violations", &events::IssReport::trigger_violations)
        .def_readonly("vdot_violations", &events::IssReport::vdot_violations)
        .def_readonly("max_violation", &events::IssReport::max_violation);

    py::class_<events::InterEventBound>(m, "InterEventBound")
        .def_readonly("m1", &events::InterEventBound::m1)
        .def_readonly("m2", &events::InterEventBound::m2)
        .def_readonly("m3", &events::InterEventBound::m3)
        .def_readonly("eta_star", &events::InterEventBound::eta_star)
        .def_readonly("tau_min", &events::InterEventBound::tau_min)
        .def_readonly("discriminant_ok", &events::InterEventBound::discriminant_ok)
        .def_readonly("note", &events::InterEventBound::note);

    py::class_<events::ComparisonRow>(m, "ComparisonRow")
        .def_readonly("sigma", &events::ComparisonRow::sigma)
        .def_readonly("baseline", &events::ComparisonRow::baseline)
        .def_readonly("et_count", &events::ComparisonRow::et_count)
        .def_readonly("tau_min_s", &events::ComparisonRow::tau_min_s)
        .def_readonly("tau_mean_s", &events::ComparisonRow::tau_mean_s)
        .def_readonly("tau_max_s", &events::ComparisonRow::tau_max_s)
        .def_readonly("damping_metric", &events::ComparisonRow::damping_metric);

    m.def("compute_trigger_threshold", &events::compute_trigger_threshold, py::arg("loop"),
          py::arg("Q"), py::arg("sigma"));
    m.def("check_trigger", &events::check_trigger, py::arg("y1_held"), py::arg("y1_now"),
          py::arg("config"));
    m.def("modal_initial_state", &events::modal_initial_state);
    m.def("run_event_sim",
          py::overload_cast<const wadc::ClosedLoop&, const events::TriggerConfig&,
                            const Eigen::VectorXd&, double, double, bool>(&events::run_event_sim),
          py::arg("loop"), py::arg("config"), py::arg("x0"), py::arg("dt"), py::arg("t_end"),
          py::arg("continuous") = false);
    m.def(
        "run_event_sim_nonlinear",
        [](const grid::DynamicModel& model, const wadc::ClosedLoop& loop, int wadc_machine_bus,
           int remote_machine_bus, int local_machine_bus, const events::TriggerConfig& cfg,
           double dt, double t_end, bool continuous, std::optional<double> output_limit) {
            events::NonlinearWadcSetup setup;
            setup.model = &model;
            setup.loop = &loop;
            setup.wadc_machine_bus = wadc_machine_bus;
            setup.remote_machine_bus = remote_machine_bus;
            setup.local_machine_bus = local_machine_bus;
            setup.output_limit = output_limit;
            return events::run_event_sim(setup, cfg, dt, t_end, continuous);
        },
        py::arg("model"), py::arg("loop"), py::arg("wadc_machine_bus"),
        py::arg("remote_machine_bus"), py::arg("local_machine_bus"), py::arg("config"),
        py::arg("dt"), py::arg("t_end"), py::arg("continuous") = false,
        py::arg("output_limit") = std::nullopt);
    m.def("verify_iss", &events::verify_iss, py::arg("trace"), py::arg("config"));
    m.def("inter_event_bound", &events::inter_event_bound, py::arg("loop"), py::arg("config"));
    m.def("comparison_crossing_time", &events::comparison_crossing_time);
    m.def("log_decrement", &events::log_decrement, py::arg("time"), py::arg("signal"),
          py::arg("window_s") = 5.0);
    m.def("compare_transmissions", &events::compare_transmissions, py::arg("run_sigma"),
          py::arg("sigmas"));

    // ---- scenarios and pipeline ------------------------------------------
    py::class_<scenario::Scenario>(m, "Scenario")
        .def_readwrite("name", &scenario::Scenario::name)
        .def_readwrite("sigmas", &scenario::Scenario::sigmas)
        .def_readwrite("rho_over_sigma", &scenario::Scenario::rho_over_sigma)
        .def_readwrite("dt", &scenario::Scenario::dt)
        .def_readwrite("t_end", &scenario::Scenario::t_end)
        .def_readwrite("linear_mode", &scenario::Scenario::linear_mode)
        .def_readwrite("reduction_order", &scenario::Scenario::reduction_order)
        .def_readwrite("output_dir", &scenario::Scenario::output_dir);

    py::class_<scenario::Pipeline>(m, "Pipeline")
        .def(py::init<scenario::Scenario, bool>(), py::arg("scenario"),
             py::arg("recompute") = false)
        .def("power_flow", &scenario::Pipeline::power_flow,
             py::return_value_policy::reference_internal)
        .def("plant", &scenario::Pipeline::plant, py::return_value_policy::reference_internal)
        .def("reduced", &scenario::Pipeline::reduced, py::return_value_policy::reference_internal)
        .def("simulate", &scenario::Pipeline::simulate, py::arg("sigma"),
             py::arg("continuous") = false)
        .def("sweep", &scenario::Pipeline::sweep)
        .def("cmd_powerflow", &scenario::Pipeline::cmd_powerflow)
        .def("cmd_linearize", &scenario::Pipeline::cmd_linearize)
        .def("cmd_reduce", &scenario::Pipeline::cmd_reduce)
        .def("cmd_design", &scenario::Pipeline::cmd_design)
        .def("cmd_simulate", &scenario::Pipeline::cmd_simulate, py::arg("sigma"))
        .def("cmd_sweep", &scenario::Pipeline::cmd_sweep);

    m.def("load_scenario", &scenario::load_scenario, py::arg("path"));
}
