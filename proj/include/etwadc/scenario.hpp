#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "etwadc/grid.hpp"
#include "etwadc/wadc.hpp"

namespace etwadc::scenario {

/// One self-contained study: fixture paths, operating point, disturbance,
/// controller and trigger settings, and output layout. Loaded from a YAML
/// file; all relative paths are resolved against the file's directory.
struct Scenario {
    std::string name;

    std::string bus_file;
    std::string branch_file;
    std::string machine_file;
    double base_mva = 100.0;
    double f_hz = 60.0;

    std::map<int, double> dispatch_overrides;  // bus id -> generated P (pu)

    double pf_tol = 1e-8;
    int pf_max_iter = 20;

    grid::PssDesign pss;
    grid::FaultSchedule fault;

    int reference_machine = 0;  // bus ids
    int remote_machine = 0;
    int local_machine = 0;

    int wadc_machine = 0;
    wadc::WadcConfig wadc;

    std::vector<double> sigmas;
    double rho_over_sigma = 0.05;

    double dt = 0.005;
    double t_end = 10.0;
    bool linear_mode = false;

    int reduction_order = 12;

    std::string output_dir;

    void validate() const;

    /// Network with dispatch overrides applied.
    grid::Network load_net() const;
};

Scenario load_scenario(const std::string& path);

}  // namespace etwadc::scenario
