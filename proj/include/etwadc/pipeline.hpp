#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "etwadc/events.hpp"
#include "etwadc/scenario.hpp"

namespace etwadc::scenario {

/// Batch pipeline over one scenario. Stages write their artifacts (CSV plus
/// a manifest with checksums) under <out>/<stage>/ and later stages load the
/// recorded artifacts instead of recomputing, unless `recompute` is set.
class Pipeline {
  public:
    Pipeline(Scenario sc, bool recompute = false);

    struct DesignData {
        wadc::ResidueReport residues;
        std::vector<int> residue_inputs;                    // bus ids
        std::vector<std::pair<int, int>> residue_outputs;   // (machine, reference) bus ids
        lti::LtiSystem plant_scaled;
        lti::LtiSystem controller_scaled;
        wadc::ClosedLoop loop;
        std::map<double, double> rho;  // per sigma
    };

    const Scenario& config() const { return scenario_; }
    const grid::PowerFlowSolution& power_flow();
    const lti::LtiSystem& plant();    // gauge-deflated linearised plant
    const lti::LtiSystem& reduced();  // after order reduction
    const DesignData& design();
    const grid::DynamicModel& fault_model();

    events::EventSimResult simulate(double sigma, bool continuous = false);
    std::vector<events::ComparisonRow> sweep();

    // CLI stage entry points; each ensures its artifacts are on disk.
    void cmd_powerflow();
    void cmd_linearize();
    void cmd_reduce();
    void cmd_design();
    void cmd_simulate(double sigma);
    void cmd_sweep();

  private:
    Scenario scenario_;
    bool recompute_;

    std::optional<grid::Network> net_;
    std::optional<grid::PowerFlowSolution> pf_;
    std::optional<grid::DynamicModel> eq_model_;     // no fault, for linearisation
    std::optional<grid::DynamicModel> fault_model_;
    std::optional<lti::LtiSystem> plant_;
    std::optional<lti::LtiSystem> reduced_;
    std::optional<DesignData> design_;

    const grid::Network& net();
    const grid::DynamicModel& eq_model();
    std::string stage_dir(const std::string& stage) const;
    bool stage_complete(const std::string& stage) const;
};

/// FNV-1a 64-bit checksum of a file's bytes, as fixed-width hex.
std::string file_checksum(const std::string& path);

}  // namespace etwadc::scenario
