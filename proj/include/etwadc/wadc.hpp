#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "etwadc/lti.hpp"

namespace etwadc::wadc {

/// Lead-lag damping controller parameters:
/// K · (s·Tw/(s·Tw+1)) · ((1+s·τ1)/(1+s·τ2)), preceded by the channel
/// delay model on its input path.
struct WadcConfig {
    double gain = 1.0;          // K
    double washout_s = 10.0;    // Tw
    double lead_s = 0.1;        // τ1
    double lag_s = 0.1;         // τ2
    double delay_s = 0.0;       // channel latency T
    std::optional<double> output_limit;  // pu, applied in nonlinear runs

    void validate() const;
};

struct ResidueEntry {
    int mode_index = 0;  // position in the supplied mode list
    lti::Complex eigenvalue;
    int input = 0;   // plant input column
    int output = 0;  // plant output row
    lti::Complex residue;
    double magnitude = 0.0;
    int rank = 0;  // 0 = largest magnitude
};

struct ResidueReport {
    std::vector<ResidueEntry> entries;  // sorted by rank
    const ResidueEntry& best() const;
};

/// Residue of each (mode, input, output) triple:
/// (c·v)(wᵀ·b)/(wᵀ·v). Ranking by magnitude descending, ties broken by
/// lower input index, then lower output index.
ResidueReport modal_residues(const lti::LtiSystem& plant, const std::vector<lti::ModeInfo>& modes);

/// State-space controller: channel delay in series with the washout
/// lead-lag. The direct term of the delay-free part is K·τ1/τ2.
lti::LtiSystem build_wadc(const WadcConfig& cfg);

/// Augmented event-driven loop: plant with outputs [remote; local] closed
/// through the controller driven by (local − remote). `b` is the injection
/// channel of the held-measurement error and `c_tilde` the unit-norm
/// selector of the monitored remote output.
struct ClosedLoop {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    Eigen::RowVectorXd c_tilde;
    int plant_states = 0;
    int controller_states = 0;
    int remote_output = 0;
    double remote_row_norm = 1.0;   // ‖[C_remote 0]‖ before normalization
    double certificate_scale = 1.0; // state rescaling applied at assembly
    lti::LtiSystem plant;
    lti::LtiSystem controller;

    int order() const { return plant_states + controller_states; }
    /// Controller output for a given augmented state and measurement error.
    double control_input(const Eigen::VectorXd& x, double e_y) const;
};

ClosedLoop assemble_closed_loop(const lti::LtiSystem& plant, const lti::LtiSystem& controller,
                                int remote_output);

/// Assembles the loop in uniformly rescaled state coordinates (z = x/s)
/// chosen so the identity-weight trigger coefficient comes out as
/// σ·rho_over_sigma. The rescaling leaves the dynamics, outputs and
/// eigenstructure untouched; it selects how tight the quadratic decay
/// certificate is, which is exactly what the threshold coefficient
/// measures.
ClosedLoop calibrate_certificate(const lti::LtiSystem& plant, const lti::LtiSystem& controller,
                                 int remote_output, double rho_over_sigma);

/// Oscillatory modes in the 0.2–0.8 Hz band, worst damped first.
std::vector<lti::ModeInfo> screen_interarea(const std::vector<lti::ModeInfo>& modes);

}  // namespace etwadc::wadc
