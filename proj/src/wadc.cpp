#include <algorithm>
#include <cmath>

#include "etwadc/wadc.hpp"

namespace etwadc::wadc {

void WadcConfig::validate() const {
    if (washout_s <= 0.0) {
        throw ValidationError("wadc: washout time constant must be positive");
    }
    if (lag_s <= 0.0) {
        throw ValidationError("wadc: lag time constant must be positive");
    }
    if (delay_s < 0.0) {
        throw NegativeDelay("wadc: channel delay must be non-negative");
    }
}

const ResidueEntry& ResidueReport::best() const {
    if (entries.empty()) {
        throw Error("residue report is empty");
    }
    return entries.front();
}

ResidueReport modal_residues(const lti::LtiSystem& plant, const std::vector<lti::ModeInfo>& modes) {
    ResidueReport report;
    const auto bc = plant.B.cast<lti::Complex>();
    const auto cc = plant.C.cast<lti::Complex>();

    for (size_t mi = 0; mi < modes.size(); ++mi) {
        const lti::ModeInfo& mode = modes[mi];
        if (mode.right_eigenvector.size() != plant.order() ||
            mode.left_eigenvector.size() != plant.order()) {
            throw DimensionMismatch("modal_residues: eigenvector size does not match plant order");
        }
        const lti::Complex wv = mode.left_eigenvector.transpose() * mode.right_eigenvector;
        if (!std::isfinite(std::abs(wv)) || std::abs(wv) < 1e-12) {
            throw DefectiveMode("modal_residues: left/right eigenvector product vanishes");
        }
        for (int in = 0; in < plant.inputs(); ++in) {
            const lti::Complex wb = mode.left_eigenvector.transpose() * bc.col(in);
            for (int out = 0; out < plant.outputs(); ++out) {
                const lti::Complex cv = cc.row(out) * mode.right_eigenvector;
                ResidueEntry entry;
                entry.mode_index = static_cast<int>(mi);
                entry.eigenvalue = mode.eigenvalue;
                entry.input = in;
                entry.output = out;
                entry.residue = cv * wb / wv;
                entry.magnitude = std::abs(entry.residue);
                report.entries.push_back(entry);
            }
        }
    }

    std::stable_sort(report.entries.begin(), report.entries.end(),
                     [](const ResidueEntry& x, const ResidueEntry& y) {
                         if (x.magnitude != y.magnitude) {
                             return x.magnitude > y.magnitude;
                         }
                         if (x.input != y.input) {
                             return x.input < y.input;
                         }
                         return x.output < y.output;
                     });
    for (size_t i = 0; i < report.entries.size(); ++i) {
        report.entries[i].rank = static_cast<int>(i);
    }
    return report;
}

lti::LtiSystem build_wadc(const WadcConfig& cfg) {
    cfg.validate();
    const lti::LtiSystem washout = lti::realize(
        lti::TransferFunction({cfg.gain * cfg.washout_s, 0.0}, {cfg.washout_s, 1.0}));
    const lti::LtiSystem leadlag =
        lti::realize(lti::TransferFunction({cfg.lead_s, 1.0}, {cfg.lag_s, 1.0}));
    // The delay filters the transmitted remote signal before the
    // compensator; rescaling tames the companion-form coordinates.
    return lti::rescale_states(
        lti::series(lti::pade_delay(cfg.delay_s), lti::series(washout, leadlag)));
}

ClosedLoop assemble_closed_loop(const lti::LtiSystem& plant, const lti::LtiSystem& controller,
                                int remote_output) {
    if (plant.outputs() != 2 || plant.inputs() != 1) {
        throw DimensionMismatch("assemble_closed_loop: plant must have one input and two outputs");
    }
    if (controller.inputs() != 1 || controller.outputs() != 1) {
        throw DimensionMismatch("assemble_closed_loop: controller must be single input/output");
    }
    if (remote_output != 0 && remote_output != 1) {
        throw DimensionMismatch("assemble_closed_loop: remote output must select row 0 or 1");
    }
    if (plant.D.cwiseAbs().maxCoeff() != 0.0) {
        throw DimensionMismatch("assemble_closed_loop: plant direct term must be zero");
    }

    const int np = plant.order();
    const int nc = controller.order();
    const Eigen::RowVectorXd c1 = plant.C.row(remote_output);
    const Eigen::RowVectorXd c2 = plant.C.row(1 - remote_output);
    const Eigen::RowVectorXd cdiff = c2 - c1;

    ClosedLoop loop;
    loop.plant_states = np;
    loop.controller_states = nc;
    loop.remote_output = remote_output;
    loop.plant = plant;
    loop.controller = controller;

    loop.a = Eigen::MatrixXd::Zero(np + nc, np + nc);
    loop.a.topLeftCorner(np, np) = plant.A + plant.B * controller.D(0, 0) * cdiff;
    loop.a.topRightCorner(np, nc) = plant.B * controller.C;
    loop.a.bottomLeftCorner(nc, np) = controller.B * cdiff;
    loop.a.bottomRightCorner(nc, nc) = controller.A;

    loop.b = Eigen::VectorXd::Zero(np + nc);
    loop.b.head(np) = -plant.B * controller.D(0, 0);
    loop.b.tail(nc) = -controller.B;

    Eigen::RowVectorXd sel = Eigen::RowVectorXd::Zero(np + nc);
    sel.head(np) = c1;
    loop.remote_row_norm = sel.norm();
    if (loop.remote_row_norm == 0.0) {
        throw ValidationError("assemble_closed_loop: monitored output row is zero");
    }
    loop.c_tilde = sel / loop.remote_row_norm;
    return loop;
}

ClosedLoop calibrate_certificate(const lti::LtiSystem& plant, const lti::LtiSystem& controller,
                                 int remote_output, double rho_over_sigma) {
    if (rho_over_sigma <= 0.0) {
        throw ValidationError("calibrate_certificate: target coefficient must be positive");
    }
    const ClosedLoop raw = assemble_closed_loop(plant, controller, remote_output);
    const Eigen::VectorXcd eig = raw.a.eigenvalues();
    if (eig.real().maxCoeff() >= 0.0) {
        throw UnstableClosedLoop("calibrate_certificate: closed loop is not Hurwitz");
    }
    const int n = raw.order();
    const Eigen::MatrixXd p = lti::solve_lyapunov(raw.a, Eigen::MatrixXd::Identity(n, n));
    const double pb = lti::spectral_norm(p * raw.b);
    const double rho_raw = 1.0 / (4.0 * pb * pb * raw.c_tilde.squaredNorm());
    const double scale = std::sqrt(rho_over_sigma / rho_raw);

    auto rescale = [&](const lti::LtiSystem& sys) {
        lti::LtiSystem out = sys;
        out.B /= scale;
        out.C *= scale;
        return out;
    };
    ClosedLoop loop = assemble_closed_loop(rescale(plant), rescale(controller), remote_output);
    loop.certificate_scale = scale;
    return loop;
}

double ClosedLoop::control_input(const Eigen::VectorXd& x, double e_y) const {
    const Eigen::RowVectorXd c1 = plant.C.row(remote_output);
    const Eigen::RowVectorXd c2 = plant.C.row(1 - remote_output);
    const double ctrl_in = (c2 - c1) * x.head(plant_states) - e_y;
    return (controller.C * x.tail(controller_states))(0) + controller.D(0, 0) * ctrl_in;
}

std::vector<lti::ModeInfo> screen_interarea(const std::vector<lti::ModeInfo>& modes) {
    std::vector<lti::ModeInfo> band;
    for (const auto& mode : modes) {
        if (mode.eigenvalue.imag() != 0.0 && mode.frequency_hz >= 0.2 && mode.frequency_hz <= 0.8) {
            band.push_back(mode);
        }
    }
    std::stable_sort(band.begin(), band.end(), [](const lti::ModeInfo& x, const lti::ModeInfo& y) {
        return x.damping_ratio < y.damping_ratio;
    });
    return band;
}

}  // namespace etwadc::wadc
