#pragma once

#include <Eigen/Dense>

#include <complex>
#include <map>
#include <string>
#include <vector>

#include "etwadc/errors.hpp"

namespace etwadc::lti {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Continuous-time state-space model ẋ = Ax + Bu, y = Cx + Du.
/// n = 0 is allowed and encodes a pure gain y = Du.
struct LtiSystem {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix D;
    std::vector<std::string> state_labels;

    LtiSystem() : A(0, 0), B(0, 1), C(1, 0), D(Matrix::Zero(1, 1)) {}
    LtiSystem(Matrix a, Matrix b, Matrix c, Matrix d);

    /// Pure gain y = d·u, no states.
    static LtiSystem gain(const Matrix& d);
    static LtiSystem gain(double d);

    int order() const { return static_cast<int>(A.rows()); }
    int inputs() const { return static_cast<int>(B.cols()); }
    int outputs() const { return static_cast<int>(C.rows()); }
};

/// Rational transfer function in s; coefficients in descending powers.
/// Must be proper (numerator degree ≤ denominator degree) with a nonzero
/// leading denominator coefficient.
struct TransferFunction {
    std::vector<double> num;
    std::vector<double> den;

    TransferFunction(std::vector<double> numerator, std::vector<double> denominator);

    int num_degree() const;
    int den_degree() const;
    Complex evaluate(Complex s) const;
};

/// One eigenvalue of a state matrix with its oscillation data and
/// phase-fixed unit eigenvectors.
struct ModeInfo {
    Complex eigenvalue;
    double frequency_hz = 0.0;
    double damping_ratio = 0.0;
    ComplexVector right_eigenvector;
    ComplexVector left_eigenvector;
};

enum class TraceKind { Generic, LinearAugmented, Nonlinear };

/// Time-indexed simulation record. `states` and `outputs` hold one row per
/// time sample; named channels carry run-specific signals (held values,
/// trigger thresholds, Lyapunov function values, control inputs, ...).
struct SimTrace {
    Vector time;
    Matrix states;
    Matrix outputs;
    std::map<std::string, Vector> channels;
    TraceKind kind = TraceKind::Generic;
    bool loss_of_synchronism = false;

    int samples() const { return static_cast<int>(time.size()); }
};

/// Solves AᵀP + PA + Q = 0 for symmetric P via the stacked n²-unknown
/// dense linear system. Throws SingularLyapunov when some eigenvalue pair
/// of A sums to zero (within 1e-12) and NonSymmetricQ for asymmetric Q.
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// Largest singular value.
double spectral_norm(const Matrix& m);

/// Third-order all-pass rational approximation of a transport delay of
/// T seconds; T = 0 yields the unity gain with no states.
LtiSystem pade_delay(double delay_s);

/// Controllable canonical realization of a proper transfer function.
/// Pole-zero cancellations are not performed; the realization simply
/// reproduces the response.
LtiSystem realize(const TransferFunction& tf);

/// y = b(a(u)): output of `a` drives the input of `b`.
LtiSystem series(const LtiSystem& a, const LtiSystem& b);

/// y = a(u) − b(u).
LtiSystem parallel_diff(const LtiSystem& a, const LtiSystem& b);

/// Closes the loop u = u_ext + sign·controller(y) around the plant.
/// The default sign = -1 is the conventional negative feedback.
LtiSystem feedback(const LtiSystem& plant, const LtiSystem& controller, int sign = -1);

/// Order reduction by stable/non-stable decomposition: every mode with
/// Re ≥ -1e-8 is retained exactly, the remaining stable part is reduced by
/// balanced truncation of its Gramian pair. Result order equals
/// target_order. Throws TargetTooSmall when the retained mode count
/// exceeds the target.
LtiSystem reduce_order(const LtiSystem& sys, int target_order);

/// Fixed-step classical 4th-order Runge–Kutta simulation. `input` holds
/// one sample per row at t = k·dt, zero-order held over each step; the
/// trace has input.rows() samples. Throws NonFiniteState when any state
/// magnitude exceeds 1e12.
SimTrace simulate_lti(const LtiSystem& sys, const Matrix& input, double dt, const Vector& x0);

/// C(jωI − A)⁻¹B + D evaluated per frequency (rad/s). Throws
/// FrequencyOnEigenvalue when jω lies within 1e-12 of an eigenvalue.
std::vector<ComplexMatrix> frequency_response(const LtiSystem& sys, const Vector& omega);

/// Eigenanalysis with unit-norm eigenvectors whose first nonzero component
/// is rotated to the positive real axis; sorted by damping ratio ascending.
std::vector<ModeInfo> modes(const Matrix& a);

/// Diagonal state rescaling (power-of-two factors) that equalises the row
/// and column norms of [A B; C 0]. Exact similarity transform: the
/// input/output response is unchanged, the realization is numerically
/// better conditioned.
LtiSystem rescale_states(const LtiSystem& sys);

namespace detail {

/// One classical RK4 step of ẋ = f(t, x).
template <typename F>
Vector rk4_step(const F& f, double t, const Vector& x, double dt) {
    const Vector k1 = f(t, x);
    const Vector k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1);
    const Vector k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2);
    const Vector k4 = f(t + dt, x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void check_state_finite(const Vector& x, double t);

}  // namespace detail

}  // namespace etwadc::lti
