#include "etwadc/lti.hpp"

#include <algorithm>
#include <cmath>

namespace etwadc::lti {

LtiSystem::LtiSystem(Matrix a, Matrix b, Matrix c, Matrix d)
    : A(std::move(a)), B(std::move(b)), C(std::move(c)), D(std::move(d)) {
    if (A.rows() != A.cols()) {
        throw DimensionMismatch("state matrix must be square");
    }
    const auto n = A.rows();
    if (B.rows() != n || C.cols() != n || D.rows() != C.rows() || D.cols() != B.cols()) {
        throw DimensionMismatch("inconsistent state-space dimensions");
    }
}

LtiSystem LtiSystem::gain(const Matrix& d) {
    return LtiSystem(Matrix(0, 0), Matrix(0, d.cols()), Matrix(d.rows(), 0), d);
}

LtiSystem LtiSystem::gain(double d) {
    Matrix m(1, 1);
    m(0, 0) = d;
    return gain(m);
}

TransferFunction::TransferFunction(std::vector<double> numerator, std::vector<double> denominator)
    : num(std::move(numerator)), den(std::move(denominator)) {
    if (den.empty() || num.empty()) {
        throw ImproperTransferFunction("empty coefficient list");
    }
    if (den.front() == 0.0) {
        throw ImproperTransferFunction("leading denominator coefficient is zero");
    }
    if (num_degree() > den_degree()) {
        throw ImproperTransferFunction("numerator degree exceeds denominator degree");
    }
}

int TransferFunction::num_degree() const {
    size_t lead = 0;
    while (lead + 1 < num.size() && num[lead] == 0.0) {
        ++lead;
    }
    return static_cast<int>(num.size() - 1 - lead);
}

int TransferFunction::den_degree() const {
    return static_cast<int>(den.size() - 1);
}

Complex TransferFunction::evaluate(Complex s) const {
    auto horner = [&s](const std::vector<double>& coeffs) {
        Complex acc = 0.0;
        for (double c : coeffs) {
            acc = acc * s + c;
        }
        return acc;
    };
    return horner(num) / horner(den);
}

namespace {

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

}  // namespace

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
    const auto n = a.rows();
    if (a.cols() != n || q.rows() != n || q.cols() != n) {
        throw DimensionMismatch("solve_lyapunov: A and Q must be square of equal order");
    }
    if (n == 0) {
        return Matrix(0, 0);
    }
    const double q_scale = std::max(1.0, q.cwiseAbs().maxCoeff());
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * q_scale) {
        throw NonSymmetricQ("solve_lyapunov: Q is not symmetric");
    }

    const ComplexVector eig = a.eigenvalues();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            if (std::abs(eig(i) + eig(j)) < 1e-12) {
                throw SingularLyapunov("solve_lyapunov: eigenvalue pair sums to zero");
            }
        }
    }

    // vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P), column-major stacking.
    const Matrix ident = Matrix::Identity(n, n);
    const Matrix at = a.transpose();
    const Matrix m = kron(ident, at) + kron(at, ident);
    Eigen::PartialPivLU<Matrix> lu(m);

    const Eigen::Map<const Vector> q_vec(q.data(), n * n);
    Vector p_vec = lu.solve(-q_vec);

    // One step of iterative refinement keeps the residual at rounding level.
    Vector r = m * p_vec + q_vec;
    p_vec -= lu.solve(r);

    Matrix p = Eigen::Map<const Matrix>(p_vec.data(), n, n);
    return 0.5 * (p + p.transpose());
}

double spectral_norm(const Matrix& m) {
    if (m.size() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

LtiSystem pade_delay(double delay_s) {
    if (delay_s < 0.0) {
        throw NegativeDelay("pade_delay: delay must be non-negative");
    }
    if (delay_s == 0.0) {
        return LtiSystem::gain(1.0);
    }
    const double t = delay_s;
    const double t2 = t * t;
    const double t3 = t2 * t;
    TransferFunction tf({-t3 / 120.0, t2 / 12.0, -t / 2.0, 1.0},
                        {t3 / 120.0, t2 / 12.0, t / 2.0, 1.0});
    return realize(tf);
}

LtiSystem realize(const TransferFunction& tf) {
    if (tf.num_degree() > tf.den_degree()) {
        throw ImproperTransferFunction("realize: improper transfer function");
    }
    const int n = tf.den_degree();

    // Monic denominator; numerator zero-padded to the same length.
    std::vector<double> den(n + 1);
    for (int i = 0; i <= n; ++i) {
        den[i] = tf.den[i] / tf.den[0];
    }
    std::vector<double> num(n + 1, 0.0);
    const int pad = n + 1 - static_cast<int>(tf.num.size());
    for (size_t i = 0; i < tf.num.size(); ++i) {
        num[pad + i] = tf.num[i] / tf.den[0];
    }

    const double d = num[0];
    if (n == 0) {
        return LtiSystem::gain(d);
    }

    // Strictly proper remainder drives C in controllable canonical form.
    std::vector<double> rem(n + 1);
    for (int i = 0; i <= n; ++i) {
        rem[i] = num[i] - d * den[i];
    }

    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        a(i, i + 1) = 1.0;
    }
    for (int j = 0; j < n; ++j) {
        a(n - 1, j) = -den[n - j];
    }
    Matrix b = Matrix::Zero(n, 1);
    b(n - 1, 0) = 1.0;
    Matrix c(1, n);
    for (int j = 0; j < n; ++j) {
        c(0, j) = rem[n - j];
    }
    Matrix dd(1, 1);
    dd(0, 0) = d;
    return LtiSystem(std::move(a), std::move(b), std::move(c), std::move(dd));
}

LtiSystem series(const LtiSystem& a, const LtiSystem& b) {
    if (a.outputs() != b.inputs()) {
        throw DimensionMismatch("series: output/input port mismatch");
    }
    const int na = a.order();
    const int nb = b.order();
    const int m = a.inputs();
    const int p = b.outputs();

    Matrix A = Matrix::Zero(na + nb, na + nb);
    A.topLeftCorner(na, na) = a.A;
    A.bottomLeftCorner(nb, na) = b.B * a.C;
    A.bottomRightCorner(nb, nb) = b.A;

    Matrix B = Matrix::Zero(na + nb, m);
    B.topRows(na) = a.B;
    B.bottomRows(nb) = b.B * a.D;

    Matrix C = Matrix::Zero(p, na + nb);
    C.leftCols(na) = b.D * a.C;
    C.rightCols(nb) = b.C;

    Matrix D = b.D * a.D;
    return LtiSystem(std::move(A), std::move(B), std::move(C), std::move(D));
}

LtiSystem parallel_diff(const LtiSystem& a, const LtiSystem& b) {
    if (a.inputs() != b.inputs() || a.outputs() != b.outputs()) {
        throw DimensionMismatch("parallel_diff: port mismatch");
    }
    const int na = a.order();
    const int nb = b.order();

    Matrix A = Matrix::Zero(na + nb, na + nb);
    A.topLeftCorner(na, na) = a.A;
    A.bottomRightCorner(nb, nb) = b.A;

    Matrix B(na + nb, a.inputs());
    B.topRows(na) = a.B;
    B.bottomRows(nb) = b.B;

    Matrix C(a.outputs(), na + nb);
    C.leftCols(na) = a.C;
    C.rightCols(nb) = -b.C;

    Matrix D = a.D - b.D;
    return LtiSystem(std::move(A), std::move(B), std::move(C), std::move(D));
}

LtiSystem feedback(const LtiSystem& plant, const LtiSystem& controller, int sign) {
    if (plant.outputs() != controller.inputs() || controller.outputs() != plant.inputs()) {
        throw DimensionMismatch("feedback: loop port mismatch");
    }
    const double s = static_cast<double>(sign);
    const int ng = plant.order();
    const int nk = controller.order();
    const int m = plant.inputs();
    const int p = plant.outputs();

    // Well-posedness of the algebraic loop y = Cg·xg + Dg(u_ext + s·K(y)).
    const Matrix w = Matrix::Identity(p, p) - s * plant.D * controller.D;
    {
        Eigen::JacobiSVD<Matrix> svd(w);
        if (p > 0 && svd.singularValues()(p - 1) <= 1e-12) {
            throw AlgebraicLoop("feedback: interconnection is not well posed");
        }
    }
    const Matrix winv = w.inverse();

    const Matrix bgdk = plant.B * controller.D;
    Matrix A = Matrix::Zero(ng + nk, ng + nk);
    A.topLeftCorner(ng, ng) = plant.A + s * bgdk * winv * plant.C;
    A.topRightCorner(ng, nk) = s * plant.B * controller.C + s * s * bgdk * winv * plant.D * controller.C;
    A.bottomLeftCorner(nk, ng) = controller.B * winv * plant.C;
    A.bottomRightCorner(nk, nk) = controller.A + s * controller.B * winv * plant.D * controller.C;

    Matrix B = Matrix::Zero(ng + nk, m);
    B.topRows(ng) = plant.B + s * bgdk * winv * plant.D;
    B.bottomRows(nk) = controller.B * winv * plant.D;

    Matrix C = Matrix::Zero(p, ng + nk);
    C.leftCols(ng) = winv * plant.C;
    C.rightCols(nk) = s * winv * plant.D * controller.C;

    Matrix D = winv * plant.D;
    return LtiSystem(std::move(A), std::move(B), std::move(C), std::move(D));
}

namespace {

// Symmetric PSD square root factor W = L·Lᵀ with eigenvalues clipped at 0.
Matrix psd_factor(const Matrix& w) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(w);
    const Vector lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

}  // namespace

LtiSystem reduce_order(const LtiSystem& sys, int target_order) {
    const int n = sys.order();
    if (target_order > n || target_order < 0) {
        throw DimensionMismatch("reduce_order: target order out of range");
    }
    if (target_order == n) {
        return sys;
    }

    constexpr double kStableTol = 1e-8;

    Eigen::EigenSolver<Matrix> es(sys.A);
    if (es.info() != Eigen::Success) {
        throw Error("reduce_order: eigendecomposition failed");
    }
    const ComplexVector lam = es.eigenvalues();
    const ComplexMatrix vecs = es.eigenvectors();

    // Real bases of the retained (Re ≥ -tol) and stable invariant subspaces.
    std::vector<Vector> keep_basis;
    std::vector<Vector> stable_basis;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lam(i).imag() < 0.0) {
            continue;  // conjugate handled with its partner
        }
        auto& target = (lam(i).real() >= -kStableTol) ? keep_basis : stable_basis;
        target.push_back(vecs.col(i).real());
        if (lam(i).imag() > 0.0) {
            target.push_back(vecs.col(i).imag());
        }
    }
    const int ku = static_cast<int>(keep_basis.size());
    if (ku > target_order) {
        throw TargetTooSmall("reduce_order: non-stable mode count exceeds target order");
    }

    Matrix t(n, n);
    for (int j = 0; j < ku; ++j) {
        t.col(j) = keep_basis[j];
    }
    for (size_t j = 0; j < stable_basis.size(); ++j) {
        t.col(ku + static_cast<int>(j)) = stable_basis[j];
    }
    Eigen::FullPivLU<Matrix> lu(t);
    if (lu.rank() < n) {
        throw DefectiveMode("reduce_order: eigenvector basis is rank deficient");
    }

    const Matrix a_t = lu.solve(sys.A * t);
    const Matrix b_t = lu.solve(sys.B);
    const Matrix c_t = sys.C * t;

    // The eigenvector basis of the retained block carries an arbitrary
    // scale; rebalance it so downstream norms are meaningful.
    Matrix a_u = a_t.topLeftCorner(ku, ku);
    Matrix b_u = b_t.topRows(ku);
    Matrix c_u = c_t.leftCols(ku);
    if (ku > 0) {
        const LtiSystem balanced = rescale_states(
            LtiSystem(a_u, b_u, c_u, Matrix::Zero(sys.outputs(), sys.inputs())));
        a_u = balanced.A;
        b_u = balanced.B;
        c_u = balanced.C;
    }

    const int ns = n - ku;
    const Matrix a_s = a_t.bottomRightCorner(ns, ns);
    const Matrix b_s = b_t.bottomRows(ns);
    const Matrix c_s = c_t.rightCols(ns);

    const int rs = target_order - ku;
    Matrix a_bal(0, 0), b_bal(0, sys.inputs()), c_bal(sys.outputs(), 0);
    if (rs > 0) {
        // Square-root balanced truncation of the stable block.
        const Matrix wc = solve_lyapunov(a_s.transpose(), b_s * b_s.transpose());
        const Matrix wo = solve_lyapunov(a_s, c_s.transpose() * c_s);
        const Matrix lc = psd_factor(wc);
        const Matrix lo = psd_factor(wo);
        Eigen::JacobiSVD<Matrix> svd(lo.transpose() * lc, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Vector sv = svd.singularValues();
        const double floor_sv = std::max(sv(0), 1.0) * 1e-14;
        for (Eigen::Index i = 0; i < sv.size(); ++i) {
            sv(i) = std::max(sv(i), floor_sv);
        }
        const Vector scale = sv.head(rs).cwiseSqrt().cwiseInverse();
        const Matrix tr = lc * svd.matrixV().leftCols(rs) * scale.asDiagonal();
        const Matrix tl = scale.asDiagonal() * svd.matrixU().leftCols(rs).transpose() * lo.transpose();
        a_bal = tl * a_s * tr;
        b_bal = tl * b_s;
        c_bal = c_s * tr;
    }

    Matrix a_red = Matrix::Zero(target_order, target_order);
    a_red.topLeftCorner(ku, ku) = a_u;
    a_red.bottomRightCorner(rs, rs) = a_bal;
    Matrix b_red(target_order, sys.inputs());
    b_red.topRows(ku) = b_u;
    b_red.bottomRows(rs) = b_bal;
    Matrix c_red(sys.outputs(), target_order);
    c_red.leftCols(ku) = c_u;
    c_red.rightCols(rs) = c_bal;

    return LtiSystem(std::move(a_red), std::move(b_red), std::move(c_red), sys.D);
}

LtiSystem rescale_states(const LtiSystem& sys) {
    const int n = sys.order();
    if (n == 0) {
        return sys;
    }
    Vector d = Vector::Ones(n);
    for (int sweep = 0; sweep < 12; ++sweep) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            double row = 0.0, col = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j != i) {
                    const double aij = sys.A(i, j) * d(j) / d(i);
                    const double aji = sys.A(j, i) * d(i) / d(j);
                    row += aij * aij;
                    col += aji * aji;
                }
            }
            for (int k = 0; k < sys.inputs(); ++k) {
                const double bik = sys.B(i, k) / d(i);
                row += bik * bik;
            }
            for (int k = 0; k < sys.outputs(); ++k) {
                const double cki = sys.C(k, i) * d(i);
                col += cki * cki;
            }
            if (row <= 0.0 || col <= 0.0) {
                continue;
            }
            const double f = std::exp2(std::round(0.25 * std::log2(row / col)));
            if (f != 1.0) {
                d(i) *= f;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }
    LtiSystem out = sys;
    for (int i = 0; i < n; ++i) {
        out.A.row(i) /= d(i);
        out.B.row(i) /= d(i);
        out.A.col(i) *= d(i);
        out.C.col(i) *= d(i);
    }
    return out;
}

namespace detail {

void check_state_finite(const Vector& x, double t) {
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e12) {
        throw NonFiniteState("state diverged at t = " + std::to_string(t));
    }
}

}  // namespace detail

SimTrace simulate_lti(const LtiSystem& sys, const Matrix& input, double dt, const Vector& x0) {
    if (dt <= 0.0) {
        throw Error("simulate_lti: dt must be positive");
    }
    if (input.cols() != sys.inputs()) {
        throw DimensionMismatch("simulate_lti: input column count mismatch");
    }
    if (x0.size() != sys.order()) {
        throw DimensionMismatch("simulate_lti: initial state size mismatch");
    }
    const int steps = static_cast<int>(input.rows()) - 1;
    if (steps < 0) {
        throw Error("simulate_lti: input must contain at least one sample");
    }

    SimTrace trace;
    trace.time = Vector::LinSpaced(steps + 1, 0.0, steps * dt);
    trace.states.resize(steps + 1, sys.order());
    trace.outputs.resize(steps + 1, sys.outputs());

    Vector x = x0;
    for (int k = 0; k <= steps; ++k) {
        trace.states.row(k) = x.transpose();
        trace.outputs.row(k) = (sys.C * x + sys.D * input.row(k).transpose()).transpose();
        if (k == steps) {
            break;
        }
        const Vector u = input.row(k).transpose();
        auto f = [&](double, const Vector& xs) -> Vector { return sys.A * xs + sys.B * u; };
        x = detail::rk4_step(f, k * dt, x, dt);
        detail::check_state_finite(x, (k + 1) * dt);
    }
    return trace;
}

std::vector<ComplexMatrix> frequency_response(const LtiSystem& sys, const Vector& omega) {
    const int n = sys.order();
    const ComplexVector eig = n > 0 ? ComplexVector(sys.A.eigenvalues()) : ComplexVector(0);

    std::vector<ComplexMatrix> out;
    out.reserve(omega.size());
    for (Eigen::Index k = 0; k < omega.size(); ++k) {
        const Complex s(0.0, omega(k));
        for (Eigen::Index i = 0; i < eig.size(); ++i) {
            if (std::abs(s - eig(i)) < 1e-12) {
                throw FrequencyOnEigenvalue("frequency_response: jω coincides with an eigenvalue");
            }
        }
        if (n == 0) {
            out.push_back(sys.D.cast<Complex>());
            continue;
        }
        ComplexMatrix m = -sys.A.cast<Complex>();
        m.diagonal().array() += s;
        const ComplexMatrix x = m.partialPivLu().solve(sys.B.cast<Complex>());
        out.push_back(sys.C.cast<Complex>() * x + sys.D.cast<Complex>());
    }
    return out;
}

namespace {

ComplexVector phase_fix(const ComplexVector& v) {
    ComplexVector u = v;
    const double nrm = u.norm();
    if (nrm > 0.0) {
        u /= nrm;
    }
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (std::abs(u(i)) > 1e-12) {
            u *= std::conj(u(i)) / std::abs(u(i));
            break;
        }
    }
    return u;
}

}  // namespace

std::vector<ModeInfo> modes(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DimensionMismatch("modes: matrix must be square");
    }
    const int n = static_cast<int>(a.rows());
    if (n == 0) {
        return {};
    }

    Eigen::EigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success) {
        throw Error("modes: eigendecomposition failed");
    }
    const ComplexMatrix v = es.eigenvectors();
    const ComplexMatrix w = v.inverse();  // rows are left eigenvectors

    constexpr double two_pi = 6.283185307179586476925286766559;
    std::vector<ModeInfo> result(n);
    for (int i = 0; i < n; ++i) {
        ModeInfo& m = result[i];
        m.eigenvalue = es.eigenvalues()(i);
        const double mag = std::abs(m.eigenvalue);
        m.frequency_hz = std::abs(m.eigenvalue.imag()) / two_pi;
        m.damping_ratio = mag > 0.0 ? -m.eigenvalue.real() / mag : 0.0;
        m.right_eigenvector = phase_fix(v.col(i));
        m.left_eigenvector = phase_fix(w.row(i).transpose());
    }
    std::stable_sort(result.begin(), result.end(), [](const ModeInfo& x, const ModeInfo& y) {
        if (x.damping_ratio != y.damping_ratio) {
            return x.damping_ratio < y.damping_ratio;
        }
        if (x.frequency_hz != y.frequency_hz) {
            return x.frequency_hz < y.frequency_hz;
        }
        return x.eigenvalue.real() < y.eigenvalue.real();
    });
    return result;
}

}  // namespace etwadc::lti
