#include <cmath>

#include "etwadc/grid.hpp"

namespace etwadc::grid {

PowerFlowSolution solve_power_flow(const Network& net, double tol, int max_iter) {
    if (tol <= 0.0) {
        throw ValidationError("solve_power_flow: tolerance must be positive");
    }
    net.validate();
    const int n = static_cast<int>(net.buses.size());
    const ComplexMatrix y = bus_admittance(net);
    const Eigen::MatrixXd g = y.real();
    const Eigen::MatrixXd b = y.imag();

    Eigen::VectorXd vm(n), va(n), p_spec(n), q_spec(n);
    std::vector<int> p_buses;  // mismatch rows: PV + PQ
    std::vector<int> q_buses;  // mismatch rows: PQ only
    for (int i = 0; i < n; ++i) {
        const Bus& bus = net.buses[i];
        vm(i) = bus.vm;
        va(i) = bus.va;
        p_spec(i) = -bus.pload;
        q_spec(i) = -bus.qload;
        if (bus.type != BusType::Slack) {
            p_buses.push_back(i);
        }
        if (bus.type == BusType::PQ) {
            q_buses.push_back(i);
        }
    }
    const int np = static_cast<int>(p_buses.size());
    const int nq = static_cast<int>(q_buses.size());

    auto calc_injections = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
        for (int i = 0; i < n; ++i) {
            double pi = 0.0, qi = 0.0;
            for (int j = 0; j < n; ++j) {
                const double th = va(i) - va(j);
                const double ct = std::cos(th);
                const double st = std::sin(th);
                pi += vm(j) * (g(i, j) * ct + b(i, j) * st);
                qi += vm(j) * (g(i, j) * st - b(i, j) * ct);
            }
            p(i) = vm(i) * pi;
            q(i) = vm(i) * qi;
        }
    };

    Eigen::VectorXd p(n), q(n);
    int iterations = 0;
    double worst = 0.0;
    for (;; ++iterations) {
        calc_injections(p, q);
        worst = 0.0;
        Eigen::VectorXd rhs(np + nq);
        for (int k = 0; k < np; ++k) {
            rhs(k) = p_spec(p_buses[k]) - p(p_buses[k]);
        }
        for (int k = 0; k < nq; ++k) {
            rhs(np + k) = q_spec(q_buses[k]) - q(q_buses[k]);
        }
        if (rhs.size() > 0) {
            worst = rhs.cwiseAbs().maxCoeff();
        }
        if (!std::isfinite(worst) || worst > 1e8) {
            throw NonConvergence("solve_power_flow: iteration diverged");
        }
        if (worst <= tol) {
            break;
        }
        if (iterations >= max_iter) {
            throw NonConvergence("solve_power_flow: no convergence after " +
                                 std::to_string(max_iter) + " iterations (mismatch " +
                                 std::to_string(worst) + ")");
        }

        // Polar Jacobian [dP/dθ dP/dV; dQ/dθ dQ/dV].
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(np + nq, np + nq);
        for (int r = 0; r < np; ++r) {
            const int i = p_buses[r];
            for (int c = 0; c < np; ++c) {
                const int j = p_buses[c];
                if (i == j) {
                    jac(r, c) = -q(i) - b(i, i) * vm(i) * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(r, c) = vm(i) * vm(j) * (g(i, j) * std::sin(th) - b(i, j) * std::cos(th));
                }
            }
            for (int c = 0; c < nq; ++c) {
                const int j = q_buses[c];
                if (i == j) {
                    jac(r, np + c) = p(i) / vm(i) + g(i, i) * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(r, np + c) = vm(i) * (g(i, j) * std::cos(th) + b(i, j) * std::sin(th));
                }
            }
        }
        for (int r = 0; r < nq; ++r) {
            const int i = q_buses[r];
            for (int c = 0; c < np; ++c) {
                const int j = p_buses[c];
                if (i == j) {
                    jac(np + r, c) = p(i) - g(i, i) * vm(i) * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(np + r, c) = -vm(i) * vm(j) * (g(i, j) * std::cos(th) + b(i, j) * std::sin(th));
                }
            }
            for (int c = 0; c < nq; ++c) {
                const int j = q_buses[c];
                if (i == j) {
                    jac(np + r, np + c) = q(i) / vm(i) - b(i, i) * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(np + r, np + c) = vm(i) * (g(i, j) * std::sin(th) - b(i, j) * std::cos(th));
                }
            }
        }

        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (lu.rank() < jac.rows()) {
            throw SingularJacobian("solve_power_flow: singular Jacobian");
        }
        const Eigen::VectorXd dx = lu.solve(rhs);
        for (int k = 0; k < np; ++k) {
            va(p_buses[k]) += dx(k);
        }
        for (int k = 0; k < nq; ++k) {
            vm(q_buses[k]) += dx(np + k);
            if (vm(q_buses[k]) <= 0.0) {
                throw NonConvergence("solve_power_flow: voltage collapsed at bus " +
                                     std::to_string(net.buses[q_buses[k]].id));
            }
        }
    }

    PowerFlowSolution sol;
    sol.v.resize(n);
    for (int i = 0; i < n; ++i) {
        sol.v(i) = std::polar(vm(i), va(i));
    }
    sol.p_inj = p;
    sol.q_inj = q;
    sol.iterations = iterations;
    sol.mismatch = worst;
    return sol;
}

}  // namespace etwadc::grid
