#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "etwadc/grid.hpp"

namespace etwadc::grid {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string strip(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cells.push_back(strip(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.push_back("");
    }
    return cells;
}

/// Maps a header onto the expected column set; any unknown, duplicate or
/// missing column is rejected.
std::vector<int> column_map(const std::string& path, const std::string& header,
                            const std::vector<std::string>& expected) {
    const auto cells = split_csv(header);
    std::vector<int> where(expected.size(), -1);
    for (size_t c = 0; c < cells.size(); ++c) {
        const std::string name = lower(cells[c]);
        const auto it = std::find(expected.begin(), expected.end(), name);
        if (it == expected.end()) {
            throw ParseError(path + ":1: unknown column '" + cells[c] + "'");
        }
        const auto slot = static_cast<size_t>(it - expected.begin());
        if (where[slot] >= 0) {
            throw ParseError(path + ":1: duplicate column '" + cells[c] + "'");
        }
        where[slot] = static_cast<int>(c);
    }
    for (size_t i = 0; i < expected.size(); ++i) {
        if (where[i] < 0) {
            throw ParseError(path + ":1: missing column '" + expected[i] + "'");
        }
    }
    return where;
}

double to_double(const std::string& path, int line, const std::string& cell) {
    try {
        size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return v;
    } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line) + ": bad number '" + cell + "'");
    }
}

int to_int(const std::string& path, int line, const std::string& cell) {
    try {
        size_t used = 0;
        const int v = std::stoi(cell, &used);
        if (used != cell.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return v;
    } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line) + ": bad integer '" + cell + "'");
    }
}

template <typename RowFn>
void for_each_row(const std::string& path, const std::vector<std::string>& expected, RowFn fn) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open: " + path);
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw ParseError(path + ": empty file");
    }
    const auto where = column_map(path, header, expected);
    const auto ncols = split_csv(header).size();

    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (strip(line).empty()) {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != ncols) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(ncols) + " columns, got " + std::to_string(cells.size()));
        }
        std::vector<std::string> row(expected.size());
        for (size_t i = 0; i < expected.size(); ++i) {
            row[i] = cells[static_cast<size_t>(where[i])];
        }
        fn(lineno, row);
    }
}

}  // namespace

int Network::bus_index(int id) const {
    for (size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == id) {
            return static_cast<int>(i);
        }
    }
    throw ValidationError("unknown bus id " + std::to_string(id));
}

void Network::validate() const {
    if (base_mva <= 0.0) {
        throw ValidationError("base MVA must be positive");
    }
    std::set<int> ids;
    int slack_count = 0;
    for (const auto& bus : buses) {
        if (!ids.insert(bus.id).second) {
            throw ValidationError("duplicate bus id " + std::to_string(bus.id));
        }
        if (bus.type == BusType::Slack) {
            ++slack_count;
        }
        if (bus.vm <= 0.0) {
            throw ValidationError("bus " + std::to_string(bus.id) + ": voltage magnitude must be positive");
        }
    }
    if (slack_count != 1) {
        throw ValidationError("network must contain exactly one slack bus, found " +
                              std::to_string(slack_count));
    }
    for (const auto& branch : branches) {
        if (!ids.count(branch.from) || !ids.count(branch.to)) {
            throw ValidationError("branch " + std::to_string(branch.from) + "-" +
                                  std::to_string(branch.to) + " references an unknown bus");
        }
        if (branch.r == 0.0 && branch.x == 0.0) {
            throw ValidationError("branch " + std::to_string(branch.from) + "-" +
                                  std::to_string(branch.to) + " has zero series impedance");
        }
    }
    std::set<int> machine_buses;
    for (const auto& mach : machines) {
        if (!ids.count(mach.bus)) {
            throw ValidationError("machine references unknown bus " + std::to_string(mach.bus));
        }
        if (!machine_buses.insert(mach.bus).second) {
            throw ValidationError("more than one machine at bus " + std::to_string(mach.bus));
        }
        if (mach.h <= 0.0) {
            throw ValidationError("machine at bus " + std::to_string(mach.bus) + ": H must be positive");
        }
        if (mach.xdp <= 0.0) {
            throw ValidationError("machine at bus " + std::to_string(mach.bus) +
                                  ": transient reactance must be positive");
        }
        if (mach.model == MachineModel::OneAxis && (mach.tdo <= 0.0 || mach.ta <= 0.0 || mach.ka <= 0.0)) {
            throw ValidationError("machine at bus " + std::to_string(mach.bus) +
                                  ": one-axis model needs positive tdo, ka, ta");
        }
        if (mach.pss && mach.model == MachineModel::Classical) {
            throw ValidationError("machine at bus " + std::to_string(mach.bus) +
                                  ": a stabiliser needs an excitation path");
        }
    }
}

Network load_network(const std::string& bus_file, const std::string& branch_file,
                     const std::string& machine_file, double base_mva, double f_hz) {
    Network net;
    net.base_mva = base_mva;
    net.f_hz = f_hz;

    for_each_row(bus_file,
                 {"id", "type", "vm_pu", "va_rad", "pload_pu", "qload_pu", "gshunt_pu", "bshunt_pu"},
                 [&](int line, const std::vector<std::string>& row) {
                     Bus bus;
                     bus.id = to_int(bus_file, line, row[0]);
                     const std::string type = lower(row[1]);
                     if (type == "slack") {
                         bus.type = BusType::Slack;
                     } else if (type == "pv") {
                         bus.type = BusType::PV;
                     } else if (type == "pq") {
                         bus.type = BusType::PQ;
                     } else {
                         throw ParseError(bus_file + ":" + std::to_string(line) + ": unknown bus type '" +
                                          row[1] + "'");
                     }
                     bus.vm = to_double(bus_file, line, row[2]);
                     bus.va = to_double(bus_file, line, row[3]);
                     bus.pload = to_double(bus_file, line, row[4]);
                     bus.qload = to_double(bus_file, line, row[5]);
                     bus.gshunt = to_double(bus_file, line, row[6]);
                     bus.bshunt = to_double(bus_file, line, row[7]);
                     net.buses.push_back(bus);
                 });

    for_each_row(branch_file, {"from", "to", "r_pu", "x_pu", "b_pu", "tap"},
                 [&](int line, const std::vector<std::string>& row) {
                     Branch br;
                     br.from = to_int(branch_file, line, row[0]);
                     br.to = to_int(branch_file, line, row[1]);
                     br.r = to_double(branch_file, line, row[2]);
                     br.x = to_double(branch_file, line, row[3]);
                     br.b = to_double(branch_file, line, row[4]);
                     br.tap = to_double(branch_file, line, row[5]);
                     if (br.tap == 0.0) {
                         br.tap = 1.0;
                     }
                     net.branches.push_back(br);
                 });

    for_each_row(machine_file,
                 {"bus", "model", "h_s", "d_pu", "xd_pu", "xq_pu", "xdp_pu", "tdo_s", "ka", "ta_s", "pss"},
                 [&](int line, const std::vector<std::string>& row) {
                     Machine m;
                     m.bus = to_int(machine_file, line, row[0]);
                     const std::string model = lower(row[1]);
                     if (model == "classical") {
                         m.model = MachineModel::Classical;
                     } else if (model == "one-axis" || model == "one_axis") {
                         m.model = MachineModel::OneAxis;
                     } else {
                         throw ParseError(machine_file + ":" + std::to_string(line) +
                                          ": unknown machine model '" + row[1] + "'");
                     }
                     m.h = to_double(machine_file, line, row[2]);
                     m.d = to_double(machine_file, line, row[3]);
                     m.xd = to_double(machine_file, line, row[4]);
                     m.xq = to_double(machine_file, line, row[5]);
                     m.xdp = to_double(machine_file, line, row[6]);
                     m.tdo = to_double(machine_file, line, row[7]);
                     m.ka = to_double(machine_file, line, row[8]);
                     m.ta = to_double(machine_file, line, row[9]);
                     m.pss = to_int(machine_file, line, row[10]) != 0;
                     net.machines.push_back(m);
                 });

    net.validate();
    return net;
}

ComplexMatrix bus_admittance(const Network& net) {
    const int n = static_cast<int>(net.buses.size());
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const auto& br : net.branches) {
        const int f = net.bus_index(br.from);
        const int t = net.bus_index(br.to);
        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex ysh(0.0, br.b / 2.0);
        const double a = br.tap;
        y(f, f) += (ys + ysh) / (a * a);
        y(t, t) += ys + ysh;
        y(f, t) -= ys / a;
        y(t, f) -= ys / a;
    }
    for (int i = 0; i < n; ++i) {
        y(i, i) += Complex(net.buses[i].gshunt, net.buses[i].bshunt);
    }
    return y;
}

ComplexMatrix kron_reduce(const ComplexMatrix& y, const std::vector<int>& keep) {
    const int n = static_cast<int>(y.rows());
    if (y.cols() != n) {
        throw DimensionMismatch("kron_reduce: matrix must be square");
    }
    std::vector<bool> kept(n, false);
    for (int k : keep) {
        if (k < 0 || k >= n) {
            throw DimensionMismatch("kron_reduce: keep index out of range");
        }
        kept[k] = true;
    }
    std::vector<int> elim;
    for (int i = 0; i < n; ++i) {
        if (!kept[i]) {
            elim.push_back(i);
        }
    }
    const int nk = static_cast<int>(keep.size());
    const int ne = static_cast<int>(elim.size());
    if (ne == 0) {
        ComplexMatrix out(nk, nk);
        for (int i = 0; i < nk; ++i) {
            for (int j = 0; j < nk; ++j) {
                out(i, j) = y(keep[i], keep[j]);
            }
        }
        return out;
    }

    ComplexMatrix ykk(nk, nk), yke(nk, ne), yek(ne, nk), yee(ne, ne);
    for (int i = 0; i < nk; ++i) {
        for (int j = 0; j < nk; ++j) {
            ykk(i, j) = y(keep[i], keep[j]);
        }
        for (int j = 0; j < ne; ++j) {
            yke(i, j) = y(keep[i], elim[j]);
        }
    }
    for (int i = 0; i < ne; ++i) {
        for (int j = 0; j < nk; ++j) {
            yek(i, j) = y(elim[i], keep[j]);
        }
        for (int j = 0; j < ne; ++j) {
            yee(i, j) = y(elim[i], elim[j]);
        }
    }

    Eigen::FullPivLU<ComplexMatrix> lu(yee);
    if (lu.rank() < ne) {
        throw SingularEliminationBlock("kron_reduce: eliminated block is singular");
    }
    return ykk - yke * lu.solve(yek);
}

}  // namespace etwadc::grid
