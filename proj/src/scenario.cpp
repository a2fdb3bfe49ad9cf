#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <set>

#include "etwadc/scenario.hpp"

namespace etwadc::scenario {

namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& message) {
    std::string where;
    if (node.Mark().line >= 0) {
        where = "line " + std::to_string(node.Mark().line + 1) + ": ";
    }
    throw ConfigError(where + message);
}

const YAML::Node require(const YAML::Node& parent, const std::string& key) {
    const YAML::Node child = parent[key];
    if (!child) {
        fail(parent, "missing required key '" + key + "'");
    }
    return child;
}

template <typename T>
T as(const YAML::Node& node, const std::string& key) {
    try {
        return require(node, key).as<T>();
    } catch (const YAML::Exception& e) {
        fail(node, "bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T as_or(const YAML::Node& node, const std::string& key, T fallback) {
    const YAML::Node child = node[key];
    if (!child) {
        return fallback;
    }
    try {
        return child.as<T>();
    } catch (const YAML::Exception& e) {
        fail(node, "bad value for '" + key + "': " + e.what());
    }
}

void reject_unknown(const YAML::Node& node, const std::set<std::string>& known,
                    const std::string& context) {
    for (const auto& entry : node) {
        const std::string key = entry.first.as<std::string>();
        if (!known.count(key)) {
            fail(entry.first, "unknown key '" + key + "' in " + context);
        }
    }
}

}  // namespace

void Scenario::validate() const {
    if (sigmas.empty()) {
        throw ConfigError(name + ": at least one sigma value is required");
    }
    for (double s : sigmas) {
        if (!(s > 0.0 && s < 1.0)) {
            throw ConfigError(name + ": sigma values must lie strictly inside (0,1)");
        }
    }
    if (fault.bus >= 0 && !(fault.clear_s > fault.start_s)) {
        throw ConfigError(name + ": fault duration must be positive");
    }
    if (dt <= 0.0 || t_end <= 0.0) {
        throw ConfigError(name + ": dt and t_end must be positive");
    }
    if (reduction_order <= 0) {
        throw ConfigError(name + ": reduction order must be positive");
    }
    if (rho_over_sigma <= 0.0) {
        throw ConfigError(name + ": trigger rho_over_sigma must be positive");
    }
    wadc.validate();
}

grid::Network Scenario::load_net() const {
    grid::Network net = grid::load_network(bus_file, branch_file, machine_file, base_mva, f_hz);
    for (const auto& [bus_id, pgen] : dispatch_overrides) {
        bool found = false;
        for (auto& bus : net.buses) {
            if (bus.id == bus_id) {
                bus.pload = -pgen;
                found = true;
            }
        }
        if (!found) {
            throw ConfigError(name + ": dispatch override references unknown bus " +
                              std::to_string(bus_id));
        }
    }
    // Referenced machines must exist.
    for (int bus : {reference_machine, remote_machine, local_machine, wadc_machine}) {
        bool found = false;
        for (const auto& m : net.machines) {
            found = found || m.bus == bus;
        }
        if (!found) {
            throw ConfigError(name + ": no machine at referenced bus " + std::to_string(bus));
        }
    }
    return net;
}

Scenario load_scenario(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::BadFile&) {
        throw ConfigError("cannot open scenario file: " + path);
    } catch (const YAML::Exception& e) {
        throw ConfigError(path + ": line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }

    reject_unknown(root,
                   {"name", "network", "dispatch", "power_flow", "pss", "fault", "signals",
                    "wadc", "trigger", "simulation", "reduction", "output_dir"},
                   "scenario");

    Scenario sc;
    sc.name = as_or<std::string>(root, "name", "scenario");
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).lexically_normal().string();
    };

    const YAML::Node net = require(root, "network");
    reject_unknown(net, {"bus", "branch", "machine", "base_mva", "f_hz"}, "network");
    sc.bus_file = resolve(as<std::string>(net, "bus"));
    sc.branch_file = resolve(as<std::string>(net, "branch"));
    sc.machine_file = resolve(as<std::string>(net, "machine"));
    sc.base_mva = as_or<double>(net, "base_mva", 100.0);
    sc.f_hz = as_or<double>(net, "f_hz", 60.0);

    if (const YAML::Node d = root["dispatch"]) {
        for (const auto& entry : d) {
            sc.dispatch_overrides[entry.first.as<int>()] = entry.second.as<double>();
        }
    }

    if (const YAML::Node p = root["power_flow"]) {
        reject_unknown(p, {"tol", "max_iter"}, "power_flow");
        sc.pf_tol = as_or<double>(p, "tol", 1e-8);
        sc.pf_max_iter = as_or<int>(p, "max_iter", 20);
    }

    if (const YAML::Node p = root["pss"]) {
        reject_unknown(p, {"gain", "washout_s", "leadlag", "limit"}, "pss");
        sc.pss.gain = as_or<double>(p, "gain", sc.pss.gain);
        sc.pss.washout_s = as_or<double>(p, "washout_s", sc.pss.washout_s);
        sc.pss.limit = as_or<double>(p, "limit", sc.pss.limit);
        if (const YAML::Node ll = p["leadlag"]) {
            sc.pss.leadlag.clear();
            for (const auto& pair : ll) {
                if (pair.size() != 2) {
                    fail(pair, "pss leadlag entries must be [lead_s, lag_s] pairs");
                }
                sc.pss.leadlag.emplace_back(pair[0].as<double>(), pair[1].as<double>());
            }
        }
    }

    if (const YAML::Node f = root["fault"]) {
        reject_unknown(f, {"bus", "start_s", "duration_s"}, "fault");
        sc.fault.bus = as<int>(f, "bus");
        sc.fault.start_s = as<double>(f, "start_s");
        sc.fault.clear_s = sc.fault.start_s + as<double>(f, "duration_s");
    }

    const YAML::Node sig = require(root, "signals");
    reject_unknown(sig, {"reference_machine", "remote_machine", "local_machine"}, "signals");
    sc.reference_machine = as<int>(sig, "reference_machine");
    sc.remote_machine = as<int>(sig, "remote_machine");
    sc.local_machine = as<int>(sig, "local_machine");

    const YAML::Node w = require(root, "wadc");
    reject_unknown(w, {"machine", "gain", "washout_s", "lead_s", "lag_s", "delay_s", "output_limit"},
                   "wadc");
    sc.wadc_machine = as<int>(w, "machine");
    sc.wadc.gain = as<double>(w, "gain");
    sc.wadc.washout_s = as_or<double>(w, "washout_s", 10.0);
    sc.wadc.lead_s = as<double>(w, "lead_s");
    sc.wadc.lag_s = as<double>(w, "lag_s");
    sc.wadc.delay_s = as_or<double>(w, "delay_s", 0.0);
    if (const YAML::Node lim = w["output_limit"]) {
        sc.wadc.output_limit = lim.as<double>();
    }

    const YAML::Node t = require(root, "trigger");
    reject_unknown(t, {"sigmas", "rho_over_sigma"}, "trigger");
    for (const auto& s : require(t, "sigmas")) {
        sc.sigmas.push_back(s.as<double>());
    }
    sc.rho_over_sigma = as_or<double>(t, "rho_over_sigma", 0.05);

    const YAML::Node sim = require(root, "simulation");
    reject_unknown(sim, {"dt", "t_end", "mode"}, "simulation");
    sc.dt = as<double>(sim, "dt");
    sc.t_end = as<double>(sim, "t_end");
    const std::string mode = as_or<std::string>(sim, "mode", "nonlinear");
    if (mode == "linear") {
        sc.linear_mode = true;
    } else if (mode == "nonlinear") {
        sc.linear_mode = false;
    } else {
        throw ConfigError(path + ": simulation mode must be 'linear' or 'nonlinear'");
    }

    const YAML::Node red = require(root, "reduction");
    reject_unknown(red, {"order"}, "reduction");
    sc.reduction_order = as<int>(red, "order");

    sc.output_dir = resolve(as_or<std::string>(root, "output_dir", "out/" + sc.name));

    sc.validate();
    return sc;
}

}  // namespace etwadc::scenario
