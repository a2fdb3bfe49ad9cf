#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <thread>

#include "etwadc/lti_io.hpp"
#include "etwadc/pipeline.hpp"

namespace etwadc::scenario {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using lti::format_double;

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("checksum: cannot open " + path);
    }
    uint64_t hash = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(hash));
    return out;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open for writing: " + path);
    }
    out << text;
}

void write_json(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open: " + path);
    }
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// Records the stage's artifacts and their checksums.
void write_manifest(const std::string& dir, const std::vector<std::string>& files) {
    json manifest;
    manifest["artifacts"] = json::array();
    for (const auto& f : files) {
        manifest["artifacts"].push_back({{"file", f}, {"fnv1a64", file_checksum(dir + "/" + f)}});
    }
    write_json(dir + "/manifest.json", manifest);
}

bool manifest_valid(const std::string& dir) {
    if (!fs::exists(dir + "/manifest.json")) {
        return false;
    }
    const json manifest = read_json(dir + "/manifest.json");
    for (const auto& entry : manifest.at("artifacts")) {
        const std::string file = entry.at("file").get<std::string>();
        if (!fs::exists(dir + "/" + file) ||
            file_checksum(dir + "/" + file) != entry.at("fnv1a64").get<std::string>()) {
            return false;
        }
    }
    return true;
}

std::string sigma_tag(double sigma) {
    return "sigma_" + format_double(sigma);
}

int sweep_threads(size_t jobs) {
    unsigned cap = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("ETWADC_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) {
            cap = static_cast<unsigned>(v);
        }
    }
    cap = std::max(1u, std::min<unsigned>(cap, static_cast<unsigned>(jobs)));
    return static_cast<int>(cap);
}

}  // namespace

Pipeline::Pipeline(Scenario sc, bool recompute) : scenario_(std::move(sc)), recompute_(recompute) {
    scenario_.validate();
}

std::string Pipeline::stage_dir(const std::string& stage) const {
    return scenario_.output_dir + "/" + stage;
}

bool Pipeline::stage_complete(const std::string& stage) const {
    return !recompute_ && manifest_valid(stage_dir(stage));
}

const grid::Network& Pipeline::net() {
    if (!net_) {
        net_ = scenario_.load_net();
    }
    return *net_;
}

const grid::PowerFlowSolution& Pipeline::power_flow() {
    if (pf_) {
        return *pf_;
    }
    const std::string dir = stage_dir("powerflow");
    if (stage_complete("powerflow")) {
        const lti::Matrix table = lti::load_matrix_csv(dir + "/solution.csv");
        const json report = read_json(dir + "/report.json");
        grid::PowerFlowSolution pf;
        pf.v.resize(table.rows());
        pf.p_inj.resize(table.rows());
        pf.q_inj.resize(table.rows());
        for (Eigen::Index i = 0; i < table.rows(); ++i) {
            pf.v(i) = std::polar(table(i, 1), table(i, 2));
            pf.p_inj(i) = table(i, 3);
            pf.q_inj(i) = table(i, 4);
        }
        pf.iterations = report.at("iterations").get<int>();
        pf.mismatch = report.at("mismatch_pu").get<double>();
        pf_ = pf;
        return *pf_;
    }

    pf_ = grid::solve_power_flow(net(), scenario_.pf_tol, scenario_.pf_max_iter);
    fs::create_directories(dir);
    {
        const auto& pf = *pf_;
        const auto n = pf.v.size();
        lti::Matrix table(n, 5);
        for (Eigen::Index i = 0; i < n; ++i) {
            table(i, 0) = net().buses[static_cast<size_t>(i)].id;
            table(i, 1) = std::abs(pf.v(i));
            table(i, 2) = std::arg(pf.v(i));
            table(i, 3) = pf.p_inj(i);
            table(i, 4) = pf.q_inj(i);
        }
        lti::save_matrix_csv(dir + "/solution.csv", table);
        write_json(dir + "/report.json",
                   {{"iterations", pf.iterations}, {"mismatch_pu", pf.mismatch}});
    }
    write_manifest(dir, {"solution.csv", "report.json"});
    return *pf_;
}

const grid::DynamicModel& Pipeline::eq_model() {
    if (!eq_model_) {
        eq_model_ = grid::init_dynamics(net(), power_flow(), grid::FaultSchedule{},
                                        scenario_.reference_machine, scenario_.pss);
    }
    return *eq_model_;
}

const grid::DynamicModel& Pipeline::fault_model() {
    if (!fault_model_) {
        fault_model_ = grid::init_dynamics(net(), power_flow(), scenario_.fault,
                                           scenario_.reference_machine, scenario_.pss);
    }
    return *fault_model_;
}

const lti::LtiSystem& Pipeline::plant() {
    if (plant_) {
        return *plant_;
    }
    const std::string dir = stage_dir("linearize");
    if (stage_complete("linearize")) {
        plant_ = lti::load_system_csv(dir, "plant_");
        return *plant_;
    }

    const grid::DynamicModel& model = eq_model();
    const lti::LtiSystem full = grid::linearize(
        model, {scenario_.wadc_machine},
        {{scenario_.remote_machine, scenario_.reference_machine},
         {scenario_.local_machine, scenario_.reference_machine}});
    plant_ = grid::deflate_reference_angle(model, full);

    fs::create_directories(dir);
    lti::save_system_csv(dir, "plant_", *plant_);
    {
        std::string labels;
        for (const auto& label : plant_->state_labels) {
            labels += label + "\n";
        }
        write_text(dir + "/states.txt", labels);

        const auto mode_list = lti::modes(plant_->A);
        lti::Matrix table(static_cast<Eigen::Index>(mode_list.size()), 4);
        for (size_t i = 0; i < mode_list.size(); ++i) {
            table(static_cast<Eigen::Index>(i), 0) = mode_list[i].eigenvalue.real();
            table(static_cast<Eigen::Index>(i), 1) = mode_list[i].eigenvalue.imag();
            table(static_cast<Eigen::Index>(i), 2) = mode_list[i].frequency_hz;
            table(static_cast<Eigen::Index>(i), 3) = mode_list[i].damping_ratio;
        }
        lti::save_matrix_csv(dir + "/modes.csv", table);
    }
    write_manifest(dir, {"plant_A.csv", "plant_B.csv", "plant_C.csv", "plant_D.csv", "states.txt",
                         "modes.csv"});
    return *plant_;
}

const lti::LtiSystem& Pipeline::reduced() {
    if (reduced_) {
        return *reduced_;
    }
    const std::string dir = stage_dir("reduce");
    if (stage_complete("reduce")) {
        reduced_ = lti::load_system_csv(dir, "reduced_");
        return *reduced_;
    }

    reduced_ = lti::reduce_order(plant(), scenario_.reduction_order);
    fs::create_directories(dir);
    lti::save_system_csv(dir, "reduced_", *reduced_);
    {
        // Magnitude comparison over the band the reduction must preserve.
        const int points = 200;
        lti::Vector omega(points);
        for (int i = 0; i < points; ++i) {
            omega(i) = std::pow(10.0, 0.0 + 2.0 * i / (points - 1));  // 1..100 rad/s
        }
        const auto full_resp = lti::frequency_response(plant(), omega);
        const auto red_resp = lti::frequency_response(*reduced_, omega);
        lti::Matrix table(points, 5);
        for (int i = 0; i < points; ++i) {
            table(i, 0) = omega(i);
            table(i, 1) = 20.0 * std::log10(std::abs(full_resp[i](0, 0)));
            table(i, 2) = 20.0 * std::log10(std::abs(red_resp[i](0, 0)));
            table(i, 3) = 20.0 * std::log10(std::abs(full_resp[i](1, 0)));
            table(i, 4) = 20.0 * std::log10(std::abs(red_resp[i](1, 0)));
        }
        lti::save_matrix_csv(dir + "/bode.csv", table);
    }
    write_manifest(dir, {"reduced_A.csv", "reduced_B.csv", "reduced_C.csv", "reduced_D.csv",
                         "bode.csv"});
    return *reduced_;
}

const Pipeline::DesignData& Pipeline::design() {
    if (design_) {
        return *design_;
    }
    const std::string dir = stage_dir("design");

    auto rebuild_loop = [&](DesignData& d) {
        d.loop = wadc::assemble_closed_loop(d.plant_scaled, d.controller_scaled, 0);
    };

    if (stage_complete("design")) {
        DesignData d;
        d.plant_scaled = lti::load_system_csv(dir, "plant_scaled_");
        d.controller_scaled = lti::load_system_csv(dir, "wadc_");
        rebuild_loop(d);
        const json trig = read_json(dir + "/trigger.json");
        d.loop.certificate_scale = trig.at("certificate_scale").get<double>();
        for (const auto& entry : trig.at("rho_per_sigma")) {
            d.rho[entry.at("sigma").get<double>()] = entry.at("rho").get<double>();
        }
        const lti::Matrix rtab = lti::load_matrix_csv(dir + "/residues.csv");
        for (Eigen::Index i = 0; i < rtab.rows(); ++i) {
            wadc::ResidueEntry e;
            e.rank = static_cast<int>(rtab(i, 0));
            e.eigenvalue = {rtab(i, 1), rtab(i, 2)};
            e.input = static_cast<int>(rtab(i, 3));
            e.output = static_cast<int>(rtab(i, 4));
            e.residue = {rtab(i, 5), rtab(i, 6)};
            e.magnitude = rtab(i, 7);
            d.residues.entries.push_back(e);
        }
        design_ = std::move(d);
        return *design_;
    }

    DesignData d;
    // Residue screen across every excitation-equipped machine and every
    // relative-speed output, for the dominant band mode.
    for (const auto& m : eq_model().machines) {
        if (m.model == grid::MachineModel::OneAxis) {
            d.residue_inputs.push_back(m.bus);
        }
        if (m.bus != scenario_.reference_machine) {
            d.residue_outputs.emplace_back(m.bus, scenario_.reference_machine);
        }
    }
    const lti::LtiSystem screen_plant = grid::deflate_reference_angle(
        eq_model(), grid::linearize(eq_model(), d.residue_inputs, d.residue_outputs));
    const auto all_modes = lti::modes(screen_plant.A);
    auto band = wadc::screen_interarea(all_modes);
    if (band.empty()) {
        for (const auto& m : all_modes) {
            if (m.eigenvalue.imag() > 0.0) {
                band.push_back(m);
                break;
            }
        }
    }
    if (!band.empty()) {
        d.residues = wadc::modal_residues(screen_plant, {band.front()});
    }

    const lti::LtiSystem controller = wadc::build_wadc(scenario_.wadc);
    d.loop = wadc::calibrate_certificate(reduced(), controller, 0, scenario_.rho_over_sigma);
    d.plant_scaled = d.loop.plant;
    d.controller_scaled = d.loop.controller;
    const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d.loop.order(), d.loop.order());
    for (double sigma : scenario_.sigmas) {
        d.rho[sigma] = events::compute_trigger_threshold(d.loop, q, sigma).rho;
    }

    fs::create_directories(dir);
    lti::save_system_csv(dir, "plant_scaled_", d.plant_scaled);
    lti::save_system_csv(dir, "wadc_", d.controller_scaled);
    lti::save_matrix_csv(dir + "/loop_A.csv", d.loop.a);
    lti::save_matrix_csv(dir + "/loop_B.csv", d.loop.b);
    lti::save_matrix_csv(dir + "/loop_Ctilde.csv", d.loop.c_tilde);
    {
        lti::Matrix rtab(static_cast<Eigen::Index>(d.residues.entries.size()), 8);
        for (size_t i = 0; i < d.residues.entries.size(); ++i) {
            const auto& e = d.residues.entries[i];
            const auto r = static_cast<Eigen::Index>(i);
            rtab(r, 0) = e.rank;
            rtab(r, 1) = e.eigenvalue.real();
            rtab(r, 2) = e.eigenvalue.imag();
            rtab(r, 3) = e.input;
            rtab(r, 4) = e.output;
            rtab(r, 5) = e.residue.real();
            rtab(r, 6) = e.residue.imag();
            rtab(r, 7) = e.magnitude;
        }
        lti::save_matrix_csv(dir + "/residues.csv", rtab);

        const Eigen::VectorXcd eig = d.loop.a.eigenvalues();
        lti::Matrix etab(eig.size(), 2);
        for (Eigen::Index i = 0; i < eig.size(); ++i) {
            etab(i, 0) = eig(i).real();
            etab(i, 1) = eig(i).imag();
        }
        lti::save_matrix_csv(dir + "/eigenvalues.csv", etab);

        json trig;
        trig["rho_over_sigma"] = scenario_.rho_over_sigma;
        trig["certificate_scale"] = d.loop.certificate_scale;
        trig["remote_output"] = d.loop.remote_output;
        trig["rho_per_sigma"] = json::array();
        for (const auto& [sigma, rho] : d.rho) {
            trig["rho_per_sigma"].push_back({{"sigma", sigma}, {"rho", rho}});
        }
        // The closed-loop matrices travel with their checksums so later
        // stages can detect drift.
        trig["loop_checksums"] = {{"loop_A.csv", file_checksum(dir + "/loop_A.csv")},
                                  {"loop_B.csv", file_checksum(dir + "/loop_B.csv")},
                                  {"loop_Ctilde.csv", file_checksum(dir + "/loop_Ctilde.csv")}};
        write_json(dir + "/trigger.json", trig);
    }
    write_manifest(dir, {"plant_scaled_A.csv", "plant_scaled_B.csv", "plant_scaled_C.csv",
                         "plant_scaled_D.csv", "wadc_A.csv", "wadc_B.csv", "wadc_C.csv",
                         "wadc_D.csv", "loop_A.csv", "loop_B.csv", "loop_Ctilde.csv",
                         "residues.csv", "eigenvalues.csv", "trigger.json"});
    design_ = std::move(d);
    return *design_;
}

events::EventSimResult Pipeline::simulate(double sigma, bool continuous) {
    if (!(sigma > 0.0 && sigma < 1.0)) {
        throw SigmaOutOfRange("simulate: sigma must lie in (0,1)");
    }
    const DesignData& d = design();
    const std::string design_dir = stage_dir("design");

    // Guard against drift between the recorded design artifacts and the
    // loop this run is about to use.
    if (fs::exists(design_dir + "/trigger.json")) {
        const json trig = read_json(design_dir + "/trigger.json");
        for (const auto& [file, sum] : trig.at("loop_checksums").items()) {
            if (fs::exists(design_dir + "/" + file) &&
                file_checksum(design_dir + "/" + file) != sum.get<std::string>()) {
                throw ValidationError("simulate: design artifact " + file +
                                      " no longer matches its recorded checksum");
            }
        }
    }

    const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d.loop.order(), d.loop.order());
    events::TriggerConfig cfg = events::compute_trigger_threshold(d.loop, q, sigma);
    if (auto it = d.rho.find(sigma); it != d.rho.end() && it->second != cfg.rho) {
        throw ValidationError("simulate: trigger coefficient drifted from the design record");
    }

    if (scenario_.linear_mode) {
        const Eigen::VectorXd x0 = events::modal_initial_state(d.loop);
        return events::run_event_sim(d.loop, cfg, x0, scenario_.dt, scenario_.t_end, continuous);
    }
    events::NonlinearWadcSetup setup;
    setup.model = &fault_model();
    setup.loop = &d.loop;
    setup.wadc_machine_bus = scenario_.wadc_machine;
    setup.remote_machine_bus = scenario_.remote_machine;
    setup.local_machine_bus = scenario_.local_machine;
    setup.output_limit = scenario_.wadc.output_limit;
    return events::run_event_sim(setup, cfg, scenario_.dt, scenario_.t_end, continuous);
}

void Pipeline::cmd_powerflow() {
    power_flow();
}

void Pipeline::cmd_linearize() {
    plant();
}

void Pipeline::cmd_reduce() {
    reduced();
}

void Pipeline::cmd_design() {
    design();
}

void Pipeline::cmd_simulate(double sigma) {
    if (!(sigma > 0.0 && sigma < 1.0)) {
        throw SigmaOutOfRange("cmd_simulate: sigma must lie in (0,1)");
    }
    const events::EventSimResult result = simulate(sigma);
    const std::string dir = stage_dir("simulate") + "/" + sigma_tag(sigma);
    fs::create_directories(dir);

    std::vector<std::string> files;
    {
        const auto& tr = result.trace;
        const bool linear = tr.kind == lti::TraceKind::LinearAugmented;
        std::string csv = "t_s,y1,y1_held,e_y,threshold,u_p";
        if (linear) {
            csv += ",lyapunov";
        }
        csv += "\n";
        for (int k = 0; k < tr.samples(); ++k) {
            csv += format_double(tr.time(k));
            for (const char* ch : {"y1", "y1_held", "e_y", "threshold", "u_p"}) {
                csv += "," + format_double(tr.channels.at(ch)(k));
            }
            if (linear) {
                csv += "," + format_double(tr.channels.at("lyapunov")(k));
            }
            csv += "\n";
        }
        write_text(dir + "/trace.csv", csv);
        files.push_back("trace.csv");

        std::string ev = "k,t_k_s,y1_held,ey_at_fire,tau_k_s\n";
        for (int k = 0; k < result.log.count(); ++k) {
            ev += std::to_string(k);
            ev += "," + format_double(result.log.instants[k]);
            ev += "," + format_double(result.log.held_values[k]);
            ev += "," + format_double(result.log.error_at_fire[k]);
            ev += ",";
            ev += k > 0 ? format_double(result.log.inter_event_times[k - 1]) : "";
            ev += "\n";
        }
        write_text(dir + "/events.csv", ev);
        files.push_back("events.csv");

        if (!linear) {
            std::string resp = "t_s";
            std::vector<const Eigen::VectorXd*> cols;
            for (const auto& m : fault_model().machines) {
                resp += ",delta_rel_" + std::to_string(m.bus);
                cols.push_back(&tr.channels.at("delta_rel_" + std::to_string(m.bus)));
            }
            resp += "\n";
            for (int k = 0; k < tr.samples(); ++k) {
                resp += format_double(tr.time(k));
                for (const auto* c : cols) {
                    resp += "," + format_double((*c)(k));
                }
                resp += "\n";
            }
            write_text(dir + "/response.csv", resp);
            files.push_back("response.csv");
        }

        json summary;
        summary["sigma"] = sigma;
        summary["rho"] = design().rho.count(sigma) ? design().rho.at(sigma) : 0.0;
        summary["events"] = result.log.count();
        summary["baseline"] = result.log.baseline_samples;
        summary["tau_min_s"] = result.log.min_tau();
        summary["tau_mean_s"] = result.log.mean_tau();
        summary["tau_max_s"] = result.log.max_tau();
        summary["loss_of_synchronism"] = tr.loss_of_synchronism;
        if (linear) {
            const Eigen::MatrixXd q =
                Eigen::MatrixXd::Identity(design().loop.order(), design().loop.order());
            const events::TriggerConfig cfg =
                events::compute_trigger_threshold(design().loop, q, sigma);
            const events::IssReport iss = events::verify_iss(tr, cfg);
            json issj;
            issj["trigger_violations"] = iss.trigger_violations;
            issj["vdot_violations"] = iss.vdot_violations;
            issj["max_violation"] = iss.max_violation;
            write_json(dir + "/iss.json", issj);
            files.push_back("iss.json");
        }
        write_json(dir + "/summary.json", summary);
        files.push_back("summary.json");
    }
    write_manifest(dir, files);
}

std::vector<events::ComparisonRow> Pipeline::sweep() {
    design();  // materialise shared state before fanning out
    if (!scenario_.linear_mode) {
        fault_model();
    }
    const auto& sigmas = scenario_.sigmas;
    std::vector<events::EventSimResult> results(sigmas.size());
    const int workers = sweep_threads(sigmas.size());

    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(sigmas.size());
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (size_t i = next.fetch_add(1); i < sigmas.size(); i = next.fetch_add(1)) {
                try {
                    cmd_simulate(sigmas[i]);
                    results[i] = simulate(sigmas[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    std::vector<events::ComparisonRow> rows;
    for (size_t i = 0; i < sigmas.size(); ++i) {
        events::ComparisonRow row;
        row.sigma = sigmas[i];
        row.baseline = results[i].log.baseline_samples;
        row.et_count = results[i].log.count();
        row.tau_min_s = results[i].log.min_tau();
        row.tau_mean_s = results[i].log.mean_tau();
        row.tau_max_s = results[i].log.max_tau();
        row.damping_metric =
            events::log_decrement(results[i].trace.time, results[i].trace.channels.at("y1"));
        rows.push_back(row);
    }
    return rows;
}

void Pipeline::cmd_sweep() {
    const auto rows = sweep();
    const std::string dir = stage_dir("sweep");
    fs::create_directories(dir);

    std::string csv = "sigma,baseline,et_count,tau_min_s,tau_mean_s,tau_max_s,damping_log_decrement\n";
    json rows_json = json::array();
    for (const auto& row : rows) {
        csv += format_double(row.sigma);
        csv += "," + std::to_string(row.baseline);
        csv += "," + std::to_string(row.et_count);
        csv += "," + format_double(row.tau_min_s);
        csv += "," + format_double(row.tau_mean_s);
        csv += "," + format_double(row.tau_max_s);
        csv += "," + format_double(row.damping_metric);
        csv += "\n";
        rows_json.push_back({{"sigma", row.sigma},
                             {"baseline", row.baseline},
                             {"et_count", row.et_count},
                             {"tau_min_s", row.tau_min_s},
                             {"tau_mean_s", row.tau_mean_s},
                             {"tau_max_s", row.tau_max_s},
                             {"damping_log_decrement", row.damping_metric}});
    }
    write_text(dir + "/comparison.csv", csv);

    json out;
    out["scenario"] = scenario_.name;
    out["mode"] = scenario_.linear_mode ? "linear" : "nonlinear";
    out["rows"] = rows_json;
    {
        // Analytic lower bound on the inter-event time per sigma.
        const DesignData& d = design();
        const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d.loop.order(), d.loop.order());
        json bounds = json::array();
        for (double sigma : scenario_.sigmas) {
            const auto cfg = events::compute_trigger_threshold(d.loop, q, sigma);
            const auto bound = events::inter_event_bound(d.loop, cfg);
            bounds.push_back({{"sigma", sigma},
                              {"tau_min_s", bound.tau_min},
                              {"m1", bound.m1},
                              {"m2", bound.m2},
                              {"m3", bound.m3},
                              {"eta_star", bound.eta_star},
                              {"discriminant_ok", bound.discriminant_ok}});
        }
        out["inter_event_bounds"] = bounds;
    }
    write_json(dir + "/comparison.json", out);
    write_manifest(dir, {"comparison.csv", "comparison.json"});
}

}  // namespace etwadc::scenario
