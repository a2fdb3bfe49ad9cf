#include <CLI11.hpp>

#include <cstdio>

#include "etwadc/pipeline.hpp"

using namespace etwadc;

namespace {

int run_stage(const std::string& stage, const std::string& scenario_file,
              const std::string& out_override, bool recompute, double sigma, bool sigma_given) {
    scenario::Scenario sc;
    try {
        sc = scenario::load_scenario(scenario_file);
        if (!out_override.empty()) {
            sc.output_dir = out_override;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "etwadc %s: scenario error: %s\n", stage.c_str(), e.what());
        return 2;
    }

    try {
        scenario::Pipeline pipeline(sc, recompute);
        if (stage == "powerflow") {
            pipeline.cmd_powerflow();
            std::printf("powerflow: %d iterations, mismatch %.3e pu\n",
                        pipeline.power_flow().iterations, pipeline.power_flow().mismatch);
        } else if (stage == "linearize") {
            pipeline.cmd_linearize();
            std::printf("linearize: plant order %d\n", pipeline.plant().order());
        } else if (stage == "reduce") {
            pipeline.cmd_reduce();
            std::printf("reduce: order %d -> %d\n", pipeline.plant().order(),
                        pipeline.reduced().order());
        } else if (stage == "design") {
            pipeline.cmd_design();
            const auto& d = pipeline.design();
            std::printf("design: loop order %d, certificate scale %.6g\n", d.loop.order(),
                        d.loop.certificate_scale);
            for (const auto& [s, rho] : d.rho) {
                std::printf("  sigma %.6g -> rho %.6g\n", s, rho);
            }
        } else if (stage == "simulate") {
            if (!sigma_given) {
                std::fprintf(stderr, "etwadc simulate: --sigma is required\n");
                return 2;
            }
            pipeline.cmd_simulate(sigma);
            std::printf("simulate: sigma %.6g done\n", sigma);
        } else if (stage == "sweep") {
            pipeline.cmd_sweep();
            std::printf("sweep: %zu sigma values done\n", sc.sigmas.size());
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "etwadc %s: %s\n", stage.c_str(), e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-triggered wide-area damping control toolkit"};
    app.require_subcommand(1);

    std::string scenario_file;
    std::string out_dir;
    bool recompute = false;
    double sigma = 0.0;
    bool sigma_given = false;

    std::string chosen;
    for (const char* name : {"powerflow", "linearize", "reduce", "design", "simulate", "sweep"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--scenario", scenario_file, "scenario configuration file")->required();
        sub->add_option("--out", out_dir, "override the scenario output directory");
        sub->add_flag("--recompute", recompute, "ignore cached stage artifacts");
        if (std::string(name) == "simulate") {
            sub->add_option("--sigma", sigma, "trigger tuning parameter in (0,1)")
                ->check([&sigma_given](const std::string&) {
                    sigma_given = true;
                    return std::string();
                });
        }
        sub->callback([&chosen, name]() { chosen = name; });
    }

    CLI11_PARSE(app, argc, argv);
    return run_stage(chosen, scenario_file, out_dir, recompute, sigma, sigma_given);
}
