// curekit command-line driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "curekit/curekit.hpp"

namespace {

using namespace curekit;

constexpr int exit_ok = 0;
constexpr int exit_error = 1;
constexpr int exit_infeasible = 2;

MaterialPair material_or_default(const std::string& path) {
    return path.empty() ? reference_thermoset() : load_material_file(path);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(path, e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << j.dump(2) << '\n';
}

struct BackendArgs {
    std::string kind = "fe";
    std::string models = "models";
    unsigned threads = default_parallelism();
};

void add_backend_options(CLI::App* cmd, BackendArgs& b) {
    cmd->add_option("--backend", b.kind, "fe or surrogate")->check(CLI::IsMember({"fe", "surrogate"}));
    cmd->add_option("--models", b.models, "directory holding regressor.bin and classifier.bin");
    cmd->add_option("--threads", b.threads, "worker threads")->check(CLI::PositiveNumber);
}

std::unique_ptr<SimulationBackend> make_backend(const BackendArgs& b, const MaterialPair& materials) {
    if (b.kind == "fe") return std::make_unique<FeBackend>(materials, SolverConfig{}, b.threads);
    const std::filesystem::path dir(b.models);
    auto reg = load_regressor((dir / "regressor.bin").string());
    reg.set_threads(b.threads);
    if (reg.metadata().value("material_hash", "") != material_hash(materials)) {
        std::cerr << "warning: surrogate was trained on a different material\n";
    }
    return std::make_unique<SurrogateBackend>(std::move(reg), load_classifier((dir / "classifier.bin").string()));
}

void report_surrogate_warnings(const SimulationBackend& backend) {
    if (const auto* s = dynamic_cast<const SurrogateBackend*>(&backend)) {
        for (const auto& w : s->warnings()) std::cerr << "warning: " << w << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cure-cycle simulation, boundary-condition inversion and cycle optimization"};
    app.require_subcommand(1);

    // simulate
    std::string sim_material, sim_cycle, sim_out;
    double sim_h1 = 0, sim_L1 = 0, sim_L2 = 0, sim_h2 = 0;
    SolverConfig sim_config;
    auto* simulate_cmd = app.add_subcommand("simulate", "run the FE solver for one stack and cycle");
    simulate_cmd->add_option("--material", sim_material, "material JSON (default: built-in reference)");
    simulate_cmd->add_option("--cycle", sim_cycle, "cycle JSON")->required();
    simulate_cmd->add_option("--h1", sim_h1, "W/(m^2 K) above the part")->required();
    simulate_cmd->add_option("--L1", sim_L1, "part thickness, m")->required();
    simulate_cmd->add_option("--L2", sim_L2, "tool thickness, m")->required();
    simulate_cmd->add_option("--h2", sim_h2, "W/(m^2 K) below the tool")->required();
    simulate_cmd->add_option("--dt", sim_config.dt, "time step, s");
    simulate_cmd->add_option("--elements", sim_config.elements_per_layer, "elements per layer");
    simulate_cmd->add_option("--output-interval", sim_config.output_interval, "sampling interval, s");
    simulate_cmd->add_option("--out", sim_out, "columnar result file");

    // datagen
    GenerateOptions gen;
    std::string gen_out, gen_material;
    bool gen_lhs = false;
    auto* datagen_cmd = app.add_subcommand("datagen", "generate an FE training dataset");
    datagen_cmd->add_option("--n", gen.n, "number of simulations")->required();
    datagen_cmd->add_option("--seed", gen.seed, "sampling seed")->required();
    datagen_cmd->add_option("--out", gen_out, "dataset file")->required();
    datagen_cmd->add_option("--material", gen_material, "material JSON (default: built-in reference)");
    datagen_cmd->add_option("--threads", gen.threads, "worker threads")->check(CLI::PositiveNumber);
    datagen_cmd->add_flag("--lhs", gen_lhs, "Latin-hypercube sampling instead of uniform");

    // train
    std::string train_dataset, train_material, train_what = "both", train_out = "models";
    TrainConfig reg_config, clf_config;
    clf_config.error_bound = 0.05;
    std::string reg_baseline = "coarse_fe";
    auto* train_cmd = app.add_subcommand("train", "train the trace regressor and/or feasibility classifier");
    train_cmd->add_option("--dataset", train_dataset, "dataset file")->required();
    train_cmd->add_option("--material", train_material, "material JSON (default: built-in reference)");
    train_cmd->add_option("--model", train_what, "regressor, classifier or both")
        ->check(CLI::IsMember({"regressor", "classifier", "both"}));
    train_cmd->add_option("--out", train_out, "output directory");
    train_cmd->add_option("--seed", reg_config.seed, "training seed");
    train_cmd->add_option("--epochs", reg_config.epochs, "regressor epochs");
    train_cmd->add_option("--hidden", reg_config.hidden, "regressor hidden widths");
    train_cmd->add_option("--baseline", reg_baseline, "regressor baseline")->check(CLI::IsMember({"coarse_fe", "lumped", "none"}));
    train_cmd->add_option("--classifier-epochs", clf_config.epochs, "classifier epochs");
    train_cmd->add_option("--classifier-hidden", clf_config.hidden, "classifier hidden widths");

    // invert
    std::string inv_material, inv_measured, inv_cycle, inv_prior, inv_out, inv_id;
    double inv_L1 = 0, inv_L2 = 0, inv_tol = 1.0, inv_hmin = 20, inv_hmax = 100, inv_step = 5;
    BackendArgs inv_backend;
    auto* invert_cmd = app.add_subcommand("invert", "prune boundary-condition candidates against a TC trace");
    invert_cmd->add_option("--measured", inv_measured, "measured tool-bottom trace (time_min temperature_C)")->required();
    invert_cmd->add_option("--cycle", inv_cycle, "cycle JSON the part was run under")->required();
    invert_cmd->add_option("--out", inv_out, "retained candidates file")->required();
    invert_cmd->add_option("--candidates", inv_prior, "previous candidate file to refine");
    invert_cmd->add_option("--L1", inv_L1, "part thickness, m (without --candidates)");
    invert_cmd->add_option("--L2", inv_L2, "tool thickness, m (without --candidates)");
    invert_cmd->add_option("--part-id", inv_id, "label stored with the candidates");
    invert_cmd->add_option("--h-min", inv_hmin, "grid lower bound");
    invert_cmd->add_option("--h-max", inv_hmax, "grid upper bound (exclusive)");
    invert_cmd->add_option("--h-step", inv_step, "grid step");
    invert_cmd->add_option("--tolerance", inv_tol, "max trace error, C");
    invert_cmd->add_option("--material", inv_material, "material JSON (default: built-in reference)");
    add_backend_options(invert_cmd, inv_backend);

    // optimize
    std::vector<std::string> opt_candidates;
    std::string opt_material, opt_specs, opt_out, opt_grid;
    double opt_rate1 = 2.0;
    BackendArgs opt_backend;
    auto* optimize_cmd = app.add_subcommand("optimize", "find the shortest two-hold cycle feasible for every candidate");
    optimize_cmd->add_option("--candidates", opt_candidates, "candidate files, one per part")->required();
    optimize_cmd->add_option("--out", opt_out, "result JSON")->required();
    optimize_cmd->add_option("--specs", opt_specs, "process specs JSON (default: 185 C, rate in (1, 3))");
    optimize_cmd->add_option("--grid", opt_grid, "cycle grid JSON (T1_C, t1_min, rate2_C_per_min axes)");
    optimize_cmd->add_option("--rate1", opt_rate1, "first ramp rate, C/min (a grid file may override it)");
    optimize_cmd->add_option("--material", opt_material, "material JSON (default: built-in reference)");
    add_backend_options(optimize_cmd, opt_backend);

    // demo
    std::string demo_scenario, demo_out, demo_material;
    double demo_noise = -1.0;
    std::uint64_t demo_seed = 0;
    BackendArgs demo_backend;
    auto* demo_cmd = app.add_subcommand("demo", "run the virtual-autoclave scenario end to end");
    demo_cmd->add_option("--scenario", demo_scenario, "scenario JSON")->required();
    demo_cmd->add_option("--out", demo_out, "report directory")->required();
    auto* noise_opt = demo_cmd->add_option("--noise", demo_noise, "TC noise amplitude, C");
    auto* seed_opt = demo_cmd->add_option("--seed", demo_seed, "noise seed");
    demo_cmd->add_option("--material", demo_material, "material JSON (default: built-in reference)");
    add_backend_options(demo_cmd, demo_backend);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_error;
    }

    try {
        if (*simulate_cmd) {
            const auto mat = material_or_default(sim_material);
            const auto cycle = cycle_from_json(read_json_file(sim_cycle));
            const auto r = simulate(ThermalStack{sim_h1, sim_L1, sim_L2, sim_h2}, cycle, mat, sim_config);
            if (!sim_out.empty()) {
                std::ofstream f(sim_out, std::ios::trunc);
                if (!f) throw std::runtime_error("cannot write '" + sim_out + "'");
                write_result(f, r);
            }
            const auto check = check_specs(r.metrics(), ProcessSpecs{});
            std::cout << nlohmann::json{{"max_part_temperature_C", r.max_part_temperature},
                                        {"rate_at_final_hold_C_per_min", r.part_rate_at_final_hold},
                                        {"total_time_min", cycle.total_time()},
                                        {"pass", check.pass}}
                             .dump(2)
                      << '\n';
            return exit_ok;
        }

        if (*datagen_cmd) {
            gen.sampling = gen_lhs ? Sampling::latin_hypercube : Sampling::uniform;
            const auto mat = material_or_default(gen_material);
            const auto d = generate(gen, mat);
            save_dataset(d, gen_out);
            if (!d.failures.empty()) {
                nlohmann::json manifest = nlohmann::json::array();
                for (const auto& f : d.failures) {
                    manifest.push_back({{"index", f.index}, {"inputs", f.inputs}, {"error", f.error}});
                }
                write_json_file(gen_out + ".failures.json", manifest);
                std::cerr << d.failures.size() << " simulations failed; see " << gen_out << ".failures.json\n";
            }
            std::cout << d.rows() << " rows written to " << gen_out << '\n';
            return exit_ok;
        }

        if (*train_cmd) {
            const auto mat = material_or_default(train_material);
            const auto data = load_dataset(train_dataset, material_hash(mat));
            for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
            std::filesystem::create_directories(train_out);
            const std::filesystem::path dir(train_out);
            bool converged = true;
            if (train_what != "classifier") {
                reg_config.baseline = baseline_from_string(reg_baseline);
                auto [reg, rep] = TraceRegressor::train(data, mat, reg_config);
                save_model(reg, (dir / "regressor.bin").string());
                std::cout << "regressor: held-out max error part " << reg.max_part_error() << " C, tool "
                          << reg.max_tool_error() << " C (" << rep.message << ")\n";
                converged = converged && rep.converged;
            }
            if (train_what != "regressor") {
                clf_config.seed = reg_config.seed;
                auto [clf, rep] = FeasibilityClassifier::train(data, data.provenance.specs, clf_config);
                save_model(clf, (dir / "classifier.bin").string());
                std::cout << "classifier: held-out accuracy " << clf.validation_accuracy() << " (" << rep.message
                          << ")\n";
                converged = converged && rep.converged;
            }
            if (!converged) std::cerr << "warning: a model did not reach its configured error bound\n";
            return exit_ok;
        }

        if (*invert_cmd) {
            const auto mat = material_or_default(inv_material);
            const auto measured = read_trace_file(inv_measured);
            const auto cycle = cycle_from_json(read_json_file(inv_cycle));
            CandidateSet prior;
            if (!inv_prior.empty()) {
                std::ifstream f(inv_prior);
                if (!f) throw std::runtime_error("cannot open '" + inv_prior + "'");
                prior = read_candidates(f);
            } else {
                if (!(inv_L1 > 0 && inv_L2 > 0)) throw domain_error("invert: --L1 and --L2 are required without --candidates");
                prior = candidate_grid(inv_hmin, inv_hmax, inv_step, inv_L1, inv_L2, inv_id);
            }
            const auto backend = make_backend(inv_backend, mat);
            const auto kept = prune(prior, measured, cycle, *backend, inv_tol);
            report_surrogate_warnings(*backend);
            std::ofstream f(inv_out, std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write '" + inv_out + "'");
            write_candidates(f, kept);
            std::cout << prior.size() << " -> " << kept.size() << " candidates\n";
            return exit_ok;
        }

        if (*optimize_cmd) {
            const auto mat = material_or_default(opt_material);
            std::vector<CandidateSet> parts;
            for (const auto& path : opt_candidates) {
                std::ifstream f(path);
                if (!f) throw std::runtime_error("cannot open '" + path + "'");
                parts.push_back(read_candidates(f));
                if (parts.back().part_id.empty()) parts.back().part_id = std::filesystem::path(path).stem().string();
            }
            const ProcessSpecs specs = opt_specs.empty() ? ProcessSpecs{} : specs_from_json(read_json_file(opt_specs));
            CycleGrid grid = CycleGrid::standard(opt_rate1);
            if (!opt_grid.empty()) grid = cycle_grid_from_json(read_json_file(opt_grid), grid);
            const auto backend = make_backend(opt_backend, mat);
            const auto r = optimize(parts, grid, specs, *backend);
            report_surrogate_warnings(*backend);
            write_json_file(opt_out, to_json(r));
            if (!r.found()) {
                std::cerr << "no feasible cycle\n";
                return exit_infeasible;
            }
            std::cout << "chosen cycle: " << to_json(*r.chosen).dump() << " (" << r.chosen->total_time() << " min)\n";
            return exit_ok;
        }

        if (*demo_cmd) {
            const auto mat = material_or_default(demo_material);
            Scenario sc = load_scenario_file(demo_scenario);
            if (*noise_opt) {
                if (!(demo_noise >= 0.0)) throw domain_error("demo: --noise must be non-negative");
                sc.noise.amplitude = demo_noise;
            }
            if (*seed_opt) sc.noise.seed = demo_seed;
            const auto backend = make_backend(demo_backend, mat);
            const auto rep = run_scenario(sc, *backend, mat);
            report_surrogate_warnings(*backend);
            emit_report(rep, demo_out, mat);
            std::cout << summary_table(rep);
            if (!rep.feasible()) {
                std::cerr << "no feasible cycle\n";
                return exit_infeasible;
            }
            return exit_ok;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_error;
    }
    return exit_error;
}
