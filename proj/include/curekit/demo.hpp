#pragma once

/**
 * Virtual autoclave: hidden true boundary conditions produce thermocouple
 * streams, each checkpoint prunes the candidate sets, and after the last
 * checkpoint the remainder of the cycle is re-planned and checked against
 * the hidden truth.
 */

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curekit/backend.hpp"
#include "curekit/cycle.hpp"
#include "curekit/fe.hpp"
#include "curekit/inverse.hpp"
#include "curekit/optimizer.hpp"
#include "curekit/random.hpp"

namespace curekit {

/// A pipeline stage failed; `stage()` names it.
class stage_error : public std::runtime_error {
public:
    stage_error(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

inline nlohmann::json to_json(const ThermalStack& s) {
    return {{"h1_W_per_m2K", s.h1}, {"L1_m", s.L1}, {"L2_m", s.L2}, {"h2_W_per_m2K", s.h2}};
}

inline ThermalStack stack_from_json(const nlohmann::json& j, const std::string& path = "stack") {
    using detail::number_at;
    ThermalStack s{number_at(j, "h1_W_per_m2K", path), number_at(j, "L1_m", path), number_at(j, "L2_m", path),
                   number_at(j, "h2_W_per_m2K", path)};
    try {
        validate(s);
    } catch (const std::exception& e) {
        throw validation_error(path + ": " + e.what());
    }
    return s;
}

struct NoiseModel {
    double amplitude = 0.0;  ///< °C, uniform in [-amplitude, amplitude]
    std::uint64_t seed = 1;
};

/// FE tool-bottom trace of `truth` up to `horizon_min`, sampled every
/// `interval_min`, plus seeded uniform noise. Sample k's noise depends only
/// on (seed, k), so a longer stream extends a shorter one.
inline TemperatureTrace synthesize_tc_stream(const ThermalStack& truth, const CureCycle& cycle,
                                             const MaterialPair& materials, const NoiseModel& noise,
                                             double horizon_min, double interval_min = 0.5) {
    if (!(horizon_min > 0.0) || horizon_min > cycle.total_time() + 1e-9) {
        throw domain_error("synthesize_tc_stream: horizon must lie in (0, total_time]");
    }
    if (!(noise.amplitude >= 0.0)) throw domain_error("synthesize_tc_stream: noise amplitude must be non-negative");
    SolverConfig cfg;
    cfg.output_interval = interval_min * 60.0;
    cfg.end_time = horizon_min;
    auto trace = simulate(truth, cycle, materials, cfg).tool_bottom;
    if (noise.amplitude > 0.0) {
        Rng rng(noise.seed);
        for (double& v : trace.values) v += rng.uniform(-noise.amplitude, noise.amplitude);
    }
    return trace;
}

struct ScenarioPart {
    std::string id;
    ThermalStack truth;  ///< the pipeline sees only L1 and L2
};

struct CandidateGridSpec {
    double h_min = 20.0;
    double h_max = 100.0;
    double step = 5.0;
};

struct Scenario {
    std::string name = "scenario";
    std::vector<ScenarioPart> parts;
    CureCycle initial_cycle = one_hold(2.0, 180.0, 120.0, 3.5, 20.0);
    ProcessSpecs specs;
    std::vector<double> checkpoints{15.0, 30.0};  ///< min
    NoiseModel noise;
    double tc_interval_min = 0.5;
    double tolerance = 1.0;  ///< °C
    CandidateGridSpec candidate_grid;
    /// Axes of the re-planned remainder; rate1 is taken from the running cycle.
    CycleGrid cycle_grid = CycleGrid::standard();
};

/// The three-part virtual autoclave run.
inline Scenario three_part_scenario() {
    Scenario s;
    s.name = "three-part virtual autoclave";
    s.parts = {{"part1", {60.0, 0.010, 0.010, 40.0}},
               {"part2", {40.0, 0.015, 0.010, 40.0}},
               {"part3", {80.0, 0.020, 0.010, 40.0}}};
    return s;
}

inline void validate(const Scenario& s) {
    if (s.parts.empty()) throw validation_error("scenario: needs at least one part");
    if (s.checkpoints.empty()) throw validation_error("scenario: needs at least one checkpoint");
    for (std::size_t i = 0; i < s.checkpoints.size(); ++i) {
        if (!(s.checkpoints[i] > 0.0) || (i > 0 && !(s.checkpoints[i] > s.checkpoints[i - 1]))) {
            throw validation_error("scenario: checkpoints must be positive and increasing");
        }
        if (s.checkpoints[i] > s.initial_cycle.total_time()) {
            throw validation_error("scenario: checkpoint beyond the end of the initial cycle");
        }
    }
    const auto& g = s.candidate_grid;
    for (const auto& p : s.parts) {
        validate(p.truth);
        for (double h : {p.truth.h1, p.truth.h2}) {
            if (h < g.h_min - 1e-9 || h > g.h_max + 1e-9) {
                throw validation_error("scenario: part '" + p.id + "' true h lies outside the candidate grid");
            }
        }
    }
    validate(s.specs);
    if (!(s.tolerance > 0.0) || !(s.tc_interval_min > 0.0)) {
        throw validation_error("scenario: tolerance and TC interval must be positive");
    }
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : s.parts) {
        auto j = to_json(p.truth);
        j["id"] = p.id;
        parts.push_back(j);
    }
    return {{"name", s.name},
            {"parts", parts},
            {"initial_cycle", to_json(s.initial_cycle)},
            {"specs", to_json(s.specs)},
            {"checkpoints_min", s.checkpoints},
            {"noise", {{"amplitude_C", s.noise.amplitude}, {"seed", s.noise.seed}}},
            {"tc_interval_min", s.tc_interval_min},
            {"tolerance_C", s.tolerance},
            {"candidate_grid",
             {{"h_min", s.candidate_grid.h_min}, {"h_max", s.candidate_grid.h_max}, {"step", s.candidate_grid.step}}},
            {"cycle_grid", to_json(s.cycle_grid)}};
}

/// Missing optional keys keep the three-part defaults.
inline Scenario scenario_from_json(const nlohmann::json& j) {
    using detail::number_at;
    Scenario s;
    if (!j.is_object()) throw parse_error("scenario", "expected an object");
    s.name = j.value("name", s.name);
    if (!j.contains("parts") || !j.at("parts").is_array()) throw parse_error("parts", "expected an array");
    for (std::size_t i = 0; i < j.at("parts").size(); ++i) {
        const auto& pj = j.at("parts")[i];
        const std::string path = "parts[" + std::to_string(i) + "]";
        s.parts.push_back({pj.value("id", "part" + std::to_string(i + 1)), stack_from_json(pj, path)});
    }
    if (j.contains("initial_cycle")) s.initial_cycle = cycle_from_json(j.at("initial_cycle"), "initial_cycle");
    if (j.contains("specs")) s.specs = specs_from_json(j.at("specs"));
    if (j.contains("checkpoints_min")) s.checkpoints = j.at("checkpoints_min").get<std::vector<double>>();
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        s.noise.amplitude = n.value("amplitude_C", 0.0);
        s.noise.seed = n.value("seed", std::uint64_t{1});
    }
    s.tc_interval_min = j.value("tc_interval_min", s.tc_interval_min);
    s.tolerance = j.value("tolerance_C", s.tolerance);
    if (j.contains("candidate_grid")) {
        const auto& g = j.at("candidate_grid");
        s.candidate_grid = {number_at(g, "h_min", "candidate_grid"), number_at(g, "h_max", "candidate_grid"),
                            number_at(g, "step", "candidate_grid")};
    }
    if (j.contains("cycle_grid")) s.cycle_grid = cycle_grid_from_json(j.at("cycle_grid"), s.cycle_grid);
    validate(s);
    return s;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open scenario '" + path + "'");
    try {
        return scenario_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(path, e.what());
    }
}

/// Re-plan grid for a run interrupted at `at_min`: the first ramp already in
/// progress keeps its rate, and only first-hold temperatures above the
/// current air temperature remain reachable without undoing elapsed history.
inline CycleGrid replan_grid(const CycleGrid& axes, const CureCycle& running, double at_min) {
    if (running.segments().empty() || !std::holds_alternative<Ramp>(running.segments().front())) {
        throw domain_error("replan: the running cycle must start with a ramp");
    }
    const auto& first = std::get<Ramp>(running.segments().front());
    const double ramp_end = (first.target - running.start_temperature()) / first.rate;
    if (at_min >= ramp_end) throw domain_error("replan: the first ramp has already finished");
    const double air = running.air_temperature(at_min);
    CycleGrid g = axes;
    g.rate1 = first.rate;
    g.start = running.start_temperature();
    g.T1_values.clear();
    for (double T1 : axes.T1_values) {
        if (T1 > air + 1e-9) g.T1_values.push_back(T1);
    }
    if (g.T1_values.empty()) throw domain_error("replan: no first-hold temperature is above the current air temperature");
    return g;
}

struct PartCheckpoint {
    std::string part_id;
    std::size_t candidates = 0;
    bool truth_retained = false;
};

struct CheckpointRecord {
    double time_min = 0.0;
    std::vector<PartCheckpoint> parts;
    std::vector<CandidateSet> sets;   ///< retained candidates per part
    std::vector<SolutionBand> bands;  ///< part-center envelope under the initial cycle
};

struct PartOutcome {
    std::string part_id;
    ThermalStack truth;
    CycleMetrics original;
    bool original_pass = false;
    std::vector<std::string> original_violations;
    std::optional<CycleMetrics> optimized;
    bool optimized_pass = false;
    std::vector<std::string> optimized_violations;
};

struct RunReport {
    std::string scenario;
    std::string backend;
    double noise_amplitude = 0.0;
    std::uint64_t seed = 0;
    std::string material_hash;
    CureCycle original_cycle;
    double replan_at_min = 0.0;
    std::size_t initial_candidates = 0;  ///< per part
    std::vector<CheckpointRecord> checkpoints;
    OptimizationResult optimization;
    std::vector<SolutionBand> optimized_bands;          ///< per part, under the chosen cycle
    std::vector<TemperatureTrace> measured;             ///< TC streams up to the last checkpoint
    std::vector<PartOutcome> parts;
    std::vector<std::string> warnings;
    std::map<std::string, double> timing_s;  ///< not part of the deterministic report

    bool feasible() const { return optimization.found(); }
};

struct RunOptions {
    /// Ground-truth traces written next to envelopes come from this solver config.
    SolverConfig truth_solver;
};

namespace detail {

class StageClock {
public:
    explicit StageClock(std::map<std::string, double>& sink) : sink_(sink) {}

    template <class Fn>
    auto run(const std::string& stage, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                fn();
                sink_[stage] += seconds_since(t0);
            } else {
                auto r = fn();
                sink_[stage] += seconds_since(t0);
                return r;
            }
        } catch (const stage_error&) {
            throw;
        } catch (const std::exception& e) {
            throw stage_error(stage, e.what());
        }
    }

private:
    static double seconds_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    std::map<std::string, double>& sink_;
};

inline std::vector<std::string> violation_names(const SpecCheck& c) {
    std::vector<std::string> out;
    for (auto v : c.violations) out.emplace_back(to_string(v));
    return out;
}

inline std::string checkpoint_label(double t) {
    std::ostringstream os;
    os << t;
    return os.str();
}

}  // namespace detail

inline RunReport run_scenario(const Scenario& scenario, const SimulationBackend& backend,
                              const MaterialPair& materials, const RunOptions& options = {}) {
    validate(scenario);
    RunReport rep;
    rep.scenario = scenario.name;
    rep.backend = backend.name();
    rep.noise_amplitude = scenario.noise.amplitude;
    rep.seed = scenario.noise.seed;
    rep.material_hash = material_hash(materials);
    rep.original_cycle = scenario.initial_cycle;
    rep.replan_at_min = scenario.checkpoints.back();
    detail::StageClock clock(rep.timing_s);
    const auto& cycle = scenario.initial_cycle;
    const std::size_t n_parts = scenario.parts.size();

    // Hidden truth under the initial cycle.
    std::vector<SimulationResult> truth_original(n_parts);
    clock.run("truth_original", [&] {
        parallel_for(n_parts, [&](std::size_t p) {
            truth_original[p] = simulate(scenario.parts[p].truth, cycle, materials, options.truth_solver);
        });
    });

    // One TC stream per part up to the last checkpoint; earlier checkpoints see a prefix.
    rep.measured.resize(n_parts);
    clock.run("tc_streams", [&] {
        for (std::size_t p = 0; p < n_parts; ++p) {
            const NoiseModel noise{scenario.noise.amplitude, detail::mix_seed(scenario.noise.seed, p)};
            rep.measured[p] = synthesize_tc_stream(scenario.parts[p].truth, cycle, materials, noise,
                                                   scenario.checkpoints.back(), scenario.tc_interval_min);
        }
    });

    std::vector<CandidateSet> sets;
    for (const auto& part : scenario.parts) {
        const auto& g = scenario.candidate_grid;
        sets.push_back(candidate_grid(g.h_min, g.h_max, g.step, part.truth.L1, part.truth.L2, part.id));
    }
    rep.initial_candidates = sets.front().size();

    for (double t : scenario.checkpoints) {
        const std::string label = detail::checkpoint_label(t);
        CheckpointRecord cp;
        cp.time_min = t;
        clock.run("prune_" + label, [&] {
            for (std::size_t p = 0; p < n_parts; ++p) {
                sets[p] = prune(sets[p], truncate(rep.measured[p], t), cycle, backend, scenario.tolerance);
                cp.parts.push_back({scenario.parts[p].id, sets[p].size(), sets[p].contains(scenario.parts[p].truth)});
                for (const auto& c : sets[p].candidates) {
                    if (c.failed) rep.warnings.push_back(scenario.parts[p].id + ": candidate failed: " + c.failure);
                }
            }
        });
        cp.sets = sets;
        clock.run("envelope_" + label, [&] {
            for (std::size_t p = 0; p < n_parts; ++p) {
                if (sets[p].empty()) {
                    cp.bands.emplace_back();
                    rep.warnings.push_back(scenario.parts[p].id + ": no candidate left at " + label + " min");
                } else {
                    cp.bands.push_back(predict_solution_band(sets[p], cycle, backend));
                }
            }
        });
        rep.checkpoints.push_back(std::move(cp));
    }

    for (std::size_t p = 0; p < n_parts; ++p) {
        const auto check = check_specs(truth_original[p].metrics(), scenario.specs);
        PartOutcome o;
        o.part_id = scenario.parts[p].id;
        o.truth = scenario.parts[p].truth;
        o.original = truth_original[p].metrics();
        o.original_pass = check.pass;
        o.original_violations = detail::violation_names(check);
        rep.parts.push_back(std::move(o));
    }

    const bool any_empty = std::any_of(sets.begin(), sets.end(), [](const CandidateSet& s) { return s.empty(); });
    if (any_empty) {
        rep.warnings.push_back("a candidate set is empty; no cycle can be certified");
        rep.optimization.cycles_enumerated = 0;
        return rep;
    }

    const CycleGrid grid = clock.run("replan_grid", [&] { return replan_grid(scenario.cycle_grid, cycle, rep.replan_at_min); });
    rep.optimization = clock.run("optimize", [&] { return optimize(sets, grid, scenario.specs, backend); });
    if (!rep.optimization.found()) return rep;
    const CureCycle chosen = *rep.optimization.chosen;

    clock.run("envelope_optimized", [&] {
        for (const auto& s : sets) rep.optimized_bands.push_back(predict_solution_band(s, chosen, backend));
    });
    clock.run("verify", [&] {
        std::vector<SimulationResult> truth(n_parts);
        parallel_for(n_parts, [&](std::size_t p) {
            truth[p] = simulate(scenario.parts[p].truth, chosen, materials, options.truth_solver);
        });
        for (std::size_t p = 0; p < n_parts; ++p) {
            const auto check = check_specs(truth[p].metrics(), scenario.specs);
            rep.parts[p].optimized = truth[p].metrics();
            rep.parts[p].optimized_pass = check.pass;
            rep.parts[p].optimized_violations = detail::violation_names(check);
        }
    });
    return rep;
}

// --- report files ----------------------------------------------------------------------

namespace detail {

inline nlohmann::json metrics_json(const CycleMetrics& m, bool pass, const std::vector<std::string>& violations) {
    return {{"max_part_temperature_C", m.max_part_temperature},
            {"rate_at_final_hold_C_per_min", m.part_rate_at_final_hold},
            {"pass", pass},
            {"violations", violations}};
}

inline std::string envelope_name(const std::string& part, const std::string& when) {
    return "envelope_" + part + "_" + when + ".dat";
}

inline std::string candidates_name(const std::string& part, const std::string& when) {
    return "candidates_" + part + "_" + when + ".txt";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace detail

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json j;
    j["scenario"] = r.scenario;
    j["backend"] = r.backend;
    j["noise_amplitude_C"] = r.noise_amplitude;
    j["seed"] = r.seed;
    j["material_hash"] = r.material_hash;
    j["original_cycle"] = to_json(r.original_cycle);
    j["original_total_time_min"] = r.original_cycle.total_time();
    j["replan_at_min"] = r.replan_at_min;
    j["initial_candidates_per_part"] = r.initial_candidates;
    j["checkpoints"] = nlohmann::json::array();
    for (const auto& cp : r.checkpoints) {
        nlohmann::json c{{"time_min", cp.time_min}, {"parts", nlohmann::json::array()}};
        std::size_t total = 0;
        for (const auto& p : cp.parts) {
            c["parts"].push_back({{"part_id", p.part_id}, {"candidates", p.candidates}, {"truth_retained", p.truth_retained}});
            total += p.candidates;
        }
        c["total_candidates"] = total;
        j["checkpoints"].push_back(c);
    }
    j["optimization"] = to_json(r.optimization);
    j["optimization"]["feasible_cycles"] = nlohmann::json::array();
    for (const auto& c : r.optimization.feasible_cycles) j["optimization"]["feasible_cycles"].push_back(to_json(c));
    j["parts"] = nlohmann::json::array();
    for (const auto& p : r.parts) {
        nlohmann::json pj{{"part_id", p.part_id},
                          {"truth", to_json(p.truth)},
                          {"original", detail::metrics_json(p.original, p.original_pass, p.original_violations)}};
        pj["optimized"] = p.optimized ? detail::metrics_json(*p.optimized, p.optimized_pass, p.optimized_violations)
                                      : nlohmann::json(nullptr);
        j["parts"].push_back(pj);
    }
    j["warnings"] = r.warnings;
    return j;
}

inline std::string summary_table(const RunReport& r) {
    std::ostringstream os;
    os << std::fixed;
    os << "scenario: " << r.scenario << "  backend: " << r.backend << "  noise: " << std::setprecision(2)
       << r.noise_amplitude << " C  seed: " << r.seed << "\n\n";
    os << "candidates per part (grid " << r.initial_candidates << ")\n";
    os << std::left << std::setw(12) << "checkpoint";
    for (const auto& p : r.parts) os << std::setw(12) << p.part_id;
    os << "total\n";
    for (const auto& cp : r.checkpoints) {
        std::size_t total = 0;
        os << std::setw(12) << (detail::checkpoint_label(cp.time_min) + " min");
        for (const auto& p : cp.parts) {
            os << std::setw(12) << (std::to_string(p.candidates) + (p.truth_retained ? "" : " (!)"));
            total += p.candidates;
        }
        os << total << '\n';
    }
    os << '\n';
    const auto& opt = r.optimization;
    os << "cycles enumerated: " << opt.cycles_enumerated << "  evaluations: " << opt.evaluations_performed
       << "  feasible: " << opt.feasible_cycles.size() << '\n';
    os << std::setprecision(1) << "original total time:  " << r.original_cycle.total_time() << " min\n";
    if (opt.chosen) {
        const auto p = opt.chosen->two_hold_params();
        os << "optimized total time: " << opt.chosen->total_time() << " min";
        if (p) {
            os << std::setprecision(1) << "  (T1 " << p->T1 << " C, t1 " << p->t1 << " min, rate2 " << p->rate2
               << " C/min)";
        }
        os << '\n';
    } else {
        os << "optimized total time: no feasible cycle\n";
    }
    os << '\n'
       << std::setw(10) << "part" << std::setw(14) << "Tmax orig" << std::setw(14) << "rate orig" << std::setw(8)
       << "pass" << std::setw(14) << "Tmax opt" << std::setw(14) << "rate opt" << "pass\n";
    for (const auto& p : r.parts) {
        os << std::setw(10) << p.part_id << std::setprecision(2) << std::setw(14) << p.original.max_part_temperature
           << std::setw(14) << p.original.part_rate_at_final_hold << std::setw(8) << (p.original_pass ? "yes" : "no");
        if (p.optimized) {
            os << std::setw(14) << p.optimized->max_part_temperature << std::setw(14)
               << p.optimized->part_rate_at_final_hold << (p.optimized_pass ? "yes" : "no");
        } else {
            os << std::setw(14) << "-" << std::setw(14) << "-" << "-";
        }
        os << '\n';
    }
    if (!opt.worst_case.empty()) {
        os << "\nworst case over retained candidates under the optimized cycle\n";
        for (const auto& w : opt.worst_case) {
            os << std::setw(10) << w.part_id << "Tmax " << std::setprecision(2) << w.max_part_temperature << "  rate "
               << w.min_rate << " .. " << w.max_rate << '\n';
        }
    }
    return os.str();
}

/// Truth traces for the envelope files come from direct FE on the hidden stacks.
inline void emit_report(const RunReport& r, const std::string& out_dir, const MaterialPair& materials,
                        const SolverConfig& truth_solver = {}) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());

    detail::write_text(dir / "report.json", to_json(r).dump(2) + "\n");
    nlohmann::json chosen = r.optimization.chosen ? to_json(*r.optimization.chosen) : nlohmann::json(nullptr);
    detail::write_text(dir / "chosen_cycle.json",
                       nlohmann::json{{"feasible", r.feasible()}, {"cycle", chosen}}.dump(2) + "\n");
    detail::write_text(dir / "summary.txt", summary_table(r));

    for (std::size_t p = 0; p < r.parts.size(); ++p) {
        const auto& id = r.parts[p].part_id;
        const auto truth_orig = simulate(r.parts[p].truth, r.original_cycle, materials, truth_solver).part_center;
        {
            std::ostringstream os;
            write_trace(os, r.measured[p]);
            detail::write_text(dir / ("tc_" + id + ".dat"), os.str());
        }
        for (const auto& cp : r.checkpoints) {
            const auto label = detail::checkpoint_label(cp.time_min) + "min";
            std::ostringstream cs;
            write_candidates(cs, cp.sets[p]);
            detail::write_text(dir / detail::candidates_name(id, label), cs.str());
            if (!cp.bands[p].times.empty()) {
                std::ostringstream bs;
                write_band(bs, cp.bands[p], &truth_orig);
                detail::write_text(dir / detail::envelope_name(id, label), bs.str());
            }
        }
        if (r.optimization.chosen && p < r.optimized_bands.size()) {
            const auto truth_opt = simulate(r.parts[p].truth, *r.optimization.chosen, materials, truth_solver).part_center;
            std::ostringstream bs;
            write_band(bs, r.optimized_bands[p], &truth_opt);
            detail::write_text(dir / detail::envelope_name(id, "optimized"), bs.str());
        }
    }
    nlohmann::json timing = r.timing_s;
    detail::write_text(dir / "timing.json", timing.dump(2) + "\n");
}

/// Reconstructs a report from emit_report output (timing excluded).
inline RunReport load_report(const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    const auto j = nlohmann::json::parse(detail::read_text(dir / "report.json"));
    RunReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.backend = j.at("backend").get<std::string>();
    r.noise_amplitude = j.at("noise_amplitude_C").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.material_hash = j.at("material_hash").get<std::string>();
    r.original_cycle = cycle_from_json(j.at("original_cycle"));
    r.replan_at_min = j.at("replan_at_min").get<double>();
    r.initial_candidates = j.at("initial_candidates_per_part").get<std::size_t>();
    for (const auto& pj : j.at("parts")) {
        PartOutcome o;
        o.part_id = pj.at("part_id").get<std::string>();
        o.truth = stack_from_json(pj.at("truth"));
        const auto& orig = pj.at("original");
        o.original = {orig.at("max_part_temperature_C").get<double>(), orig.at("rate_at_final_hold_C_per_min").get<double>()};
        o.original_pass = orig.at("pass").get<bool>();
        o.original_violations = orig.at("violations").get<std::vector<std::string>>();
        if (!pj.at("optimized").is_null()) {
            const auto& opt = pj.at("optimized");
            o.optimized = CycleMetrics{opt.at("max_part_temperature_C").get<double>(),
                                       opt.at("rate_at_final_hold_C_per_min").get<double>()};
            o.optimized_pass = opt.at("pass").get<bool>();
            o.optimized_violations = opt.at("violations").get<std::vector<std::string>>();
        }
        r.parts.push_back(std::move(o));
    }
    for (const auto& cj : j.at("checkpoints")) {
        CheckpointRecord cp;
        cp.time_min = cj.at("time_min").get<double>();
        const auto label = detail::checkpoint_label(cp.time_min) + "min";
        for (const auto& pj : cj.at("parts")) {
            PartCheckpoint pc{pj.at("part_id").get<std::string>(), pj.at("candidates").get<std::size_t>(),
                              pj.at("truth_retained").get<bool>()};
            std::istringstream cs(detail::read_text(dir / detail::candidates_name(pc.part_id, label)));
            cp.sets.push_back(read_candidates(cs));
            const auto band_path = dir / detail::envelope_name(pc.part_id, label);
            if (fs::exists(band_path)) {
                std::istringstream bs(detail::read_text(band_path));
                cp.bands.push_back(read_band(bs));
            } else {
                cp.bands.emplace_back();
            }
            cp.parts.push_back(std::move(pc));
        }
        r.checkpoints.push_back(std::move(cp));
    }
    const auto& oj = j.at("optimization");
    r.optimization.cycles_enumerated = oj.at("cycles_enumerated").get<std::size_t>();
    r.optimization.evaluations_performed = oj.at("evaluations_performed").get<std::size_t>();
    if (!oj.at("chosen_cycle").is_null()) r.optimization.chosen = cycle_from_json(oj.at("chosen_cycle"));
    for (const auto& w : oj.at("worst_case")) r.optimization.worst_case.push_back(worst_case_from_json(w));
    for (const auto& c : oj.at("feasible_cycles")) r.optimization.feasible_cycles.push_back(cycle_from_json(c));
    for (const auto& p : r.parts) {
        std::ifstream tc(dir / ("tc_" + p.part_id + ".dat"));
        if (tc) r.measured.push_back(read_trace(tc));
        const auto band_path = dir / detail::envelope_name(p.part_id, "optimized");
        if (fs::exists(band_path)) {
            std::istringstream bs(detail::read_text(band_path));
            r.optimized_bands.push_back(read_band(bs));
        }
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

}  // namespace curekit
