#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "curekit/demo.hpp"

using namespace curekit;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

const ThermalStack part1{60.0, 0.010, 0.010, 40.0};
const CureCycle original = one_hold(2.0, 180.0, 120.0, 3.5, 20.0);

Scenario small_scenario() {
    Scenario s;
    s.name = "small";
    s.parts = {{"a", part1}, {"b", {40.0, 0.015, 0.010, 40.0}}};
    s.candidate_grid = {20.0, 100.0, 20.0};
    s.cycle_grid.T1_values = {130.0, 140.0, 150.0};
    s.cycle_grid.t1_values = {30.0, 60.0, 90.0};
    s.cycle_grid.rate2_values = {2.0, 4.0};
    return s;
}

const RunReport& small_report() {
    static const RunReport r = [] {
        const FeBackend fe(reference_thermoset());
        return run_scenario(small_scenario(), fe, reference_thermoset());
    }();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// Throws from feasibility() only.
class BrokenOptimizerBackend final : public SimulationBackend {
public:
    explicit BrokenOptimizerBackend(MaterialPair m) : fe_(std::move(m)) {}
    std::string name() const override { return "broken"; }
    using SimulationBackend::predict_traces;
    std::vector<Outcome<StackTraces>> predict_traces(std::span<const ThermalStack> s, const CureCycle& c,
                                                     double h) const override {
        return fe_.predict_traces(s, c, h);
    }
    std::vector<Outcome<CycleMetrics>> predict_metrics(std::span<const ThermalStack> s, const CureCycle& c) const override {
        return fe_.predict_metrics(s, c);
    }
    FeasibilityMatrix feasibility(std::span<const ThermalStack>, std::span<const CureCycle>,
                                  const ProcessSpecs&) const override {
        throw std::runtime_error("feasibility offline");
    }

private:
    FeBackend fe_;
};

}  // namespace

TEST_CASE("noise-free streams equal the FE tool trace") {
    const auto m = reference_thermoset();
    const auto tc = synthesize_tc_stream(part1, original, m, NoiseModel{}, 30.0);
    SolverConfig cfg;
    cfg.end_time = 30.0;
    const auto fe = simulate(part1, original, m, cfg).tool_bottom;
    CHECK(tc.times == fe.times);
    CHECK(tc.values == fe.values);
    CHECK(tc.end() == 30.0);
    CHECK(tc.size() == 61);
}

TEST_CASE("noise stays within its amplitude and is seeded") {
    const auto m = reference_thermoset();
    const auto clean = synthesize_tc_stream(part1, original, m, NoiseModel{}, 60.0);
    const auto noisy = synthesize_tc_stream(part1, original, m, NoiseModel{1.1, 9}, 60.0);
    double worst = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double d = noisy.values[i] - clean.values[i];
        worst = std::max(worst, std::abs(d));
        sum += d;
    }
    CHECK(worst <= 1.1);
    CHECK(worst > 0.5);
    CHECK(std::abs(sum / static_cast<double>(clean.size())) < 0.3);
    CHECK(synthesize_tc_stream(part1, original, m, NoiseModel{1.1, 9}, 60.0).values == noisy.values);
    CHECK(synthesize_tc_stream(part1, original, m, NoiseModel{1.1, 10}, 60.0).values != noisy.values);

    const auto shorter = synthesize_tc_stream(part1, original, m, NoiseModel{1.1, 9}, 15.0);
    CHECK(std::equal(shorter.values.begin(), shorter.values.end(), noisy.values.begin()));
}

TEST_CASE("streams cannot run past the cycle") {
    const auto m = reference_thermoset();
    CHECK_THROWS_AS(synthesize_tc_stream(part1, original, m, NoiseModel{}, original.total_time() + 1.0), domain_error);
    CHECK_THROWS_AS(synthesize_tc_stream(part1, original, m, NoiseModel{}, 0.0), domain_error);
    CHECK_THROWS_AS(synthesize_tc_stream(part1, original, m, NoiseModel{-1.0, 1}, 10.0), domain_error);
}

TEST_CASE("the three-part scenario") {
    const auto s = three_part_scenario();
    REQUIRE(s.parts.size() == 3);
    CHECK(s.parts[0].truth == ThermalStack{60, 0.010, 0.010, 40});
    CHECK(s.parts[1].truth == ThermalStack{40, 0.015, 0.010, 40});
    CHECK(s.parts[2].truth == ThermalStack{80, 0.020, 0.010, 40});
    CHECK(s.checkpoints == std::vector<double>{15, 30});
    CHECK(s.initial_cycle == original);
    CHECK(s.noise.amplitude == 0.0);
    CHECK(s.tolerance == 1.0);
    CHECK(s.cycle_grid.size() == 11760);
    CHECK_NOTHROW(validate(s));
}

TEST_CASE("the bundled scenario file is the three-part scenario") {
    const auto s = load_scenario_file(std::string(CUREKIT_DATA_DIR) + "/three-part-scenario.json");
    CHECK(to_json(s) == to_json(three_part_scenario()));
}

TEST_CASE("scenarios round-trip and report bad input") {
    const auto s = small_scenario();
    CHECK(to_json(scenario_from_json(to_json(s))) == to_json(s));

    auto j = to_json(s);
    j["parts"][1].erase("L1_m");
    try {
        scenario_from_json(j);
        FAIL("expected a parse error");
    } catch (const parse_error& e) {
        CHECK(e.key_path() == "parts[1].L1_m");
    }

    j = to_json(s);
    j["parts"][0]["h1_W_per_m2K"] = 150.0;
    CHECK_THROWS_WITH(scenario_from_json(j), ContainsSubstring("outside the candidate grid"));

    j = to_json(s);
    j["checkpoints_min"] = {30, 15};
    CHECK_THROWS_AS(scenario_from_json(j), validation_error);
    CHECK_THROWS_AS(scenario_from_json(nlohmann::json::object()), parse_error);
}

TEST_CASE("re-planning keeps the running first ramp") {
    const auto g = replan_grid(CycleGrid::standard(5.0), original, 30.0);
    CHECK(g.rate1 == 2.0);
    CHECK(g.start == 20.0);
    CHECK(g.T1_values.front() == 110.0);
    CHECK(g.size() == 11760);
    double worst = 0.0;
    for (const auto& c : enumerate_cycles(g)) {
        for (double t = 0.0; t <= 30.0; t += 0.5) {
            worst = std::max(worst, std::abs(c.air_temperature(t) - original.air_temperature(t)));
        }
    }
    CHECK(worst < 1e-9);

    const auto late = replan_grid(CycleGrid::standard(), original, 50.0);  // air at 120 C
    CHECK(late.T1_values.front() == 125.0);
    CHECK(late.T1_values.size() == 11);
    CHECK_THROWS_AS(replan_grid(CycleGrid::standard(), original, 80.0), domain_error);
}

TEST_CASE("the pipeline retains the truth and verifies its chosen cycle") {
    const auto& r = small_report();
    CHECK(r.backend == "fe");
    CHECK(r.initial_candidates == 16);
    REQUIRE(r.checkpoints.size() == 2);
    for (std::size_t p = 0; p < 2; ++p) {
        CHECK(r.checkpoints[0].parts[p].truth_retained);
        CHECK(r.checkpoints[1].parts[p].truth_retained);
        CHECK(r.checkpoints[1].parts[p].candidates <= r.checkpoints[0].parts[p].candidates);
        CHECK(r.checkpoints[1].parts[p].candidates == r.checkpoints[1].sets[p].size());
    }
    CHECK(r.replan_at_min == 30.0);
    CHECK(r.optimization.cycles_enumerated == 18);
    REQUIRE(r.feasible());
    const auto p = r.optimization.chosen->two_hold_params();
    REQUIRE(p);
    CHECK(p->rate1 == 2.0);
    CHECK(std::find(r.optimization.feasible_cycles.begin(), r.optimization.feasible_cycles.end(),
                    *r.optimization.chosen) != r.optimization.feasible_cycles.end());
    for (const auto& part : r.parts) {
        CHECK_FALSE(part.original_pass);
        REQUIRE(part.optimized);
        CHECK(part.optimized_pass);
        CHECK(part.optimized->max_part_temperature < 185.0);
    }
    // Verified metrics come from direct FE on the hidden stack.
    const auto direct = simulate(part1, *r.optimization.chosen, reference_thermoset()).metrics();
    CHECK(r.parts[0].optimized->max_part_temperature == direct.max_part_temperature);
    for (const char* stage : {"truth_original", "tc_streams", "prune_15", "prune_30", "optimize", "verify"}) {
        CHECK(r.timing_s.count(stage) == 1);
    }
}

TEST_CASE("report files parse back and bracket the truth") {
    const auto dir = fresh_dir("curekit_test_report");
    const auto& r = small_report();
    emit_report(r, dir.string(), reference_thermoset());
    for (const char* f : {"report.json", "chosen_cycle.json", "summary.txt", "timing.json", "tc_a.dat",
                          "candidates_a_15min.txt", "envelope_a_30min.dat", "envelope_b_optimized.dat"}) {
        CHECK(fs::exists(dir / f));
    }
    const auto back = load_report(dir.string());
    CHECK(to_json(back) == to_json(r));
    CHECK(back.checkpoints[1].sets[0].stacks() == r.checkpoints[1].sets[0].stacks());
    REQUIRE(back.optimized_bands.size() == 2);

    std::ifstream f(dir / "envelope_a_30min.dat");
    TemperatureTrace truth;
    const auto band = read_band(f, &truth);
    CHECK(band == r.checkpoints[1].bands[0]);
    CHECK(band.contains(truth));
    CHECK(truth.values == simulate(part1, original, reference_thermoset()).part_center.values);

    const auto summary = slurp(dir / "summary.txt");
    CHECK_THAT(summary, ContainsSubstring("original total time:  245.7 min"));
    CHECK_THAT(summary, ContainsSubstring("optimized total time:"));
    const auto chosen = nlohmann::json::parse(slurp(dir / "chosen_cycle.json"));
    CHECK(chosen.at("feasible") == true);
    CHECK(cycle_from_json(chosen.at("cycle")) == *r.optimization.chosen);
    fs::remove_all(dir);
}

TEST_CASE("runs are reproducible") {
    const FeBackend fe(reference_thermoset());
    auto s = small_scenario();
    s.noise = {0.5, 3};
    const auto a = run_scenario(s, fe, reference_thermoset());
    const auto b = run_scenario(s, fe, reference_thermoset());
    CHECK(to_json(a) == to_json(b));
    CHECK(a.measured[0].values == b.measured[0].values);
    CHECK(a.measured[0].values != a.measured[1].values);
    const auto da = fresh_dir("curekit_test_repro_a"), db = fresh_dir("curekit_test_repro_b");
    emit_report(a, da.string(), reference_thermoset());
    emit_report(b, db.string(), reference_thermoset());
    for (const auto& e : fs::directory_iterator(da)) {
        if (e.path().filename() == "timing.json") continue;
        CHECK(slurp(e.path()) == slurp(db / e.path().filename()));
    }
    fs::remove_all(da);
    fs::remove_all(db);
}

TEST_CASE("no feasible cycle is an outcome, not an error") {
    const FeBackend fe(reference_thermoset());
    auto s = small_scenario();
    s.cycle_grid.T1_values = {175.0};
    s.cycle_grid.t1_values = {0.0};
    s.cycle_grid.rate2_values = {7.8};
    s.specs = ProcessSpecs{181.0, 1.0, 3.0};
    const auto r = run_scenario(s, fe, reference_thermoset());
    CHECK_FALSE(r.feasible());
    CHECK(r.optimization.cycles_enumerated == 1);
    for (const auto& p : r.parts) CHECK_FALSE(p.optimized);
    const auto summary = summary_table(r);
    CHECK_THAT(summary, ContainsSubstring("no feasible cycle"));
    const auto dir = fresh_dir("curekit_test_infeasible");
    emit_report(r, dir.string(), reference_thermoset());
    CHECK(nlohmann::json::parse(slurp(dir / "chosen_cycle.json")).at("cycle").is_null());
    CHECK(to_json(load_report(dir.string())) == to_json(r));
    fs::remove_all(dir);
}

TEST_CASE("a failing stage aborts with its name") {
    const BrokenOptimizerBackend broken(reference_thermoset());
    try {
        run_scenario(small_scenario(), broken, reference_thermoset());
        FAIL("expected a stage error");
    } catch (const stage_error& e) {
        CHECK(e.stage() == "optimize");
        CHECK_THAT(e.what(), ContainsSubstring("feasibility offline"));
    }
}
