#include <catch_amalgamated.hpp>

#include <random>
#include <set>
#include <sstream>

#include "curekit/backend.hpp"
#include "curekit/inverse.hpp"

using namespace curekit;
using Catch::Matchers::WithinAbs;

namespace {

// Fails on one chosen stack, otherwise delegates to the FE solver.
class FlakyBackend final : public SimulationBackend {
public:
    FlakyBackend(const FeBackend& inner, ThermalStack bad) : inner_(inner), bad_(bad) {}
    std::string name() const override { return "flaky"; }
    std::vector<Outcome<StackTraces>> predict_traces(std::span<const ThermalStack> stacks, const CureCycle& cycle,
                                                     double horizon) const override {
        auto out = inner_.predict_traces(stacks, cycle, horizon);
        for (std::size_t i = 0; i < stacks.size(); ++i) {
            if (stacks[i] == bad_) {
                out[i].value.reset();
                out[i].error = "injected failure";
            }
        }
        return out;
    }
    std::vector<Outcome<CycleMetrics>> predict_metrics(std::span<const ThermalStack> stacks,
                                                       const CureCycle& cycle) const override {
        return inner_.predict_metrics(stacks, cycle);
    }
    FeasibilityMatrix feasibility(std::span<const ThermalStack> stacks, std::span<const CureCycle> cycles,
                                  const ProcessSpecs& specs) const override {
        return inner_.feasibility(stacks, cycles, specs);
    }

private:
    const FeBackend& inner_;
    ThermalStack bad_;
};

const CureCycle original = one_hold(2, 180, 120, 3.5, 20);

TemperatureTrace measured_tool(const ThermalStack& truth, const CureCycle& cycle, double horizon_min,
                               double interval_s = 30.0) {
    SolverConfig cfg;
    cfg.output_interval = interval_s;
    cfg.end_time = horizon_min;
    return simulate(truth, cycle, reference_thermoset(), cfg).tool_bottom;
}

std::set<std::pair<double, double>> pairs(const CandidateSet& s) {
    std::set<std::pair<double, double>> out;
    for (const auto& c : s.candidates) out.insert({c.stack.h1, c.stack.h2});
    return out;
}

bool subset(const CandidateSet& a, const CandidateSet& b) {
    const auto pa = pairs(a), pb = pairs(b);
    return std::includes(pb.begin(), pb.end(), pa.begin(), pa.end());
}

}  // namespace

TEST_CASE("standard candidate grid has 256 stacks") {
    const auto set = candidate_grid(20, 100, 5, 0.02, 0.01, "p");
    REQUIRE(set.size() == 256);
    CHECK(set.candidates.front().stack == ThermalStack{20, 0.02, 0.01, 20});
    CHECK(set.candidates.back().stack == ThermalStack{95, 0.02, 0.01, 95});
    CHECK(set.candidates[1].stack == ThermalStack{20, 0.02, 0.01, 25});
    for (const auto& c : set.candidates) {
        CHECK(c.stack.L1 == 0.02);
        CHECK(c.stack.L2 == 0.01);
    }
    CHECK(pairs(set).size() == 256);
}

TEST_CASE("single-cell grid") {
    CHECK(candidate_grid(20, 20 + 1e-6, 100, 0.01, 0.01).size() == 1);
}

TEST_CASE("reversed grid bounds are rejected") {
    CHECK_THROWS_AS(candidate_grid(100, 20, 5, 0.01, 0.01), domain_error);
    CHECK_THROWS_AS(candidate_grid(20, 100, 0, 0.01, 0.01), domain_error);
}

TEST_CASE("trace error is the max absolute difference") {
    const TemperatureTrace a{{0, 1, 2, 3}, {20, 22, 25, 30}};
    CHECK(trace_error(a, a) == 0.0);
    TemperatureTrace shifted = a;
    for (auto& v : shifted.values) v += 0.5;
    CHECK_THAT(trace_error(a, shifted), WithinAbs(0.5, 1e-12));
    // Predictions are interpolated onto measurement times.
    const TemperatureTrace half{{0.5, 1.5, 2.5}, {21, 23.5, 27.5}};
    CHECK_THAT(trace_error(a, half), WithinAbs(0.0, 1e-12));
    // Samples outside the predicted span do not count.
    const TemperatureTrace longer{{0, 1, 2, 3, 4}, {20, 22, 25, 30, 99}};
    CHECK(trace_error(a, longer) == 0.0);
    const TemperatureTrace disjoint{{10, 11}, {0, 0}};
    CHECK_THROWS_AS(trace_error(a, disjoint), domain_error);
    CHECK_THROWS_AS(trace_error(a, TemperatureTrace{}), domain_error);
}

TEST_CASE("noise-free data retains the generating stack") {
    const FeBackend fe(reference_thermoset());
    const auto set = candidate_grid(20, 100, 5, 0.015, 0.01, "p");
    const ThermalStack truth{45, 0.015, 0.01, 70};
    const auto measured = measured_tool(truth, original, 15.0, 10.0);
    const auto kept = prune(set, measured, original, fe, 1.0);
    CHECK(kept.contains(truth));
    CHECK(kept.size() < set.size());
    for (const auto& c : kept.candidates) {
        CHECK(c.error <= 1.0);
        CHECK_FALSE(c.failed);
    }
    CHECK(subset(kept, set));
}

TEST_CASE("failed candidates are flagged and kept") {
    const FeBackend fe(reference_thermoset());
    const auto set = candidate_grid(20, 100, 5, 0.015, 0.01, "p");
    const ThermalStack bad{95, 0.015, 0.01, 20};
    const FlakyBackend flaky(fe, bad);
    const auto measured = measured_tool({45, 0.015, 0.01, 70}, original, 15.0);
    const auto kept = prune(set, measured, original, flaky, 1.0);
    REQUIRE(kept.contains(bad));
    const auto it = std::find_if(kept.candidates.begin(), kept.candidates.end(),
                                 [&](const Candidate& c) { return c.stack == bad; });
    CHECK(it->failed);
    CHECK(it->failure == "injected failure");
    CHECK(std::isnan(it->error));
}

TEST_CASE("prune arguments are checked") {
    const FeBackend fe(reference_thermoset());
    const auto set = candidate_grid(20, 100, 40, 0.015, 0.01);
    CHECK_THROWS_AS(prune(set, TemperatureTrace{}, original, fe, 1.0), domain_error);
    CHECK_THROWS_AS(prune(set, TemperatureTrace{{0}, {20}}, original, fe, 0.0), domain_error);
}

TEST_CASE("randomized hidden truths are retained and windows shrink the set") {
    const FeBackend fe(reference_thermoset());
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<int> h(0, 15);
    std::uniform_real_distribution<double> L1(0.002, 0.02), L2(0.008, 0.02);
    int retained = 0, nested = 0;
    const int trials = 100;
    for (int k = 0; k < trials; ++k) {
        const ThermalStack truth{20.0 + 5.0 * h(gen), L1(gen), L2(gen), 20.0 + 5.0 * h(gen)};
        const auto set = candidate_grid(20, 100, 5, truth.L1, truth.L2);
        const auto full = measured_tool(truth, original, 30.0);
        const auto w15 = prune(set, truncate(full, 15.0), original, fe, 1.0);
        const auto w30 = prune(w15, full, original, fe, 1.0);
        const auto w30_direct = prune(set, full, original, fe, 1.0);
        retained += w15.contains(truth) && w30.contains(truth) ? 1 : 0;
        nested += subset(w30_direct, w15) && pairs(w30) == pairs(w30_direct) ? 1 : 0;
    }
    CHECK(retained == trials);
    CHECK(nested == trials);
}

TEST_CASE("a smaller tolerance never keeps more candidates") {
    const FeBackend fe(reference_thermoset());
    const auto set = candidate_grid(20, 100, 5, 0.01, 0.012);
    const auto measured = measured_tool({70, 0.01, 0.012, 35}, original, 30.0, 10.0);
    const auto loose = prune(set, measured, original, fe, 2.0);
    const auto mid = prune(set, measured, original, fe, 1.0);
    const auto tight = prune(set, measured, original, fe, 0.5);
    CHECK(subset(tight, mid));
    CHECK(subset(mid, loose));
}

TEST_CASE("a low-error ridge exists for the baseline stack") {
    const FeBackend fe(reference_thermoset());
    const auto cycle = two_hold(2, 2, 120, 60, 180, 120, 3.5, 20);
    const ThermalStack truth{60, 0.02, 0.015, 40};
    SolverConfig cfg;
    const auto measured = simulate(truth, cycle, reference_thermoset(), cfg).tool_bottom;
    std::vector<ThermalStack> stacks;
    for (int h1 = 20; h1 <= 100; ++h1) {
        for (int h2 = 30; h2 <= 50; ++h2) stacks.push_back({double(h1), 0.02, 0.015, double(h2)});
    }
    const auto traces = fe.predict_traces(stacks, cycle);
    std::size_t close = 0;
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < stacks.size(); ++i) {
        REQUIRE(traces[i].ok());
        if (trace_error(traces[i].value->tool_bottom, measured) < 1.0) {
            ++close;
            lo = std::min(lo, stacks[i].h1);
            hi = std::max(hi, stacks[i].h1);
        }
    }
    INFO(close << " stacks within 1 C, h1 from " << lo << " to " << hi);
    CHECK(close >= 10);
    CHECK(hi - lo >= 25.0);
}

TEST_CASE("solution band bounds every candidate") {
    const FeBackend fe(reference_thermoset());
    auto set = candidate_grid(30, 60, 10, 0.015, 0.01);
    const auto band = predict_solution_band(set, original, fe);
    const auto traces = fe.predict_traces(set.stacks(), original);
    for (const auto& t : traces) CHECK(band.contains(t.value->part_center));
    for (std::size_t i = 0; i < band.times.size(); ++i) CHECK(band.lower[i] <= band.upper[i]);

    CandidateSet one{"p", 0.015, 0.01, {set.candidates[5]}};
    const auto single = predict_solution_band(one, original, fe);
    const auto direct = fe.predict_traces(one.stacks(), original)[0].value->part_center;
    CHECK(single.lower == direct.values);
    CHECK(single.upper == direct.values);
    CHECK(single.times == direct.times);
    CHECK_THROWS_AS(predict_solution_band(CandidateSet{}, original, fe), domain_error);
}

TEST_CASE("retained truth lies inside the band") {
    const FeBackend fe(reference_thermoset());
    const ThermalStack truth{40, 0.015, 0.01, 40};
    const auto kept = prune(candidate_grid(20, 100, 5, truth.L1, truth.L2), measured_tool(truth, original, 30.0),
                            original, fe, 1.0);
    REQUIRE(kept.contains(truth));
    const auto band = predict_solution_band(kept, original, fe);
    CHECK(band.contains(simulate(truth, original, reference_thermoset()).part_center));
}

TEST_CASE("candidate snapshots and bands round-trip as text") {
    const FeBackend fe(reference_thermoset());
    auto set = prune(candidate_grid(20, 100, 20, 0.015, 0.01, "part-b"),
                     measured_tool({60, 0.015, 0.01, 40}, original, 15.0), original, fe, 5.0);
    REQUIRE_FALSE(set.empty());
    std::stringstream ss;
    write_candidates(ss, set);
    const auto back = read_candidates(ss);
    CHECK(back == set);

    const auto band = predict_solution_band(set, original, fe);
    const auto truth = simulate({60, 0.015, 0.01, 40}, original, reference_thermoset()).part_center;
    std::stringstream bs;
    write_band(bs, band, &truth);
    TemperatureTrace truth_back;
    CHECK(read_band(bs, &truth_back) == band);
    CHECK(truth_back == truth);

    std::stringstream bad("h1 h2 error_C\n1 2 3\n");
    CHECK_THROWS_AS(read_candidates(bad), parse_error);
}

TEST_CASE("measured trace files are read with or without a header") {
    std::stringstream in("# probe tc1\ntime_min temperature_C\n0 20\n0.5 20.4\n1.0,21.0\n");
    const auto t = read_trace(in);
    CHECK(t.times == std::vector<double>{0, 0.5, 1.0});
    CHECK(t.values == std::vector<double>{20, 20.4, 21.0});
    std::stringstream unordered("0 20\n1 21\n0.5 22\n");
    CHECK_THROWS(read_trace(unordered));
}
