#pragma once

/**
 * Cure-cycle optimization by progressive elimination over a grid of
 * two-hold cycles. Every retained boundary-condition candidate of every part
 * is visited in turn; cycles it rejects are dropped before the next candidate
 * is evaluated. The survivors are ordered by total time and the head wins.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "curekit/backend.hpp"
#include "curekit/cycle.hpp"
#include "curekit/inverse.hpp"

namespace curekit {

/// Evenly spaced axis; `include_stop` selects [start, stop] or [start, stop).
struct Axis {
    double start = 0.0;
    double stop = 0.0;
    double step = 1.0;
    bool include_stop = false;

    std::vector<double> values() const {
        if (!(step > 0.0)) throw domain_error("axis: step must be positive");
        std::vector<double> v;
        const double tol = 1e-9 * step;
        for (long i = 0;; ++i) {
            const double x = start + static_cast<double>(i) * step;
            if (include_stop ? x > stop + tol : x >= stop - tol) break;
            v.push_back(x);
        }
        if (v.empty() && start <= stop) v.push_back(start);
        return v;
    }
};

inline Axis single_value(double v) { return Axis{v, v, 1.0, true}; }

struct CycleGrid {
    std::vector<double> T1_values;
    std::vector<double> t1_values;
    std::vector<double> rate2_values;
    double rate1 = 2.0;
    double T2 = 180.0;
    double t2 = 120.0;
    double cooldown_rate = 3.5;
    double start = 20.0;

    std::size_t size() const { return T1_values.size() * t1_values.size() * rate2_values.size(); }

    /// Half-open axes T1 in [110, 180) by 5, t1 in [0, 120) by 5, rate2 in [1, 8) by 0.2:
    /// 14 x 24 x 35 = 11,760 cycles.
    static CycleGrid standard(double rate1 = 2.0) {
        CycleGrid g;
        g.T1_values = Axis{110.0, 180.0, 5.0, false}.values();
        g.t1_values = Axis{0.0, 120.0, 5.0, false}.values();
        g.rate2_values = Axis{1.0, 8.0, 0.2, false}.values();
        g.rate1 = rate1;
        return g;
    }
};

inline void validate(const CycleGrid& g) {
    if (g.T1_values.empty() || g.t1_values.empty() || g.rate2_values.empty()) {
        throw domain_error("cycle grid: every axis needs at least one value");
    }
}

/// Cartesian product, T1 slowest and rate2 fastest.
inline std::vector<CureCycle> enumerate_cycles(const CycleGrid& grid) {
    validate(grid);
    std::vector<CureCycle> out;
    out.reserve(grid.size());
    for (double T1 : grid.T1_values) {
        for (double t1 : grid.t1_values) {
            for (double rate2 : grid.rate2_values) {
                out.push_back(two_hold(grid.rate1, rate2, T1, t1, grid.T2, grid.t2, grid.cooldown_rate, grid.start));
            }
        }
    }
    return out;
}

namespace detail {
inline long long time_key(const CureCycle& c) { return std::llround(c.total_time() * 1e6); }
}  // namespace detail

/// Total order: total time, then lower T1, lower rate2, lower t1.
inline bool cycle_precedes(const CureCycle& a, const CureCycle& b) {
    const auto ta = detail::time_key(a), tb = detail::time_key(b);
    if (ta != tb) return ta < tb;
    const auto pa = a.two_hold_params(), pb = b.two_hold_params();
    if (!pa || !pb) return static_cast<bool>(pa) && !pb;
    if (pa->T1 != pb->T1) return pa->T1 < pb->T1;
    if (pa->rate2 != pb->rate2) return pa->rate2 < pb->rate2;
    return pa->t1 < pb->t1;
}

inline CureCycle tie_break(std::span<const CureCycle> feasible) {
    if (feasible.empty()) throw domain_error("tie_break: empty cycle list");
    return *std::min_element(feasible.begin(), feasible.end(), cycle_precedes);
}

struct PartWorstCase {
    std::string part_id;
    std::size_t candidates = 0;
    double max_part_temperature = -std::numeric_limits<double>::infinity();
    double min_rate = std::numeric_limits<double>::infinity();
    double max_rate = -std::numeric_limits<double>::infinity();

    bool operator==(const PartWorstCase&) const = default;
};

struct OptimizationResult {
    std::vector<CureCycle> feasible_cycles;  ///< sorted by cycle_precedes
    std::optional<CureCycle> chosen;
    std::size_t cycles_enumerated = 0;
    std::size_t evaluations_performed = 0;
    std::vector<PartWorstCase> worst_case;

    bool found() const { return chosen.has_value(); }
};

/// Worst-case metrics of each part's candidates under one cycle.
/// Axes are either explicit arrays or {start, stop, step, include_stop}; missing keys keep `defaults`.
inline CycleGrid cycle_grid_from_json(const nlohmann::json& j, CycleGrid defaults = CycleGrid::standard(),
                                      const std::string& path = "cycle_grid") {
    auto axis = [&](const char* key, std::vector<double>& out) {
        if (!j.contains(key)) return;
        const auto& a = j.at(key);
        const std::string p = path + "." + key;
        if (a.is_array()) {
            out = a.get<std::vector<double>>();
        } else {
            out = Axis{detail::number_at(a, "start", p), detail::number_at(a, "stop", p),
                       detail::number_at(a, "step", p), a.value("include_stop", false)}
                      .values();
        }
    };
    if (!j.is_object()) throw parse_error(path, "expected an object");
    axis("T1_C", defaults.T1_values);
    axis("t1_min", defaults.t1_values);
    axis("rate2_C_per_min", defaults.rate2_values);
    defaults.rate1 = j.value("rate1_C_per_min", defaults.rate1);
    defaults.T2 = j.value("T2_C", defaults.T2);
    defaults.t2 = j.value("t2_min", defaults.t2);
    defaults.cooldown_rate = j.value("cooldown_C_per_min", defaults.cooldown_rate);
    defaults.start = j.value("start_C", defaults.start);
    validate(defaults);
    return defaults;
}

inline nlohmann::json to_json(const CycleGrid& g) {
    return {{"T1_C", g.T1_values},        {"t1_min", g.t1_values}, {"rate2_C_per_min", g.rate2_values},
            {"rate1_C_per_min", g.rate1}, {"T2_C", g.T2},          {"t2_min", g.t2},
            {"cooldown_C_per_min", g.cooldown_rate}, {"start_C", g.start}};
}

inline std::vector<PartWorstCase> worst_case_metrics(std::span<const CandidateSet> parts, const CureCycle& cycle,
                                                     const SimulationBackend& backend) {
    std::vector<PartWorstCase> out;
    for (const auto& part : parts) {
        PartWorstCase w;
        w.part_id = part.part_id;
        w.candidates = part.size();
        const auto stacks = part.stacks();
        const auto metrics = backend.predict_metrics(stacks, cycle);
        for (std::size_t i = 0; i < metrics.size(); ++i) {
            if (!metrics[i].ok()) throw std::runtime_error("worst_case_metrics: " + metrics[i].error);
            w.max_part_temperature = std::max(w.max_part_temperature, metrics[i].value->max_part_temperature);
            w.min_rate = std::min(w.min_rate, metrics[i].value->part_rate_at_final_hold);
            w.max_rate = std::max(w.max_rate, metrics[i].value->part_rate_at_final_hold);
        }
        out.push_back(w);
    }
    return out;
}

/// Progressive elimination; an empty `feasible_cycles` is the "no feasible cycle" outcome.
inline OptimizationResult optimize(std::span<const CandidateSet> parts, std::span<const CureCycle> cycles,
                                   const ProcessSpecs& specs, const SimulationBackend& backend) {
    if (cycles.empty()) throw domain_error("optimize: empty cycle grid");
    for (const auto& p : parts) {
        if (p.empty()) throw domain_error("optimize: candidate set '" + p.part_id + "' is empty");
    }
    OptimizationResult r;
    r.cycles_enumerated = cycles.size();
    std::vector<CureCycle> survivors(cycles.begin(), cycles.end());
    for (const auto& part : parts) {
        for (const auto& cand : part.candidates) {
            if (survivors.empty()) break;
            const ThermalStack stack[1] = {cand.stack};
            const auto m = backend.feasibility(stack, survivors, specs);
            r.evaluations_performed += survivors.size();
            std::vector<CureCycle> kept;
            kept.reserve(survivors.size());
            for (std::size_t j = 0; j < survivors.size(); ++j) {
                if (m.at(0, j)) kept.push_back(std::move(survivors[j]));
            }
            survivors = std::move(kept);
        }
    }
    std::sort(survivors.begin(), survivors.end(), cycle_precedes);
    r.feasible_cycles = std::move(survivors);
    if (!r.feasible_cycles.empty()) {
        r.chosen = tie_break(r.feasible_cycles);
        r.worst_case = worst_case_metrics(parts, *r.chosen, backend);
    }
    return r;
}

inline OptimizationResult optimize(std::span<const CandidateSet> parts, const CycleGrid& grid,
                                   const ProcessSpecs& specs, const SimulationBackend& backend) {
    const auto cycles = enumerate_cycles(grid);
    return optimize(parts, cycles, specs, backend);
}

inline nlohmann::json to_json(const PartWorstCase& w) {
    return {{"part_id", w.part_id},
            {"candidates", w.candidates},
            {"max_part_temperature_C", w.max_part_temperature},
            {"min_rate_C_per_min", w.min_rate},
            {"max_rate_C_per_min", w.max_rate}};
}

inline PartWorstCase worst_case_from_json(const nlohmann::json& j) {
    return PartWorstCase{j.at("part_id").get<std::string>(), j.at("candidates").get<std::size_t>(),
                         j.at("max_part_temperature_C").get<double>(), j.at("min_rate_C_per_min").get<double>(),
                         j.at("max_rate_C_per_min").get<double>()};
}

/// Report with the chosen cycle, per-part worst case and counts.
inline nlohmann::json to_json(const OptimizationResult& r) {
    nlohmann::json j;
    j["feasible"] = r.found();
    j["cycles_enumerated"] = r.cycles_enumerated;
    j["evaluations_performed"] = r.evaluations_performed;
    j["feasible_cycle_count"] = r.feasible_cycles.size();
    if (r.chosen) {
        j["chosen_cycle"] = to_json(*r.chosen);
        j["chosen_total_time_min"] = r.chosen->total_time();
    } else {
        j["chosen_cycle"] = nullptr;
    }
    j["worst_case"] = nlohmann::json::array();
    for (const auto& w : r.worst_case) j["worst_case"].push_back(to_json(w));
    return j;
}

}  // namespace curekit
