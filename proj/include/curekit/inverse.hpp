#pragma once

/**
 * Set-valued inverse solver. Rather than a single best-fit pair of heat
 * transfer coefficients, every grid point whose predicted tool trace stays
 * within a tolerance of the measured thermocouple data is retained. The set
 * shrinks as more data arrives.
 */

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "curekit/backend.hpp"
#include "curekit/error.hpp"
#include "curekit/trace.hpp"

namespace curekit {

struct Candidate {
    ThermalStack stack;
    double error = std::numeric_limits<double>::quiet_NaN();  ///< °C, from the last prune
    bool failed = false;                                      ///< backend could not evaluate it
    std::string failure;

    bool operator==(const Candidate& o) const {
        return stack == o.stack && failed == o.failed && failure == o.failure &&
               (error == o.error || (std::isnan(error) && std::isnan(o.error)));
    }
};

/// Plausible boundary conditions for one part; L1 and L2 are known.
struct CandidateSet {
    std::string part_id;
    double L1 = 0.0;
    double L2 = 0.0;
    std::vector<Candidate> candidates;

    std::size_t size() const { return candidates.size(); }
    bool empty() const { return candidates.empty(); }

    std::vector<ThermalStack> stacks() const {
        std::vector<ThermalStack> out;
        out.reserve(candidates.size());
        for (const auto& c : candidates) out.push_back(c.stack);
        return out;
    }

    bool contains(const ThermalStack& s) const {
        return std::any_of(candidates.begin(), candidates.end(), [&](const Candidate& c) { return c.stack == s; });
    }

    bool operator==(const CandidateSet&) const = default;
};

/// Grid of h values h_min, h_min + step, ... below h_max; (20, 100, 5) gives 16 values.
inline std::vector<double> grid_values(double h_min, double h_max, double step) {
    if (!(step > 0.0) || !(h_min < h_max)) throw domain_error("candidate_grid: need h_min < h_max and step > 0");
    std::vector<double> v;
    for (long i = 0;; ++i) {
        const double h = h_min + static_cast<double>(i) * step;
        if (h >= h_max - 1e-9 * step) break;
        v.push_back(h);
    }
    return v;
}

/// Cartesian (h1, h2) grid for a part of known thickness; h1 varies slowest.
inline CandidateSet candidate_grid(double h_min, double h_max, double step, double L1, double L2,
                                   std::string part_id = {}) {
    const auto values = grid_values(h_min, h_max, step);
    CandidateSet set{std::move(part_id), L1, L2, {}};
    set.candidates.reserve(values.size() * values.size());
    for (double h1 : values) {
        for (double h2 : values) {
            ThermalStack s{h1, L1, L2, h2};
            validate(s);
            set.candidates.push_back(Candidate{s, std::numeric_limits<double>::quiet_NaN(), false, {}});
        }
    }
    return set;
}

/// Max |predicted - measured| over the measured samples that fall inside the
/// predicted time span; predictions are interpolated onto measurement times.
inline double trace_error(const TemperatureTrace& predicted, const TemperatureTrace& measured) {
    if (predicted.empty() || measured.empty()) throw domain_error("trace_error: empty trace");
    const double lo = predicted.start() - 1e-9, hi = predicted.end() + 1e-9;
    double err = -1.0;
    for (std::size_t i = 0; i < measured.size(); ++i) {
        const double t = measured.times[i];
        if (t < lo || t > hi) continue;
        const double tc = std::clamp(t, predicted.start(), predicted.end());
        err = std::max(err, std::abs(interpolate(predicted, tc) - measured.values[i]));
    }
    if (err < 0.0) throw domain_error("trace_error: predicted and measured traces do not overlap");
    return err;
}

/// Keeps the candidates whose tool trace matches `measured` within `tolerance` (°C).
/// Candidates the backend fails on are kept and flagged.
inline CandidateSet prune(const CandidateSet& candidates, const TemperatureTrace& measured, const CureCycle& cycle,
                          const SimulationBackend& backend, double tolerance) {
    if (!(tolerance > 0.0)) throw domain_error("prune: tolerance must be positive");
    if (measured.empty()) throw domain_error("prune: measured trace is empty");
    CandidateSet out{candidates.part_id, candidates.L1, candidates.L2, {}};
    if (candidates.empty()) return out;
    const auto stacks = candidates.stacks();
    const auto traces = backend.predict_traces(stacks, cycle, measured.end());
    for (std::size_t i = 0; i < stacks.size(); ++i) {
        Candidate c = candidates.candidates[i];
        if (!traces[i].ok()) {
            c.failed = true;
            c.failure = traces[i].error;
            c.error = std::numeric_limits<double>::quiet_NaN();
            out.candidates.push_back(std::move(c));
            continue;
        }
        c.failed = false;
        c.failure.clear();
        c.error = trace_error(traces[i].value->tool_bottom, measured);
        if (c.error <= tolerance) out.candidates.push_back(std::move(c));
    }
    return out;
}

/// Per-time min/max envelope of the candidates' part-center traces.
struct SolutionBand {
    std::vector<double> times;  ///< min
    std::vector<double> lower;  ///< °C
    std::vector<double> upper;

    bool contains(const TemperatureTrace& trace, double slack = 1e-9) const {
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] < trace.start() - 1e-9 || times[i] > trace.end() + 1e-9) continue;
            const double v = interpolate(trace, std::clamp(times[i], trace.start(), trace.end()));
            if (v < lower[i] - slack || v > upper[i] + slack) return false;
        }
        return true;
    }

    bool operator==(const SolutionBand&) const = default;
};

inline SolutionBand predict_solution_band(const CandidateSet& candidates, const CureCycle& cycle,
                                          const SimulationBackend& backend) {
    if (candidates.empty()) throw domain_error("predict_solution_band: empty candidate set");
    const auto stacks = candidates.stacks();
    const auto traces = backend.predict_traces(stacks, cycle);
    SolutionBand band;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (!traces[i].ok()) {
            throw std::runtime_error("predict_solution_band: candidate " + std::to_string(i) + ": " + traces[i].error);
        }
        const auto& tr = traces[i].value->part_center;
        if (i == 0) {
            band.times = tr.times;
            band.lower = tr.values;
            band.upper = tr.values;
            continue;
        }
        if (tr.times != band.times) throw std::runtime_error("predict_solution_band: backend returned mismatched grids");
        for (std::size_t k = 0; k < tr.size(); ++k) {
            band.lower[k] = std::min(band.lower[k], tr.values[k]);
            band.upper[k] = std::max(band.upper[k], tr.values[k]);
        }
    }
    return band;
}

// --- text formats ----------------------------------------------------------------

/// Candidate snapshot: a comment line with the part geometry, then (h1, h2, error_C) rows.
inline void write_candidates(std::ostream& out, const CandidateSet& set) {
    out << std::setprecision(17);
    out << "# part_id=" << (set.part_id.empty() ? "-" : set.part_id) << " L1_m=" << set.L1 << " L2_m=" << set.L2
        << '\n';
    out << "h1 h2 error_C\n";
    for (const auto& c : set.candidates) {
        out << c.stack.h1 << ' ' << c.stack.h2 << ' ';
        if (c.failed) {
            out << "failed";
        } else if (std::isnan(c.error)) {
            out << "nan";
        } else {
            out << c.error;
        }
        out << '\n';
    }
}

inline CandidateSet read_candidates(std::istream& in) {
    CandidateSet set;
    std::string line;
    bool have_geometry = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string tok;
            while (ls >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
                if (key == "part_id") set.part_id = val == "-" ? "" : val;
                if (key == "L1_m") set.L1 = std::stod(val);
                if (key == "L2_m") set.L2 = std::stod(val);
            }
            have_geometry = set.L1 > 0.0 && set.L2 > 0.0;
            continue;
        }
        if (line.rfind("h1", 0) == 0) continue;
        std::istringstream ls(line);
        Candidate c;
        std::string err;
        if (!(ls >> c.stack.h1 >> c.stack.h2 >> err)) throw parse_error("candidates", "malformed row '" + line + "'");
        c.stack.L1 = set.L1;
        c.stack.L2 = set.L2;
        if (err == "failed") {
            c.failed = true;
        } else if (err != "nan") {
            c.error = std::stod(err);
        }
        set.candidates.push_back(c);
    }
    if (!have_geometry) throw parse_error("candidates", "missing '# part_id=... L1_m=... L2_m=...' header");
    return set;
}

/// Columnar envelope file: time_min lower_C upper_C [truth_C].
inline void write_band(std::ostream& out, const SolutionBand& band, const TemperatureTrace* truth = nullptr) {
    out << "time_min lower_C upper_C" << (truth ? " truth_C" : "") << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < band.times.size(); ++i) {
        out << band.times[i] << ' ' << band.lower[i] << ' ' << band.upper[i];
        if (truth) out << ' ' << interpolate(*truth, std::clamp(band.times[i], truth->start(), truth->end()));
        out << '\n';
    }
}

/// Reads write_band output; a truth column, if present, goes to `truth`.
inline SolutionBand read_band(std::istream& in, TemperatureTrace* truth = nullptr) {
    SolutionBand band;
    std::string line;
    bool header = false, has_truth = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line.rfind("time_min", 0) != 0) throw parse_error("band", "missing 'time_min lower_C upper_C' header");
            has_truth = line.find("truth_C") != std::string::npos;
            header = true;
            continue;
        }
        std::istringstream ls(line);
        double t, lo, hi, tr = 0.0;
        if (!(ls >> t >> lo >> hi) || (has_truth && !(ls >> tr))) {
            throw parse_error("band", "malformed row '" + line + "'");
        }
        band.times.push_back(t);
        band.lower.push_back(lo);
        band.upper.push_back(hi);
        if (has_truth && truth) {
            truth->times.push_back(t);
            truth->values.push_back(tr);
        }
    }
    if (!header) throw parse_error("band", "empty band file");
    return band;
}

}  // namespace curekit
