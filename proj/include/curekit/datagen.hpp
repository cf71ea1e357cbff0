#pragma once

/**
 * Simulation campaigns for surrogate training: random (stack, cycle) inputs,
 * one FE run per input, and a checksummed columnar dataset file.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "curekit/binary_io.hpp"
#include "curekit/cycle.hpp"
#include "curekit/error.hpp"
#include "curekit/fe.hpp"
#include "curekit/material.hpp"
#include "curekit/parallel.hpp"
#include "curekit/random.hpp"

namespace curekit {

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
    bool operator==(const Range&) const = default;
};

inline constexpr std::size_t input_count = 8;
using InputVector = std::array<double, input_count>;

/// Feature order used by datasets and models.
inline constexpr std::array<const char*, input_count> input_names = {
    "h1_W_per_m2K", "L1_m", "L2_m", "h2_W_per_m2K", "rate1_C_per_min", "rate2_C_per_min", "T1_C", "t1_min"};

struct ParameterRanges {
    Range h1{20.0, 100.0};
    Range L1{0.002, 0.020};
    Range L2{0.008, 0.020};
    Range h2{20.0, 100.0};
    Range rate1{1.0, 8.0};
    Range rate2{1.0, 8.0};
    Range T1{110.0, 180.0};
    Range t1{0.0, 120.0};
    double T0 = 20.0;
    double T2 = 180.0;
    double t2 = 120.0;
    double cooldown_rate = 3.5;

    std::array<Range, input_count> axes() const { return {h1, L1, L2, h2, rate1, rate2, T1, t1}; }

    bool operator==(const ParameterRanges&) const = default;
};

inline void validate(const ParameterRanges& r) {
    const auto axes = r.axes();
    for (std::size_t i = 0; i < input_count; ++i) {
        if (!(axes[i].lo < axes[i].hi)) {
            throw domain_error(std::string("parameter ranges: ") + input_names[i] + " needs lower < upper");
        }
    }
}

struct Sample {
    ThermalStack stack;
    CureCycle cycle;
};

inline InputVector input_vector(const ThermalStack& s, const TwoHoldParams& p) {
    return {s.h1, s.L1, s.L2, s.h2, p.rate1, p.rate2, p.T1, p.t1};
}

inline InputVector input_vector(const ThermalStack& s, const CureCycle& c) {
    const auto p = c.two_hold_params();
    if (!p) throw domain_error("input_vector: only one- and two-hold cycles have a parameter vector");
    return input_vector(s, *p);
}

inline Sample sample_from_inputs(const InputVector& x, const ParameterRanges& r) {
    return Sample{ThermalStack{x[0], x[1], x[2], x[3]},
                  two_hold(x[4], x[5], x[6], x[7], r.T2, r.t2, r.cooldown_rate, r.T0)};
}

enum class Sampling { uniform, latin_hypercube };

inline const char* to_string(Sampling s) { return s == Sampling::uniform ? "uniform" : "latin_hypercube"; }

inline Sampling sampling_from_string(const std::string& s) {
    if (s == "uniform") return Sampling::uniform;
    if (s == "latin_hypercube") return Sampling::latin_hypercube;
    throw parse_error("sampling", "unknown sampling '" + s + "'");
}

/// Raw input vectors; every axis is drawn independently.
inline std::vector<InputVector> sample_input_vectors(std::size_t n, const ParameterRanges& ranges, std::uint64_t seed,
                                                     Sampling sampling = Sampling::uniform) {
    if (n == 0) throw domain_error("sample_inputs: n must be at least 1");
    validate(ranges);
    Rng rng(seed);
    const auto axes = ranges.axes();
    std::vector<InputVector> out(n);
    if (sampling == Sampling::uniform) {
        for (auto& x : out) {
            for (std::size_t a = 0; a < input_count; ++a) x[a] = rng.uniform(axes[a].lo, axes[a].hi);
        }
        return out;
    }
    std::vector<std::size_t> strata(n);
    for (std::size_t a = 0; a < input_count; ++a) {
        std::iota(strata.begin(), strata.end(), std::size_t{0});
        rng.shuffle(strata);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(n);
            out[i][a] = axes[a].lo + axes[a].width() * u;
        }
    }
    return out;
}

inline std::vector<Sample> sample_inputs(std::size_t n, const ParameterRanges& ranges, std::uint64_t seed,
                                         Sampling sampling = Sampling::uniform) {
    const auto xs = sample_input_vectors(n, ranges, seed, sampling);
    std::vector<Sample> out;
    out.reserve(n);
    for (const auto& x : xs) out.push_back(sample_from_inputs(x, ranges));
    return out;
}

struct DatasetProvenance {
    std::uint64_t seed = 0;
    std::size_t requested = 0;
    Sampling sampling = Sampling::uniform;
    ParameterRanges ranges;
    SolverConfig solver;
    ProcessSpecs specs;
    std::string material_hash;
    double horizon_min = 450.0;
    double grid_step_min = 2.0;
};

struct FailedRow {
    std::size_t index = 0;  ///< position in the sample sequence
    InputVector inputs{};
    std::string error;

    bool operator==(const FailedRow&) const = default;
};

struct Dataset {
    DatasetProvenance provenance;
    std::vector<double> time_grid;  ///< min, shared by every trace
    std::vector<InputVector> inputs;
    std::vector<double> part;  ///< rows x grid, row-major, °C
    std::vector<double> tool;
    std::vector<double> max_part_temperature;
    std::vector<double> rate_at_final_hold;
    std::vector<std::uint8_t> pass;
    std::vector<FailedRow> failures;
    std::vector<std::string> warnings;  ///< attached by load_dataset

    std::size_t rows() const { return inputs.size(); }
    std::size_t grid_size() const { return time_grid.size(); }

    std::span<const double> part_trace(std::size_t row) const {
        return std::span(part).subspan(row * grid_size(), grid_size());
    }
    std::span<const double> tool_trace(std::size_t row) const {
        return std::span(tool).subspan(row * grid_size(), grid_size());
    }
    CycleMetrics metrics(std::size_t row) const { return {max_part_temperature[row], rate_at_final_hold[row]}; }
};

inline std::vector<double> dataset_time_grid(double horizon_min, double step_min) {
    if (!(step_min > 0.0) || !(horizon_min > 0.0)) throw domain_error("dataset grid: horizon and step must be positive");
    const auto n = static_cast<std::size_t>(std::floor(horizon_min / step_min + 1e-9)) + 1;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) * step_min;
    return g;
}

/// Checks the structural and labelling invariants; throws validation_error.
inline void validate(const Dataset& d) {
    const std::size_t n = d.rows(), g = d.grid_size();
    if (d.part.size() != n * g || d.tool.size() != n * g || d.max_part_temperature.size() != n ||
        d.rate_at_final_hold.size() != n || d.pass.size() != n) {
        throw validation_error("dataset: column lengths disagree with the row count");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const bool label = check_specs(d.metrics(i), d.provenance.specs).pass;
        if (label != (d.pass[i] != 0)) {
            throw validation_error("dataset: row " + std::to_string(i) + " label disagrees with its metrics");
        }
    }
}

struct GenerateOptions {
    std::size_t n = 20000;
    std::uint64_t seed = 1;
    Sampling sampling = Sampling::uniform;
    ParameterRanges ranges;
    SolverConfig solver;
    ProcessSpecs specs;
    double horizon_min = 450.0;
    double grid_step_min = 2.0;
    unsigned threads = default_parallelism();
};

/// Runs one FE simulation per sampled input. Row order follows sample order;
/// failed samples are listed in `failures` and omitted from the rows.
inline Dataset generate(const GenerateOptions& opt, const MaterialPair& materials) {
    validate(materials);
    validate(opt.specs);
    const auto xs = sample_input_vectors(opt.n, opt.ranges, opt.seed, opt.sampling);

    Dataset d;
    d.provenance = DatasetProvenance{opt.seed,          opt.n,           opt.sampling,
                                     opt.ranges,        opt.solver,      opt.specs,
                                     material_hash(materials), opt.horizon_min, opt.grid_step_min};
    d.provenance.solver.end_time = opt.horizon_min;
    d.time_grid = dataset_time_grid(opt.horizon_min, opt.grid_step_min);
    const std::size_t g = d.grid_size();

    struct Row {
        std::vector<double> part, tool;
        CycleMetrics metrics;
        std::string error;
    };
    std::vector<Row> rows(opt.n);
    parallel_for(
        opt.n,
        [&](std::size_t i) {
            try {
                const Sample s = sample_from_inputs(xs[i], opt.ranges);
                const auto r = simulate(s.stack, s.cycle, materials, d.provenance.solver);
                rows[i].part.resize(g);
                rows[i].tool.resize(g);
                for (std::size_t k = 0; k < g; ++k) {
                    rows[i].part[k] = interpolate(r.part_center, d.time_grid[k]);
                    rows[i].tool[k] = interpolate(r.tool_bottom, d.time_grid[k]);
                }
                rows[i].metrics = r.metrics();
            } catch (const std::exception& e) {
                rows[i].error = e.what();
                if (rows[i].error.empty()) rows[i].error = "simulation failed";
            }
        },
        opt.threads);

    for (std::size_t i = 0; i < opt.n; ++i) {
        auto& r = rows[i];
        if (!r.error.empty()) {
            d.failures.push_back(FailedRow{i, xs[i], r.error});
            continue;
        }
        d.inputs.push_back(xs[i]);
        d.part.insert(d.part.end(), r.part.begin(), r.part.end());
        d.tool.insert(d.tool.end(), r.tool.begin(), r.tool.end());
        d.max_part_temperature.push_back(r.metrics.max_part_temperature);
        d.rate_at_final_hold.push_back(r.metrics.part_rate_at_final_hold);
        d.pass.push_back(check_specs(r.metrics, opt.specs).pass ? 1 : 0);
    }
    return d;
}

// --- file format ----------------------------------------------------------------

inline constexpr std::string_view dataset_magic = "CUREKIT-DATASET\n";
inline constexpr std::uint32_t dataset_format_version = 1;

namespace detail {

inline nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

inline Range range_from_json(const nlohmann::json& j) { return Range{j.at(0).get<double>(), j.at(1).get<double>()}; }

inline nlohmann::json solver_json(const SolverConfig& c) {
    return {{"dt_s", c.dt},
            {"elements_per_layer", c.elements_per_layer},
            {"output_interval_s", c.output_interval},
            {"end_time_min", c.end_time}};
}

inline SolverConfig solver_from_json(const nlohmann::json& j) {
    SolverConfig c;
    c.dt = j.at("dt_s").get<double>();
    c.elements_per_layer = j.at("elements_per_layer").get<int>();
    c.output_interval = j.at("output_interval_s").get<double>();
    c.end_time = j.at("end_time_min").get<double>();
    return c;
}

inline void write_file_bytes(const std::string& path, std::span<const std::byte> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::vector<std::byte> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

/// Checks magic, version and trailing checksum; returns a reader positioned after the version.
inline std::span<const std::byte> open_container(std::span<const std::byte> bytes, std::string_view magic,
                                                 std::uint32_t supported, const char* what) {
    if (bytes.size() < magic.size() + 4 || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
        throw corruption_error(std::string("not a curekit ") + what + " file (bad magic)");
    }
    ByteReader head(bytes.subspan(magic.size(), 4));
    const std::uint32_t version = head.u32();
    if (version > supported) throw version_error(version, supported);
    if (bytes.size() < magic.size() + 8) throw corruption_error(std::string(what) + " file is truncated");
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4));
    const std::uint32_t stored = tail.u32();
    if (crc32(body) != stored) {
        throw corruption_error(std::string(what) + " file checksum mismatch (truncated or modified)");
    }
    return body.subspan(magic.size() + 4);
}

}  // namespace detail

inline nlohmann::json provenance_json(const Dataset& d) {
    const auto& p = d.provenance;
    nlohmann::json ranges;
    const auto axes = p.ranges.axes();
    for (std::size_t i = 0; i < input_count; ++i) ranges[input_names[i]] = detail::range_json(axes[i]);
    ranges["T0_C"] = p.ranges.T0;
    ranges["T2_C"] = p.ranges.T2;
    ranges["t2_min"] = p.ranges.t2;
    ranges["cooldown_C_per_min"] = p.ranges.cooldown_rate;
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : d.failures) {
        failures.push_back({{"index", f.index}, {"inputs", f.inputs}, {"error", f.error}});
    }
    return {{"seed", p.seed},
            {"requested", p.requested},
            {"row_count", d.rows()},
            {"sampling", to_string(p.sampling)},
            {"ranges", ranges},
            {"solver", detail::solver_json(p.solver)},
            {"specs", to_json(p.specs)},
            {"material_hash", p.material_hash},
            {"horizon_min", p.horizon_min},
            {"grid_step_min", p.grid_step_min},
            {"inputs", input_names},
            {"failures", failures}};
}

inline std::vector<std::byte> serialize(const Dataset& d) {
    const std::string header = provenance_json(d).dump();
    ByteWriter w;
    w.text(dataset_magic);
    w.u32(dataset_format_version);
    w.u64(header.size());
    w.text(header);
    w.u64(d.rows());
    w.u64(d.grid_size());
    w.f64s(d.time_grid);
    std::vector<double> column(d.rows());
    for (std::size_t a = 0; a < input_count; ++a) {
        for (std::size_t i = 0; i < d.rows(); ++i) column[i] = d.inputs[i][a];
        w.f64s(column);
    }
    w.f64s(d.part);
    w.f64s(d.tool);
    w.f64s(d.max_part_temperature);
    w.f64s(d.rate_at_final_hold);
    w.bytes(std::as_bytes(std::span(d.pass)));
    w.u32(crc32(w.data()));
    return std::move(w.data());
}

/// `expected_material_hash` non-empty: a mismatch is attached to `warnings`.
inline Dataset deserialize_dataset(std::span<const std::byte> bytes, const std::string& expected_material_hash = {}) {
    ByteReader r(detail::open_container(bytes, dataset_magic, dataset_format_version, "dataset"));
    Dataset d;
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(r.text(static_cast<std::size_t>(r.u64())));
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(std::string("dataset header is not valid JSON: ") + e.what());
    }
    try {
        auto& p = d.provenance;
        p.seed = h.at("seed").get<std::uint64_t>();
        p.requested = h.at("requested").get<std::size_t>();
        p.sampling = sampling_from_string(h.at("sampling").get<std::string>());
        const auto& rj = h.at("ranges");
        Range* axes[] = {&p.ranges.h1, &p.ranges.L1, &p.ranges.L2, &p.ranges.h2,
                         &p.ranges.rate1, &p.ranges.rate2, &p.ranges.T1, &p.ranges.t1};
        for (std::size_t i = 0; i < input_count; ++i) *axes[i] = detail::range_from_json(rj.at(input_names[i]));
        p.ranges.T0 = rj.at("T0_C").get<double>();
        p.ranges.T2 = rj.at("T2_C").get<double>();
        p.ranges.t2 = rj.at("t2_min").get<double>();
        p.ranges.cooldown_rate = rj.at("cooldown_C_per_min").get<double>();
        p.solver = detail::solver_from_json(h.at("solver"));
        p.specs = specs_from_json(h.at("specs"));
        p.material_hash = h.at("material_hash").get<std::string>();
        p.horizon_min = h.at("horizon_min").get<double>();
        p.grid_step_min = h.at("grid_step_min").get<double>();
        for (const auto& f : h.at("failures")) {
            d.failures.push_back(FailedRow{f.at("index").get<std::size_t>(), f.at("inputs").get<InputVector>(),
                                           f.at("error").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(std::string("dataset header is incomplete: ") + e.what());
    }

    const auto rows = static_cast<std::size_t>(r.u64());
    const auto grid = static_cast<std::size_t>(r.u64());
    if (rows != h.at("row_count").get<std::size_t>()) {
        throw corruption_error("dataset header row count " + h.at("row_count").dump() + " disagrees with payload (" +
                               std::to_string(rows) + " rows)");
    }
    const std::size_t expected = grid * 8 + rows * (input_count + 2 * grid + 2) * 8 + rows;
    if (r.remaining() != expected) {
        throw corruption_error("dataset payload size " + std::to_string(r.remaining()) + " does not match " +
                               std::to_string(rows) + " rows x " + std::to_string(grid) + " samples");
    }
    d.time_grid.resize(grid);
    r.f64s(d.time_grid);
    d.inputs.resize(rows);
    std::vector<double> column(rows);
    for (std::size_t a = 0; a < input_count; ++a) {
        r.f64s(column);
        for (std::size_t i = 0; i < rows; ++i) d.inputs[i][a] = column[i];
    }
    d.part.resize(rows * grid);
    d.tool.resize(rows * grid);
    d.max_part_temperature.resize(rows);
    d.rate_at_final_hold.resize(rows);
    r.f64s(d.part);
    r.f64s(d.tool);
    r.f64s(d.max_part_temperature);
    r.f64s(d.rate_at_final_hold);
    const auto labels = r.bytes(rows);
    d.pass.resize(rows);
    std::memcpy(d.pass.data(), labels.data(), rows);

    try {
        validate(d);
    } catch (const validation_error& e) {
        throw corruption_error(e.what());
    }
    if (!expected_material_hash.empty() && expected_material_hash != d.provenance.material_hash) {
        d.warnings.push_back("dataset was generated with material " + d.provenance.material_hash +
                             ", current material is " + expected_material_hash);
    }
    return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) { detail::write_file_bytes(path, serialize(d)); }

inline Dataset load_dataset(const std::string& path, const std::string& expected_material_hash = {}) {
    const auto bytes = detail::read_file_bytes(path);
    try {
        return deserialize_dataset(bytes, expected_material_hash);
    } catch (const corruption_error& e) {
        throw corruption_error("'" + path + "': " + e.what());
    }
}

}  // namespace curekit
