#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "curekit/error.hpp"

namespace curekit {

/// Time-stamped temperature history of one probe. Times in minutes, values in °C.
struct TemperatureTrace {
    std::vector<double> times;
    std::vector<double> values;

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }
    double start() const { return times.front(); }
    double end() const { return times.back(); }

    bool operator==(const TemperatureTrace&) const = default;
};

inline void validate(const TemperatureTrace& trace) {
    if (trace.times.size() != trace.values.size()) {
        throw validation_error("trace: times and values differ in length");
    }
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (!std::isfinite(trace.times[i]) || !std::isfinite(trace.values[i])) {
            throw validation_error("trace: non-finite sample at index " + std::to_string(i));
        }
        if (i > 0 && !(trace.times[i] > trace.times[i - 1])) {
            throw validation_error("trace: times must be strictly increasing (index " + std::to_string(i) + ")");
        }
    }
}

/// Linear interpolation; `t` must lie inside [start, end].
inline double interpolate(const TemperatureTrace& trace, double t) {
    const auto& ts = trace.times;
    if (ts.size() == 1) {
        return trace.values.front();
    }
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - ts.begin());
    if (hi == 0) hi = 1;
    if (hi >= ts.size()) hi = ts.size() - 1;
    const std::size_t lo = hi - 1;
    const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
    return trace.values[lo] + w * (trace.values[hi] - trace.values[lo]);
}

/// Samples of `trace` up to and including time `horizon`.
inline TemperatureTrace truncate(const TemperatureTrace& trace, double horizon) {
    TemperatureTrace out;
    for (std::size_t i = 0; i < trace.size() && trace.times[i] <= horizon + 1e-9; ++i) {
        out.times.push_back(trace.times[i]);
        out.values.push_back(trace.values[i]);
    }
    return out;
}

/// Reads two-column text (time_min, temperature_C); '#' lines and one
/// non-numeric header line are skipped.
inline TemperatureTrace read_trace(std::istream& in) {
    TemperatureTrace trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double t = 0.0, v = 0.0;
        if (!(ls >> t >> v)) {
            if (trace.empty() && line_no <= 2) continue;  // header
            throw parse_error("line " + std::to_string(line_no), "expected 'time_min temperature_C'");
        }
        trace.times.push_back(t);
        trace.values.push_back(v);
    }
    validate(trace);
    return trace;
}

inline TemperatureTrace read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file " + path);
    return read_trace(in);
}

inline void write_trace(std::ostream& out, const TemperatureTrace& trace) {
    out << "time_min temperature_C\n" << std::setprecision(17);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << trace.times[i] << ' ' << trace.values[i] << '\n';
    }
}

}  // namespace curekit
