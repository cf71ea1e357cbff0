#pragma once

/**
 * 1D transient thermo-chemical finite-element solver for a part resting on a
 * tool, with convective (Robin) boundaries on the outer faces:
 *
 *   z = L1       h1 (T_air - T) = k1 dT/dz
 *   0 < z < L1   rho1 Cp1 dT/dt = d/dz(k1 dT/dz) + Qdot(alpha, T)
 *   z = 0        continuous temperature and flux
 *   -L2 < z < 0  rho2 Cp2 dT/dt = d/dz(k2 dT/dz)
 *   z = -L2      h2 (T - T_air) = k2 dT/dz
 *
 * Linear elements, lumped mass, backward Euler in temperature. The cure
 * source and the degree-of-cure update use the start-of-step state, so the
 * heat released in a step equals rho H (alpha_new - alpha_old) exactly.
 */

#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "curekit/cycle.hpp"
#include "curekit/error.hpp"
#include "curekit/material.hpp"
#include "curekit/parallel.hpp"
#include "curekit/trace.hpp"

namespace curekit {

/// One part-on-tool configuration [h1, L1, L2, h2] in SI units.
struct ThermalStack {
    double h1 = 0.0;  ///< W/(m^2 K), above the part
    double L1 = 0.0;  ///< m, part thickness
    double L2 = 0.0;  ///< m, tool thickness
    double h2 = 0.0;  ///< W/(m^2 K), below the tool

    bool operator==(const ThermalStack&) const = default;
};

inline void validate(const ThermalStack& s) {
    if (!(s.h1 > 0.0 && s.h2 > 0.0) || !std::isfinite(s.h1) || !std::isfinite(s.h2)) {
        throw domain_error("thermal stack: heat transfer coefficients must be positive");
    }
    if (!(s.L1 > 0.0 && s.L2 > 0.0) || !std::isfinite(s.L1) || !std::isfinite(s.L2)) {
        throw domain_error("thermal stack: thicknesses must be positive");
    }
}

enum class Layer : unsigned char { tool, part };

/// Nodes run from the tool bottom (z = -L2) to the part top (z = L1).
struct Mesh {
    std::vector<double> nodes;
    std::vector<Layer> element_layer;
    std::size_t interface_node = 0;

    std::size_t node_count() const { return nodes.size(); }
    std::size_t element_count() const { return element_layer.size(); }
    std::size_t part_node_count() const { return nodes.size() - interface_node; }
};

inline Mesh build_mesh(double L1, double L2, int elements_per_layer) {
    if (!(L1 > 0.0) || !(L2 > 0.0)) throw domain_error("build_mesh: thicknesses must be positive");
    if (elements_per_layer < 1) throw domain_error("build_mesh: need at least one element per layer");
    const auto n = static_cast<std::size_t>(elements_per_layer);
    Mesh mesh;
    mesh.nodes.resize(2 * n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        mesh.nodes[i] = -L2 + L2 * static_cast<double>(i) / static_cast<double>(n);
        mesh.nodes[n + 1 + i] = L1 * static_cast<double>(i + 1) / static_cast<double>(n);
    }
    mesh.nodes[n] = 0.0;
    mesh.nodes[2 * n] = L1;
    mesh.element_layer.assign(2 * n, Layer::tool);
    std::fill(mesh.element_layer.begin() + static_cast<std::ptrdiff_t>(n), mesh.element_layer.end(), Layer::part);
    mesh.interface_node = n;
    return mesh;
}

/// Temperatures in kelvin for every node; degree of cure for the part nodes
/// (index 0 is the interface node).
struct SolverState {
    double time = 0.0;  ///< s
    std::vector<double> temperature;
    std::vector<double> alpha;
};

inline SolverState initial_state(const Mesh& mesh, double temperature_k, double alpha0) {
    return SolverState{0.0, std::vector<double>(mesh.node_count(), temperature_k),
                       std::vector<double>(mesh.part_node_count(), alpha0)};
}

/// Assembled system for a fixed (stack, mesh, materials, dt); the tridiagonal
/// left-hand side is factored once.
class ThermalSystem {
public:
    ThermalSystem(const ThermalStack& stack, const Mesh& mesh, const MaterialPair& materials, double dt)
        : dt_(dt), h1_(stack.h1), h2_(stack.h2), kinetics_(materials.part.kinetics.rate_constants),
          heat_density_(materials.part.thermal.density * materials.part.kinetics.total_heat_of_reaction),
          interface_(mesh.interface_node) {
        validate(stack);
        if (!(dt > 0.0) || !std::isfinite(dt)) throw domain_error("step: dt must be positive");
        const std::size_t n = mesh.node_count();
        mass_.assign(n, 0.0);
        diag_.assign(n, 0.0);
        off_.assign(n - 1, 0.0);
        source_weight_.assign(mesh.part_node_count(), 0.0);
        for (std::size_t e = 0; e + 1 < n; ++e) {
            const double len = mesh.nodes[e + 1] - mesh.nodes[e];
            const ThermalProperties& p =
                mesh.element_layer[e] == Layer::part ? materials.part.thermal : materials.tool;
            const double m = p.volumetric_heat_capacity() * len / 2.0;
            const double k = p.conductivity_through_thickness / len;
            mass_[e] += m;
            mass_[e + 1] += m;
            diag_[e] += k;
            diag_[e + 1] += k;
            off_[e] -= k;
            if (mesh.element_layer[e] == Layer::part) {
                source_weight_[e - interface_] += len / 2.0;
                source_weight_[e + 1 - interface_] += len / 2.0;
            }
        }
        diag_.front() += h2_;
        diag_.back() += h1_;

        // Thomas factorization of (M/dt + K).
        upper_.assign(n, 0.0);
        inv_pivot_.assign(n, 0.0);
        double prev_upper = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sub = i == 0 ? 0.0 : off_[i - 1];
            const double pivot = mass_[i] / dt_ + diag_[i] - sub * prev_upper;
            if (!(std::abs(pivot) > 0.0) || !std::isfinite(pivot)) {
                throw solver_error(0.0, "singular system matrix at node " + std::to_string(i));
            }
            inv_pivot_[i] = 1.0 / pivot;
            prev_upper = i + 1 < n ? off_[i] * inv_pivot_[i] : 0.0;
            upper_[i] = prev_upper;
        }
        rhs_.assign(n, 0.0);
        rate_.assign(mesh.part_node_count(), 0.0);
    }

    double dt() const { return dt_; }

    /// One backward-Euler step; `air_k` is the air temperature at the end of the step.
    void advance(SolverState& s, double air_k) {
        const std::size_t n = mass_.size();
        for (std::size_t j = 0; j < rate_.size(); ++j) {
            rate_[j] = detail::cure_rate_unchecked(s.alpha[j], s.temperature[interface_ + j], kinetics_);
        }
        for (std::size_t i = 0; i < n; ++i) rhs_[i] = mass_[i] / dt_ * s.temperature[i];
        for (std::size_t j = 0; j < rate_.size(); ++j) {
            rhs_[interface_ + j] += heat_density_ * rate_[j] * source_weight_[j];
        }
        rhs_.front() += h2_ * air_k;
        rhs_.back() += h1_ * air_k;

        // Forward sweep then back substitution.
        double prev = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sub = i == 0 ? 0.0 : off_[i - 1];
            prev = (rhs_[i] - sub * prev) * inv_pivot_[i];
            rhs_[i] = prev;
        }
        s.temperature[n - 1] = rhs_[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) {
            s.temperature[i] = rhs_[i] - upper_[i] * s.temperature[i + 1];
        }
        for (std::size_t j = 0; j < rate_.size(); ++j) {
            s.alpha[j] = std::min(1.0, s.alpha[j] + dt_ * rate_[j]);
        }
        s.time += dt_;
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(s.temperature[i])) {
                throw solver_error(s.time, "non-finite temperature at t = " + std::to_string(s.time) + " s");
            }
        }
    }

private:
    double dt_;
    double h1_, h2_;
    RateConstants kinetics_;
    double heat_density_;
    std::size_t interface_;
    std::vector<double> mass_, diag_, off_, source_weight_;
    std::vector<double> upper_, inv_pivot_;
    std::vector<double> rhs_, rate_;
};

/// Advances `state` by one implicit step of length dt (s) with air at `air_temperature_k`.
inline SolverState step(const SolverState& state, double dt, double air_temperature_k, const ThermalStack& stack,
                        const Mesh& mesh, const MaterialPair& materials) {
    if (state.temperature.size() != mesh.node_count() || state.alpha.size() != mesh.part_node_count()) {
        throw domain_error("step: state does not match mesh");
    }
    ThermalSystem system(stack, mesh, materials, dt);
    SolverState next = state;
    system.advance(next, air_temperature_k);
    return next;
}

struct SolverConfig {
    double dt = 5.0;                 ///< s
    int elements_per_layer = 10;
    double output_interval = 30.0;   ///< s, must be a multiple of dt
    /// Uniform initial temperature in °C; NaN means the cycle start temperature.
    double initial_temperature = std::numeric_limits<double>::quiet_NaN();
    /// Simulated horizon in minutes; NaN means the cycle's total time.
    double end_time = std::numeric_limits<double>::quiet_NaN();
};

struct SimulationResult {
    TemperatureTrace part_center;  ///< °C over minutes
    TemperatureTrace tool_bottom;
    TemperatureTrace air;
    std::vector<double> alpha_center;      ///< per output sample
    std::vector<double> final_alpha_profile;
    double max_part_temperature = 0.0;     ///< °C, max of the part-center trace
    double part_rate_at_final_hold = 0.0;  ///< °C/min, NaN if the horizon ends too early

    CycleMetrics metrics() const { return {max_part_temperature, part_rate_at_final_hold}; }
};

/// Centered-difference slope of `trace` at the first sample at or after `t`.
inline double slope_at(const TemperatureTrace& trace, double t) {
    const auto& ts = trace.times;
    auto it = std::lower_bound(ts.begin(), ts.end(), t - 1e-9);
    const std::size_t i = static_cast<std::size_t>(it - ts.begin());
    if (i == 0 || i + 1 >= ts.size()) return std::numeric_limits<double>::quiet_NaN();
    return (trace.values[i + 1] - trace.values[i - 1]) / (ts[i + 1] - ts[i - 1]);
}

inline SimulationResult simulate(const ThermalStack& stack, const CureCycle& cycle, const MaterialPair& materials,
                                 const SolverConfig& config = {}) {
    validate(stack);
    const double end_min = std::isnan(config.end_time) ? cycle.total_time() : config.end_time;
    if (!(end_min > 0.0)) throw domain_error("simulate: cycle duration must be positive");
    const double ratio = config.output_interval / config.dt;
    const auto every = static_cast<long>(std::llround(ratio));
    if (every < 1 || std::abs(ratio - static_cast<double>(every)) > 1e-9) {
        throw domain_error("simulate: output interval must be a positive multiple of dt");
    }

    const Mesh mesh = build_mesh(stack.L1, stack.L2, config.elements_per_layer);
    ThermalSystem system(stack, mesh, materials, config.dt);
    const double T0 = std::isnan(config.initial_temperature) ? cycle.start_temperature() : config.initial_temperature;
    SolverState state = initial_state(mesh, T0 + kelvin_offset, materials.part.kinetics.initial_degree_of_cure);

    // Part center: a node when the part element count is even, else midway between two nodes.
    const std::size_t ne = mesh.part_node_count() - 1;
    const std::size_t lo = mesh.interface_node + ne / 2;
    const std::size_t hi = ne % 2 == 0 ? lo : lo + 1;
    auto center_T = [&] { return 0.5 * (state.temperature[lo] + state.temperature[hi]) - kelvin_offset; };
    auto center_alpha = [&] {
        return 0.5 * (state.alpha[lo - mesh.interface_node] + state.alpha[hi - mesh.interface_node]);
    };

    SimulationResult r;
    const auto n_out = static_cast<std::size_t>(std::floor(end_min * 60.0 / config.output_interval + 1e-9)) + 1;
    for (auto* tr : {&r.part_center, &r.tool_bottom, &r.air}) {
        tr->times.reserve(n_out);
        tr->values.reserve(n_out);
    }
    r.alpha_center.reserve(n_out);
    auto record = [&](double t_min) {
        r.part_center.times.push_back(t_min);
        r.part_center.values.push_back(center_T());
        r.tool_bottom.times.push_back(t_min);
        r.tool_bottom.values.push_back(state.temperature.front() - kelvin_offset);
        r.air.times.push_back(t_min);
        r.air.values.push_back(cycle.air_temperature(t_min));
        r.alpha_center.push_back(center_alpha());
    };
    record(0.0);
    const long total_steps = static_cast<long>(n_out - 1) * every;
    for (long k = 1; k <= total_steps; ++k) {
        const double t_s = static_cast<double>(k) * config.dt;
        system.advance(state, cycle.air_temperature(t_s / 60.0) + kelvin_offset);
        if (k % every == 0) record(static_cast<double>(k / every) * config.output_interval / 60.0);
    }
    r.final_alpha_profile = state.alpha;
    r.max_part_temperature = *std::max_element(r.part_center.values.begin(), r.part_center.values.end());
    r.part_rate_at_final_hold = slope_at(r.part_center, cycle.final_hold_reached_at());
    return r;
}

/// Independent simulations of every stack under one cycle; failures are
/// reported per stack.
inline std::vector<Outcome<SimulationResult>> simulate_batch(std::span<const ThermalStack> stacks,
                                                             const CureCycle& cycle, const MaterialPair& materials,
                                                             const SolverConfig& config = {},
                                                             unsigned threads = default_parallelism()) {
    if (stacks.empty()) throw domain_error("simulate_batch: empty stack list");
    std::vector<Outcome<SimulationResult>> out(stacks.size());
    parallel_for(
        stacks.size(),
        [&](std::size_t i) {
            try {
                out[i].value = simulate(stacks[i], cycle, materials, config);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        },
        threads);
    return out;
}

/// Columnar plot data: time_s T_air_C T_part_C T_tool_C alpha_center.
inline void write_result(std::ostream& out, const SimulationResult& r) {
    out << "time_s T_air_C T_part_C T_tool_C alpha_center\n" << std::setprecision(10);
    for (std::size_t i = 0; i < r.part_center.size(); ++i) {
        out << r.part_center.times[i] * 60.0 << ' ' << r.air.values[i] << ' ' << r.part_center.values[i] << ' '
            << r.tool_bottom.values[i] << ' ' << r.alpha_center[i] << '\n';
    }
}

}  // namespace curekit
