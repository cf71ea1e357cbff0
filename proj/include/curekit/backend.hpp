#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "curekit/cycle.hpp"
#include "curekit/fe.hpp"
#include "curekit/parallel.hpp"
#include "curekit/trace.hpp"

namespace curekit {

struct StackTraces {
    TemperatureTrace part_center;
    TemperatureTrace tool_bottom;
};

/// Row-major pass/fail matrix, stacks x cycles.
struct FeasibilityMatrix {
    std::size_t stacks = 0;
    std::size_t cycles = 0;
    std::vector<std::uint8_t> pass;
    std::vector<double> pass_probability;

    bool at(std::size_t stack, std::size_t cycle) const { return pass[stack * cycles + cycle] != 0; }
    double probability(std::size_t stack, std::size_t cycle) const { return pass_probability[stack * cycles + cycle]; }

    bool operator==(const FeasibilityMatrix&) const = default;
};

/// A feasibility evaluation failed for one (stack, cycle) pair.
class backend_error : public std::runtime_error {
public:
    backend_error(std::size_t stack, std::size_t cycle, const std::string& what)
        : std::runtime_error("stack " + std::to_string(stack) + ", cycle " + std::to_string(cycle) + ": " + what),
          stack_(stack), cycle_(cycle) {}

    std::size_t stack() const noexcept { return stack_; }
    std::size_t cycle() const noexcept { return cycle_; }

private:
    std::size_t stack_, cycle_;
};

/// "Given stacks and a cycle, produce traces, metrics, or pass/fail."
/// The direct FE solver and the trained surrogates both implement this.
class SimulationBackend {
public:
    virtual ~SimulationBackend() = default;

    virtual std::string name() const = 0;

    /// Part-center and tool-bottom traces per stack, at least up to `horizon_min`
    /// (NaN: the whole cycle). Failures are reported per stack.
    virtual std::vector<Outcome<StackTraces>> predict_traces(std::span<const ThermalStack> stacks,
                                                             const CureCycle& cycle,
                                                             double horizon_min) const = 0;

    virtual std::vector<Outcome<CycleMetrics>> predict_metrics(std::span<const ThermalStack> stacks,
                                                               const CureCycle& cycle) const = 0;

    /// Throws backend_error naming the first failing pair.
    virtual FeasibilityMatrix feasibility(std::span<const ThermalStack> stacks, std::span<const CureCycle> cycles,
                                          const ProcessSpecs& specs) const = 0;

    std::vector<Outcome<StackTraces>> predict_traces(std::span<const ThermalStack> stacks,
                                                     const CureCycle& cycle) const {
        return predict_traces(stacks, cycle, std::numeric_limits<double>::quiet_NaN());
    }
};

/// Exact backend: runs the FE solver for every request.
class FeBackend final : public SimulationBackend {
public:
    explicit FeBackend(MaterialPair materials, SolverConfig config = {}, unsigned threads = default_parallelism())
        : materials_(std::move(materials)), config_(config), threads_(threads) {}

    std::string name() const override { return "fe"; }

    using SimulationBackend::predict_traces;

    const MaterialPair& materials() const { return materials_; }
    const SolverConfig& config() const { return config_; }

    std::vector<Outcome<StackTraces>> predict_traces(std::span<const ThermalStack> stacks, const CureCycle& cycle,
                                                     double horizon_min) const override {
        SolverConfig cfg = config_;
        if (!std::isnan(horizon_min)) {
            // Round up to the output grid so the horizon sample itself is produced.
            const double step_min = cfg.output_interval / 60.0;
            cfg.end_time = std::max(step_min, std::ceil(horizon_min / step_min - 1e-9) * step_min);
        }
        std::vector<Outcome<StackTraces>> out(stacks.size());
        parallel_for(
            stacks.size(),
            [&](std::size_t i) {
                try {
                    auto r = simulate(stacks[i], cycle, materials_, cfg);
                    out[i].value = StackTraces{std::move(r.part_center), std::move(r.tool_bottom)};
                } catch (const std::exception& e) {
                    out[i].error = e.what();
                }
            },
            threads_);
        return out;
    }

    std::vector<Outcome<CycleMetrics>> predict_metrics(std::span<const ThermalStack> stacks,
                                                       const CureCycle& cycle) const override {
        std::vector<Outcome<CycleMetrics>> out(stacks.size());
        parallel_for(
            stacks.size(),
            [&](std::size_t i) {
                try {
                    out[i].value = simulate(stacks[i], cycle, materials_, config_).metrics();
                } catch (const std::exception& e) {
                    out[i].error = e.what();
                }
            },
            threads_);
        return out;
    }

    FeasibilityMatrix feasibility(std::span<const ThermalStack> stacks, std::span<const CureCycle> cycles,
                                  const ProcessSpecs& specs) const override {
        FeasibilityMatrix m{stacks.size(), cycles.size(), std::vector<std::uint8_t>(stacks.size() * cycles.size()),
                            std::vector<double>(stacks.size() * cycles.size())};
        parallel_for(
            m.pass.size(),
            [&](std::size_t k) {
                const std::size_t i = k / cycles.size(), j = k % cycles.size();
                try {
                    const bool ok = check_specs(simulate(stacks[i], cycles[j], materials_, config_).metrics(), specs).pass;
                    m.pass[k] = ok ? 1 : 0;
                    m.pass_probability[k] = ok ? 1.0 : 0.0;
                } catch (const std::exception& e) {
                    throw backend_error(i, j, e.what());
                }
            },
            threads_);
        return m;
    }

private:
    MaterialPair materials_;
    SolverConfig config_;
    unsigned threads_;
};

}  // namespace curekit
