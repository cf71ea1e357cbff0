#pragma once

/**
 * Trained stand-ins for the FE solver. The trace regressor maps the eight
 * stack and cycle parameters to part-center and tool-bottom traces on a fixed
 * grid; it learns the residual over a cheap physics baseline (coarse FE by
 * default), centered per output and scaled by its RMS.
 * The feasibility classifier maps the same parameters to (P_pass, P_fail).
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "curekit/backend.hpp"
#include "curekit/binary_io.hpp"
#include "curekit/datagen.hpp"
#include "curekit/nn.hpp"
#include "curekit/parallel.hpp"

namespace curekit {

// --- lumped baseline ---------------------------------------------------------------

/// Two-node backward-Euler conduction model without cure heat, sampled on
/// `grid` (min). Writes part and tool temperatures (°C).
inline void lumped_traces(const ThermalStack& s, const CureCycle& cycle, const MaterialPair& m,
                          std::span<const double> grid, std::span<double> part, std::span<double> tool,
                          int substeps = 4) {
    const double C1 = m.part.thermal.volumetric_heat_capacity() * s.L1;
    const double C2 = m.tool.volumetric_heat_capacity() * s.L2;
    const double r1 = s.L1 / (2.0 * m.part.thermal.conductivity_through_thickness);
    const double r2 = s.L2 / (2.0 * m.tool.conductivity_through_thickness);
    const double ga1 = 1.0 / (1.0 / s.h1 + r1), ga2 = 1.0 / (1.0 / s.h2 + r2), g12 = 1.0 / (r1 + r2);
    double tp = cycle.start_temperature(), tt = tp;
    double t_prev = grid.empty() ? 0.0 : grid[0];
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double span_s = (grid[k] - t_prev) * 60.0;
        if (span_s > 0.0) {
            const double dt = span_s / substeps;
            for (int j = 1; j <= substeps; ++j) {
                const double ta = cycle.air_temperature(t_prev + (grid[k] - t_prev) * j / substeps);
                // [C1/dt + ga1 + g12, -g12; -g12, C2/dt + ga2 + g12] [tp; tt] = rhs
                const double a = C1 / dt + ga1 + g12, d = C2 / dt + ga2 + g12, b = -g12;
                const double f1 = C1 / dt * tp + ga1 * ta, f2 = C2 / dt * tt + ga2 * ta;
                const double det = a * d - b * b;
                tp = (f1 * d - b * f2) / det;
                tt = (a * f2 - b * f1) / det;
            }
        }
        part[k] = tp;
        tool[k] = tt;
        t_prev = grid[k];
    }
}

enum class BaselineKind { none, lumped, coarse_fe };

inline const char* to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::none: return "none";
        case BaselineKind::lumped: return "lumped";
        case BaselineKind::coarse_fe: return "coarse_fe";
    }
    return "?";
}

inline BaselineKind baseline_from_string(const std::string& s) {
    if (s == "none") return BaselineKind::none;
    if (s == "lumped") return BaselineKind::lumped;
    if (s == "coarse_fe") return BaselineKind::coarse_fe;
    throw parse_error("baseline", "unknown baseline '" + s + "'");
}

/// Cheap physics model the regressor corrects: nothing (the network predicts the
/// traces directly), the two-node conduction model above, or the FE solver on a
/// coarse mesh with a long time step.
struct Baseline {
    BaselineKind kind = BaselineKind::coarse_fe;
    MaterialPair materials;
    int elements_per_layer = 2;
    double dt = 15.0;  ///< s

    void traces(const ThermalStack& s, const CureCycle& cycle, std::span<const double> grid, std::span<double> part,
                std::span<double> tool) const {
        if (kind == BaselineKind::none) {
            std::fill(part.begin(), part.end(), 0.0);
            std::fill(tool.begin(), tool.end(), 0.0);
            return;
        }
        if (kind == BaselineKind::lumped) {
            lumped_traces(s, cycle, materials, grid, part, tool);
            return;
        }
        if (grid.size() < 2) throw domain_error("baseline: time grid needs at least two points");
        SolverConfig c;
        c.dt = dt;
        c.elements_per_layer = elements_per_layer;
        c.output_interval = (grid[1] - grid[0]) * 60.0;
        c.end_time = grid.back();
        const auto r = simulate(s, cycle, materials, c);
        if (r.part_center.size() != grid.size()) throw domain_error("baseline: time grid must be uniform from zero");
        std::copy(r.part_center.values.begin(), r.part_center.values.end(), part.begin());
        std::copy(r.tool_bottom.values.begin(), r.tool_bottom.values.end(), tool.begin());
    }

    bool operator==(const Baseline& o) const {
        return kind == o.kind && to_json(materials) == to_json(o.materials) &&
               elements_per_layer == o.elements_per_layer && dt == o.dt;
    }
};

// --- shared pieces -----------------------------------------------------------------

struct Prediction {
    std::vector<StackTraces> traces;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> range_warnings(const InputVector& x, const ParameterRanges& r, std::size_t index) {
    std::vector<std::string> out;
    const auto axes = r.axes();
    for (std::size_t a = 0; a < input_count; ++a) {
        const double slack = 1e-9 * std::max(1.0, std::abs(axes[a].width()));
        if (x[a] < axes[a].lo - slack || x[a] > axes[a].hi + slack) {
            out.push_back("input " + std::to_string(index) + ": " + input_names[a] + " = " + std::to_string(x[a]) +
                          " is outside the training range [" + std::to_string(axes[a].lo) + ", " +
                          std::to_string(axes[a].hi) + "]; extrapolating");
        }
    }
    return out;
}

inline void normalize_into(const InputVector& x, const ParameterRanges& r, nn::Matrix& X, Eigen::Index col) {
    const auto axes = r.axes();
    for (std::size_t a = 0; a < input_count; ++a) {
        X(static_cast<Eigen::Index>(a), col) = (x[a] - axes[a].lo) / axes[a].width();
    }
}

/// Deterministic 70/30 style split of row indices.
inline void split_rows(std::size_t rows, double validation_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                       std::vector<std::size_t>& held_out) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw domain_error("training: validation fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> idx(rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed ^ 0x5eed5eed5eed5eedULL);
    rng.shuffle(idx);
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(rows)));
    held_out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(held_out.begin(), held_out.end());
}

inline nlohmann::json ranges_json(const ParameterRanges& r) {
    nlohmann::json j;
    const auto axes = r.axes();
    for (std::size_t i = 0; i < input_count; ++i) j[input_names[i]] = range_json(axes[i]);
    j["T0_C"] = r.T0;
    j["T2_C"] = r.T2;
    j["t2_min"] = r.t2;
    j["cooldown_C_per_min"] = r.cooldown_rate;
    return j;
}

inline ParameterRanges ranges_from_json(const nlohmann::json& j) {
    ParameterRanges r;
    Range* axes[] = {&r.h1, &r.L1, &r.L2, &r.h2, &r.rate1, &r.rate2, &r.T1, &r.t1};
    for (std::size_t i = 0; i < input_count; ++i) *axes[i] = range_from_json(j.at(input_names[i]));
    r.T0 = j.at("T0_C").get<double>();
    r.T2 = j.at("T2_C").get<double>();
    r.t2 = j.at("t2_min").get<double>();
    r.cooldown_rate = j.at("cooldown_C_per_min").get<double>();
    return r;
}

inline double learning_rate_at(double start, double end, int epoch, int epochs) {
    if (epochs <= 1) return start;
    const double f = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return start * std::pow(end / start, f);
}

}  // namespace detail

struct TrainConfig {
    std::vector<int> hidden{128, 128, 128};
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 2e-3;        ///< decays geometrically to final_learning_rate
    double final_learning_rate = 2e-5;
    double validation_fraction = 0.3;
    std::uint64_t seed = 1;
    double error_bound = 2.0;           ///< °C for the regressor, 1 - accuracy for the classifier
    std::size_t min_rows = 500;
    BaselineKind baseline = BaselineKind::coarse_fe;  ///< regressor only
    unsigned threads = default_parallelism();         ///< baseline evaluation only
    std::function<void(int epoch, double loss)> on_epoch;
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"hidden", c.hidden},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"final_learning_rate", c.final_learning_rate},
            {"validation_fraction", c.validation_fraction},
            {"seed", c.seed},
            {"error_bound", c.error_bound},
            {"baseline", to_string(c.baseline)}};
}

struct TrainingReport {
    std::vector<double> loss_history;  ///< training loss after each epoch
    bool converged = false;
    std::string message;
};

// --- trace regressor ---------------------------------------------------------------

class TraceRegressor {
public:
    TraceRegressor() = default;

    const ParameterRanges& ranges() const { return ranges_; }
    const std::vector<double>& time_grid() const { return grid_; }
    const nn::Mlp& network() const { return net_; }
    const Baseline& baseline() const { return baseline_; }
    double output_scale() const { return scale_; }
    /// Per-output mean residual (part grid, then tool grid), °C.
    const std::vector<double>& output_offset() const { return offset_; }

    /// Largest held-out |prediction - FE| over the whole grid (°C).
    double max_part_error() const { return max_part_error_; }
    double max_tool_error() const { return max_tool_error_; }
    double max_error() const { return std::max(max_part_error_, max_tool_error_); }
    double rms_error() const { return rms_error_; }
    const nlohmann::json& metadata() const { return metadata_; }
    void set_threads(unsigned t) { threads_ = std::max(1u, t); }

    Prediction predict_inputs(std::span<const InputVector> xs, std::span<const CureCycle> cycles) const {
        const std::size_t n = xs.size(), g = grid_.size();
        Prediction out;
        out.traces.resize(n);
        nn::Matrix X(input_count, static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            auto w = detail::range_warnings(xs[i], ranges_, i);
            out.warnings.insert(out.warnings.end(), w.begin(), w.end());
            detail::normalize_into(xs[i], ranges_, X, static_cast<Eigen::Index>(i));
        }
        const nn::Matrix Y = n == 0 ? nn::Matrix() : net_.forward(X);
        parallel_for(
            n,
            [&](std::size_t i) {
                const ThermalStack s{xs[i][0], xs[i][1], xs[i][2], xs[i][3]};
                auto& tr = out.traces[i];
                tr.part_center.times = grid_;
                tr.tool_bottom.times = grid_;
                tr.part_center.values.resize(g);
                tr.tool_bottom.values.resize(g);
                baseline_.traces(s, cycles[i], grid_, tr.part_center.values, tr.tool_bottom.values);
                const auto col = static_cast<Eigen::Index>(i);
                for (std::size_t k = 0; k < g; ++k) {
                    tr.part_center.values[k] += offset_[k] + scale_ * Y(static_cast<Eigen::Index>(k), col);
                    tr.tool_bottom.values[k] += offset_[g + k] + scale_ * Y(static_cast<Eigen::Index>(g + k), col);
                }
            },
            threads_);
        return out;
    }

    /// Batched: all stacks under one cycle.
    Prediction predict(std::span<const ThermalStack> stacks, const CureCycle& cycle) const {
        const auto p = cycle.two_hold_params();
        if (!p) throw domain_error("trace regressor: cycle is not a one- or two-hold cycle");
        std::vector<InputVector> xs;
        xs.reserve(stacks.size());
        for (const auto& s : stacks) xs.push_back(input_vector(s, *p));
        std::vector<std::string> fixed = fixed_parameter_warnings(*p);
        std::vector<CureCycle> cycles(stacks.size(), cycle);
        auto out = predict_inputs(xs, cycles);
        out.warnings.insert(out.warnings.begin(), fixed.begin(), fixed.end());
        return out;
    }

    std::vector<std::string> fixed_parameter_warnings(const TwoHoldParams& p) const {
        std::vector<std::string> w;
        auto check = [&](const char* name, double v, double trained) {
            if (std::abs(v - trained) > 1e-9) {
                w.push_back(std::string(name) + " = " + std::to_string(v) + " differs from the trained value " +
                            std::to_string(trained) + "; extrapolating");
            }
        };
        check("start_C", p.start, ranges_.T0);
        check("T2_C", p.T2, ranges_.T2);
        check("t2_min", p.t2, ranges_.t2);
        check("cooldown_C_per_min", p.cooldown_rate, ranges_.cooldown_rate);
        return w;
    }

    static std::pair<TraceRegressor, TrainingReport> train(const Dataset& data, const MaterialPair& materials,
                                                           const TrainConfig& config);

    bool operator==(const TraceRegressor& o) const {
        return ranges_ == o.ranges_ && grid_ == o.grid_ && net_ == o.net_ && baseline_ == o.baseline_ &&
               scale_ == o.scale_ && offset_ == o.offset_ && max_part_error_ == o.max_part_error_ && max_tool_error_ == o.max_tool_error_ &&
               rms_error_ == o.rms_error_;
    }

private:
    friend std::vector<std::byte> serialize(const TraceRegressor&);
    friend TraceRegressor deserialize_regressor(std::span<const std::byte>);

    ParameterRanges ranges_;
    std::vector<double> grid_;
    nn::Mlp net_;
    Baseline baseline_;
    double scale_ = 1.0;
    std::vector<double> offset_;
    double max_part_error_ = 0.0;
    double max_tool_error_ = 0.0;
    double rms_error_ = 0.0;
    nlohmann::json metadata_ = nlohmann::json::object();
    unsigned threads_ = default_parallelism();
};

namespace detail {

/// Residual targets (trace - baseline) for each dataset row, part then tool.
inline nn::Matrix residual_targets(const Dataset& d, const Baseline& b, unsigned threads) {
    const std::size_t g = d.grid_size();
    nn::Matrix R(static_cast<Eigen::Index>(2 * g), static_cast<Eigen::Index>(d.rows()));
    parallel_for(
        d.rows(),
        [&](std::size_t i) {
            std::vector<double> bp(g), bt(g);
            const Sample s = sample_from_inputs(d.inputs[i], d.provenance.ranges);
            b.traces(s.stack, s.cycle, d.time_grid, bp, bt);
            const auto part = d.part_trace(i), tool = d.tool_trace(i);
            const auto col = static_cast<Eigen::Index>(i);
            for (std::size_t k = 0; k < g; ++k) {
                R(static_cast<Eigen::Index>(k), col) = part[k] - bp[k];
                R(static_cast<Eigen::Index>(g + k), col) = tool[k] - bt[k];
            }
        },
        threads);
    return R;
}

inline nn::Matrix normalized_inputs(const Dataset& d) {
    nn::Matrix X(input_count, static_cast<Eigen::Index>(d.rows()));
    for (std::size_t i = 0; i < d.rows(); ++i) {
        normalize_into(d.inputs[i], d.provenance.ranges, X, static_cast<Eigen::Index>(i));
    }
    return X;
}

inline nn::Matrix gather(const nn::Matrix& M, std::span<const std::size_t> cols) {
    nn::Matrix out(M.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(static_cast<Eigen::Index>(cols[j]));
    return out;
}

/// Mini-batch Adam over `train` columns; `loss(Y, cols)` gives the batch loss.
template <class LossFn>
std::vector<double> fit(nn::Mlp& net, const nn::Matrix& X, std::vector<std::size_t> train, const TrainConfig& c,
                        LossFn&& loss) {
    if (c.epochs < 1 || c.batch_size < 1) throw domain_error("training: epochs and batch size must be positive");
    Rng rng(c.seed);
    nn::Adam adam(net, nn::AdamConfig{c.learning_rate});
    std::vector<double> history;
    std::vector<nn::Matrix> tape;
    const std::size_t bs = static_cast<std::size_t>(c.batch_size);
    for (int epoch = 0; epoch < c.epochs; ++epoch) {
        const double lr = learning_rate_at(c.learning_rate, c.final_learning_rate, epoch, c.epochs);
        rng.shuffle(train);
        double total = 0.0;
        for (std::size_t start = 0; start < train.size(); start += bs) {
            const std::span<const std::size_t> cols(train.data() + start, std::min(bs, train.size() - start));
            const nn::Matrix Xb = gather(X, cols);
            const nn::Matrix Y = net.forward(Xb, tape);
            const nn::Loss l = loss(Y, cols);
            adam.step(net, net.backward(tape, l.grad), lr);
            total += l.value * static_cast<double>(cols.size());
        }
        history.push_back(total / static_cast<double>(train.size()));
        if (c.on_epoch) c.on_epoch(epoch, history.back());
    }
    return history;
}

}  // namespace detail

inline std::pair<TraceRegressor, TrainingReport> TraceRegressor::train(const Dataset& data,
                                                                       const MaterialPair& materials,
                                                                       const TrainConfig& config) {
    if (data.rows() < config.min_rows) {
        throw domain_error("train_regressor: dataset has " + std::to_string(data.rows()) + " rows, need at least " +
                           std::to_string(config.min_rows));
    }
    TraceRegressor m;
    m.ranges_ = data.provenance.ranges;
    m.grid_ = data.time_grid;
    m.baseline_ = Baseline{config.baseline, materials};
    const std::size_t g = data.grid_size();

    std::vector<std::size_t> train, held_out;
    detail::split_rows(data.rows(), config.validation_fraction, config.seed, train, held_out);
    const nn::Matrix X = detail::normalized_inputs(data);
    nn::Matrix R = detail::residual_targets(data, m.baseline_, config.threads);

    nn::Vector mean = nn::Vector::Zero(R.rows());
    for (std::size_t j : train) mean += R.col(static_cast<Eigen::Index>(j));
    mean /= static_cast<double>(train.size());
    const nn::Matrix Rraw = R;
    R.colwise() -= mean;
    double ss = 0.0;
    for (std::size_t j : train) ss += R.col(static_cast<Eigen::Index>(j)).squaredNorm();
    m.scale_ = std::max(1e-6, std::sqrt(ss / static_cast<double>(train.size() * 2 * g)));
    R /= m.scale_;
    m.offset_.assign(mean.data(), mean.data() + mean.size());

    std::vector<int> widths{static_cast<int>(input_count)};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(static_cast<int>(2 * g));
    Rng init(config.seed);
    m.net_ = nn::Mlp(widths, init);

    TrainingReport report;
    report.loss_history = detail::fit(m.net_, X, train, config, [&](const nn::Matrix& Y, std::span<const std::size_t> cols) {
        return nn::mse(Y, detail::gather(R, cols));
    });

    // Held-out error in °C over the full grid, part and tool separately.
    const nn::Matrix Yv = m.net_.forward(detail::gather(X, held_out));
    const nn::Matrix Rv = detail::gather(Rraw, held_out);
    const nn::Matrix err = ((Yv * m.scale_).colwise() + mean - Rv).cwiseAbs();
    m.max_part_error_ = err.topRows(static_cast<Eigen::Index>(g)).maxCoeff();
    m.max_tool_error_ = err.bottomRows(static_cast<Eigen::Index>(g)).maxCoeff();
    m.rms_error_ = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
    m.metadata_ = {{"training", to_json(config)},
                   {"dataset_rows", data.rows()},
                   {"train_rows", train.size()},
                   {"held_out_rows", held_out.size()},
                   {"dataset_seed", data.provenance.seed},
                   {"material_hash", data.provenance.material_hash}};
    report.converged = m.max_error() <= config.error_bound;
    report.message = report.converged
                         ? "held-out max error " + std::to_string(m.max_error()) + " C within bound"
                         : "did not converge: held-out max error " + std::to_string(m.max_error()) +
                               " C exceeds bound " + std::to_string(config.error_bound) + " C";
    return {std::move(m), std::move(report)};
}

// --- feasibility classifier ----------------------------------------------------------

class FeasibilityClassifier {
public:
    FeasibilityClassifier() = default;

    const ParameterRanges& ranges() const { return ranges_; }
    const ProcessSpecs& specs() const { return specs_; }
    const nn::Mlp& network() const { return net_; }
    double threshold() const { return threshold_; }
    void set_threshold(double t) {
        if (!(t > 0.0 && t < 1.0)) throw domain_error("classifier threshold must lie in (0, 1)");
        threshold_ = t;
    }
    double validation_accuracy() const { return validation_accuracy_; }
    const nlohmann::json& metadata() const { return metadata_; }

    /// Column j holds (P_pass, P_fail) for input j.
    nn::Matrix probabilities(std::span<const InputVector> xs, std::vector<std::string>* warnings = nullptr) const {
        nn::Matrix X(input_count, static_cast<Eigen::Index>(xs.size()));
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (warnings) {
                auto w = detail::range_warnings(xs[i], ranges_, i);
                warnings->insert(warnings->end(), w.begin(), w.end());
            }
            detail::normalize_into(xs[i], ranges_, X, static_cast<Eigen::Index>(i));
        }
        if (xs.empty()) return nn::Matrix(2, 0);
        return nn::softmax(net_.forward(X));
    }

    bool decide(double p_pass) const { return p_pass > threshold_; }

    /// stacks x cycles matrix.
    FeasibilityMatrix classify(std::span<const ThermalStack> stacks, std::span<const CureCycle> cycles,
                               std::vector<std::string>* warnings = nullptr, std::size_t batch = 4096) const {
        FeasibilityMatrix m{stacks.size(), cycles.size(), std::vector<std::uint8_t>(stacks.size() * cycles.size()),
                            std::vector<double>(stacks.size() * cycles.size())};
        std::vector<TwoHoldParams> params;
        params.reserve(cycles.size());
        for (std::size_t j = 0; j < cycles.size(); ++j) {
            const auto p = cycles[j].two_hold_params();
            if (!p) throw domain_error("classifier: cycle " + std::to_string(j) + " is not a one- or two-hold cycle");
            params.push_back(*p);
        }
        std::vector<InputVector> xs;
        xs.reserve(batch);
        std::size_t first = 0;
        auto flush = [&] {
            const nn::Matrix P = probabilities(xs, warnings);
            for (std::size_t k = 0; k < xs.size(); ++k) {
                m.pass_probability[first + k] = P(0, static_cast<Eigen::Index>(k));
                m.pass[first + k] = decide(P(0, static_cast<Eigen::Index>(k))) ? 1 : 0;
            }
            first += xs.size();
            xs.clear();
        };
        for (std::size_t i = 0; i < stacks.size(); ++i) {
            for (std::size_t j = 0; j < cycles.size(); ++j) {
                xs.push_back(input_vector(stacks[i], params[j]));
                if (xs.size() == batch) flush();
            }
        }
        if (!xs.empty()) flush();
        return m;
    }

    static std::pair<FeasibilityClassifier, TrainingReport> train(const Dataset& data, const ProcessSpecs& specs,
                                                                  const TrainConfig& config);

    bool operator==(const FeasibilityClassifier& o) const {
        return ranges_ == o.ranges_ && specs_ == o.specs_ && net_ == o.net_ && threshold_ == o.threshold_ && validation_accuracy_ == o.validation_accuracy_;
    }

private:
    friend std::vector<std::byte> serialize(const FeasibilityClassifier&);
    friend FeasibilityClassifier deserialize_classifier(std::span<const std::byte>);

    ParameterRanges ranges_;
    ProcessSpecs specs_;
    nn::Mlp net_;
    double threshold_ = 0.5;
    double validation_accuracy_ = 0.0;
    nlohmann::json metadata_ = nlohmann::json::object();
};

/// Pass/fail labels recomputed from the dataset's stored metrics.
inline std::vector<int> feasibility_labels(const Dataset& data, const ProcessSpecs& specs) {
    std::vector<int> labels(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) labels[i] = check_specs(data.metrics(i), specs).pass ? 0 : 1;
    return labels;
}

inline std::pair<FeasibilityClassifier, TrainingReport> FeasibilityClassifier::train(const Dataset& data,
                                                                                     const ProcessSpecs& specs,
                                                                                     const TrainConfig& config) {
    if (data.rows() < config.min_rows) {
        throw domain_error("train_classifier: dataset has " + std::to_string(data.rows()) + " rows, need at least " +
                           std::to_string(config.min_rows));
    }
    validate(specs);
    FeasibilityClassifier m;
    m.ranges_ = data.provenance.ranges;
    m.specs_ = specs;
    const auto labels = feasibility_labels(data, specs);  // 0 = pass, 1 = fail

    std::vector<std::size_t> train, held_out;
    detail::split_rows(data.rows(), config.validation_fraction, config.seed, train, held_out);
    const nn::Matrix X = detail::normalized_inputs(data);

    std::vector<int> widths{static_cast<int>(input_count)};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(2);
    Rng init(config.seed);
    m.net_ = nn::Mlp(widths, init);

    TrainingReport report;
    std::vector<int> batch_labels;
    report.loss_history = detail::fit(m.net_, X, train, config, [&](const nn::Matrix& Y, std::span<const std::size_t> cols) {
        batch_labels.resize(cols.size());
        for (std::size_t k = 0; k < cols.size(); ++k) batch_labels[k] = labels[cols[k]];
        return nn::softmax_cross_entropy(Y, batch_labels);
    });

    const nn::Matrix P = nn::softmax(m.net_.forward(detail::gather(X, held_out)));
    std::size_t correct = 0;
    for (std::size_t k = 0; k < held_out.size(); ++k) {
        const bool predicted_pass = m.decide(P(0, static_cast<Eigen::Index>(k)));
        correct += predicted_pass == (labels[held_out[k]] == 0) ? 1 : 0;
    }
    m.validation_accuracy_ = held_out.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(held_out.size());
    m.metadata_ = {{"training", to_json(config)},
                   {"dataset_rows", data.rows()},
                   {"train_rows", train.size()},
                   {"held_out_rows", held_out.size()},
                   {"dataset_seed", data.provenance.seed},
                   {"material_hash", data.provenance.material_hash}};
    report.converged = 1.0 - m.validation_accuracy_ <= config.error_bound;
    report.message = (report.converged ? "held-out accuracy " : "did not converge: held-out accuracy ") +
                     std::to_string(m.validation_accuracy_);
    return {std::move(m), std::move(report)};
}

// --- model files ---------------------------------------------------------------------

inline constexpr std::string_view model_magic = "CUREKIT-MODEL\n";
inline constexpr std::uint32_t model_format_version = 1;

namespace detail {

inline void write_network(ByteWriter& w, const nn::Mlp& net) {
    w.u32(static_cast<std::uint32_t>(net.layers()));
    for (const auto& W : net.weights()) {
        w.u32(static_cast<std::uint32_t>(W.rows()));
        w.u32(static_cast<std::uint32_t>(W.cols()));
    }
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const auto& W = net.weights()[l];
        w.f64s(std::span<const double>(W.data(), static_cast<std::size_t>(W.size())));
        const auto& b = net.biases()[l];
        w.f64s(std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
    }
}

inline nn::Mlp read_network(ByteReader& r) {
    const std::uint32_t layers = r.u32();
    if (layers == 0 || layers > 64) throw corruption_error("model shape table is invalid");
    std::vector<int> widths;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
    for (std::uint32_t l = 0; l < layers; ++l) {
        const std::uint32_t rows = r.u32(), cols = r.u32();
        if (rows == 0 || cols == 0 || (l > 0 && cols != shapes.back().first)) {
            throw corruption_error("model shape table is inconsistent");
        }
        shapes.emplace_back(rows, cols);
        if (l == 0) widths.push_back(static_cast<int>(cols));
        widths.push_back(static_cast<int>(rows));
    }
    Rng unused(0);
    nn::Mlp net(widths, unused);
    for (std::size_t l = 0; l < layers; ++l) {
        auto& W = net.weights()[l];
        r.f64s(std::span<double>(W.data(), static_cast<std::size_t>(W.size())));
        auto& b = net.biases()[l];
        r.f64s(std::span<double>(b.data(), static_cast<std::size_t>(b.size())));
    }
    return net;
}

inline std::vector<std::byte> write_model(const nlohmann::json& meta, const nn::Mlp& net) {
    const std::string header = meta.dump();
    ByteWriter w;
    w.text(model_magic);
    w.u32(model_format_version);
    w.u64(header.size());
    w.text(header);
    write_network(w, net);
    w.u32(crc32(w.data()));
    return std::move(w.data());
}

inline std::pair<nlohmann::json, nn::Mlp> read_model(std::span<const std::byte> bytes, const std::string& kind) {
    ByteReader r(open_container(bytes, model_magic, model_format_version, "model"));
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.text(static_cast<std::size_t>(r.u64())));
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(std::string("model header is not valid JSON: ") + e.what());
    }
    if (meta.value("kind", "") != kind) {
        throw parse_error("kind", "expected a " + kind + " model, found '" + meta.value("kind", "") + "'");
    }
    nn::Mlp net = read_network(r);
    if (r.remaining() != 0) throw corruption_error("model file has trailing bytes");
    return {std::move(meta), std::move(net)};
}

inline std::string model_kind(std::span<const std::byte> bytes) {
    ByteReader r(open_container(bytes, model_magic, model_format_version, "model"));
    try {
        return nlohmann::json::parse(r.text(static_cast<std::size_t>(r.u64()))).value("kind", "");
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(std::string("model header is not valid JSON: ") + e.what());
    }
}

}  // namespace detail

inline std::vector<std::byte> serialize(const TraceRegressor& m) {
    nlohmann::json meta = {{"kind", "trace_regressor"},
                           {"inputs", input_names},
                           {"ranges", detail::ranges_json(m.ranges_)},
                           {"time_grid_min", m.grid_},
                           {"baseline",
                            {{"kind", to_string(m.baseline_.kind)},
                             {"elements_per_layer", m.baseline_.elements_per_layer},
                             {"dt_s", m.baseline_.dt},
                             {"material", to_json(m.baseline_.materials)}}},
                           {"output_scale_C", m.scale_},
                           {"output_offset_C", m.offset_},
                           {"max_part_error_C", m.max_part_error_},
                           {"max_tool_error_C", m.max_tool_error_},
                           {"rms_error_C", m.rms_error_},
                           {"provenance", m.metadata_}};
    return detail::write_model(meta, m.net_);
}

inline TraceRegressor deserialize_regressor(std::span<const std::byte> bytes) {
    auto [meta, net] = detail::read_model(bytes, "trace_regressor");
    TraceRegressor m;
    try {
        m.ranges_ = detail::ranges_from_json(meta.at("ranges"));
        m.grid_ = meta.at("time_grid_min").get<std::vector<double>>();
        const auto& b = meta.at("baseline");
        m.baseline_.kind = baseline_from_string(b.at("kind").get<std::string>());
        m.baseline_.elements_per_layer = b.at("elements_per_layer").get<int>();
        m.baseline_.dt = b.at("dt_s").get<double>();
        m.baseline_.materials = load_material(b.at("material").dump());
        m.scale_ = meta.at("output_scale_C").get<double>();
        m.offset_ = meta.at("output_offset_C").get<std::vector<double>>();
        m.max_part_error_ = meta.at("max_part_error_C").get<double>();
        m.max_tool_error_ = meta.at("max_tool_error_C").get<double>();
        m.rms_error_ = meta.at("rms_error_C").get<double>();
        m.metadata_ = meta.at("provenance");
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(std::string("regressor header is incomplete: ") + e.what());
    }
    if (net.inputs() != static_cast<Eigen::Index>(input_count) ||
        net.outputs() != static_cast<Eigen::Index>(2 * m.grid_.size()) || m.offset_.size() != 2 * m.grid_.size()) {
        throw corruption_error("regressor network shape does not match its time grid");
    }
    m.net_ = std::move(net);
    return m;
}

inline std::vector<std::byte> serialize(const FeasibilityClassifier& m) {
    nlohmann::json meta = {{"kind", "feasibility_classifier"},
                           {"inputs", input_names},
                           {"outputs", {"P_pass", "P_fail"}},
                           {"ranges", detail::ranges_json(m.ranges_)},
                           {"specs", to_json(m.specs_)},
                           {"threshold", m.threshold_},
                           {"validation_accuracy", m.validation_accuracy_},
                           {"provenance", m.metadata_}};
    return detail::write_model(meta, m.net_);
}

inline FeasibilityClassifier deserialize_classifier(std::span<const std::byte> bytes) {
    auto [meta, net] = detail::read_model(bytes, "feasibility_classifier");
    FeasibilityClassifier m;
    try {
        m.ranges_ = detail::ranges_from_json(meta.at("ranges"));
        m.specs_ = specs_from_json(meta.at("specs"));
        m.threshold_ = meta.at("threshold").get<double>();
        m.validation_accuracy_ = meta.at("validation_accuracy").get<double>();
        m.metadata_ = meta.at("provenance");
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(std::string("classifier header is incomplete: ") + e.what());
    }
    if (net.inputs() != static_cast<Eigen::Index>(input_count) || net.outputs() != 2) {
        throw corruption_error("classifier network must map 8 inputs to 2 outputs");
    }
    m.net_ = std::move(net);
    return m;
}

inline void save_model(const TraceRegressor& m, const std::string& path) {
    detail::write_file_bytes(path, serialize(m));
}
inline void save_model(const FeasibilityClassifier& m, const std::string& path) {
    detail::write_file_bytes(path, serialize(m));
}

template <class Fn>
auto with_path(const std::string& path, Fn&& fn) {
    const auto bytes = detail::read_file_bytes(path);
    try {
        return fn(std::span<const std::byte>(bytes));
    } catch (const corruption_error& e) {
        throw corruption_error("'" + path + "': " + e.what());
    }
}

inline TraceRegressor load_regressor(const std::string& path) {
    return with_path(path, [](std::span<const std::byte> b) { return deserialize_regressor(b); });
}
inline FeasibilityClassifier load_classifier(const std::string& path) {
    return with_path(path, [](std::span<const std::byte> b) { return deserialize_classifier(b); });
}

// --- backend -------------------------------------------------------------------------

/// Regressor for traces and metrics, classifier for feasibility.
class SurrogateBackend final : public SimulationBackend {
public:
    SurrogateBackend(TraceRegressor regressor, FeasibilityClassifier classifier)
        : regressor_(std::move(regressor)), classifier_(std::move(classifier)) {}

    std::string name() const override { return "surrogate"; }

    using SimulationBackend::predict_traces;

    const TraceRegressor& regressor() const { return regressor_; }
    const FeasibilityClassifier& classifier() const { return classifier_; }

    /// Extrapolation warnings raised since construction (deduplicated).
    std::vector<std::string> warnings() const {
        const std::lock_guard lock(warnings_mutex_);
        return warnings_;
    }

    std::vector<Outcome<StackTraces>> predict_traces(std::span<const ThermalStack> stacks, const CureCycle& cycle,
                                                     double /*horizon_min*/) const override {
        std::vector<Outcome<StackTraces>> out(stacks.size());
        if (stacks.empty()) return out;
        try {
            auto p = regressor_.predict(stacks, cycle);
            note(p.warnings);
            for (std::size_t i = 0; i < stacks.size(); ++i) out[i].value = std::move(p.traces[i]);
        } catch (const std::exception& e) {
            for (auto& o : out) o.error = e.what();
        }
        return out;
    }

    std::vector<Outcome<CycleMetrics>> predict_metrics(std::span<const ThermalStack> stacks,
                                                       const CureCycle& cycle) const override {
        const auto traces = predict_traces(stacks, cycle);
        std::vector<Outcome<CycleMetrics>> out(stacks.size());
        for (std::size_t i = 0; i < stacks.size(); ++i) {
            if (!traces[i].ok()) {
                out[i].error = traces[i].error;
                continue;
            }
            const auto& part = traces[i].value->part_center;
            CycleMetrics m;
            m.max_part_temperature = *std::max_element(part.values.begin(), part.values.end());
            m.part_rate_at_final_hold = slope_at(part, cycle.final_hold_reached_at());
            out[i].value = m;
        }
        return out;
    }

    FeasibilityMatrix feasibility(std::span<const ThermalStack> stacks, std::span<const CureCycle> cycles,
                                  const ProcessSpecs& specs) const override {
        if (!(classifier_.specs() == specs)) {
            note({"classifier was trained for different process specs; using its training specs"});
        }
        std::vector<std::string> w;
        auto m = classifier_.classify(stacks, cycles, &w);
        note(w);
        return m;
    }

private:
    void note(const std::vector<std::string>& w) const {
        const std::lock_guard lock(warnings_mutex_);
        for (const auto& s : w) {
            if (warnings_.size() >= 100) return;
            if (std::find(warnings_.begin(), warnings_.end(), s) == warnings_.end()) warnings_.push_back(s);
        }
    }

    TraceRegressor regressor_;
    FeasibilityClassifier classifier_;
    mutable std::mutex warnings_mutex_;
    mutable std::vector<std::string> warnings_;
};

}  // namespace curekit
