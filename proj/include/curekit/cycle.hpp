#pragma once

/**
 * Cure cycles: piecewise-linear air temperature programs built from ramps and
 * dwells, followed by a cool-down ramp back to the start temperature.
 * Temperatures in °C, times in minutes, rates in °C/min (always magnitudes).
 */

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "curekit/error.hpp"

namespace curekit {

struct Ramp {
    double rate = 0.0;    ///< °C/min, magnitude
    double target = 0.0;  ///< °C

    bool operator==(const Ramp&) const = default;
};

struct Dwell {
    double duration = 0.0;  ///< min

    bool operator==(const Dwell&) const = default;
};

using Segment = std::variant<Ramp, Dwell>;

struct OneHoldParams {
    double rate = 0.0;
    double hold_temperature = 0.0;
    double hold_time = 0.0;
    double cooldown_rate = 0.0;
    double start = 20.0;

    bool operator==(const OneHoldParams&) const = default;
};

struct TwoHoldParams {
    double rate1 = 0.0;
    double rate2 = 0.0;
    double T1 = 0.0;
    double t1 = 0.0;
    double T2 = 0.0;
    double t2 = 0.0;
    double cooldown_rate = 0.0;
    double start = 20.0;

    bool operator==(const TwoHoldParams&) const = default;
};

inline constexpr double min_program_temperature = 20.0;
inline constexpr double max_program_temperature = 200.0;

class CureCycle {
public:
    CureCycle() = default;

    CureCycle(double start_temperature, std::vector<Segment> segments, double cooldown_rate)
        : start_(start_temperature), segments_(std::move(segments)), cooldown_rate_(cooldown_rate) {
        build();
    }

    double start_temperature() const { return start_; }
    double cooldown_rate() const { return cooldown_rate_; }
    const std::vector<Segment>& segments() const { return segments_; }

    /// Breakpoints of the piecewise-linear program (cool-down included).
    const std::vector<double>& knot_times() const { return knot_t_; }
    const std::vector<double>& knot_temperatures() const { return knot_T_; }

    double total_time() const { return knot_t_.back(); }

    /// Air temperature at time t (min); the start temperature outside the program.
    double air_temperature(double t) const {
        if (t <= 0.0 || t >= knot_t_.back()) {
            return t <= 0.0 ? knot_T_.front() : start_;
        }
        auto it = std::upper_bound(knot_t_.begin(), knot_t_.end(), t);
        const std::size_t hi = static_cast<std::size_t>(it - knot_t_.begin());
        const std::size_t lo = hi - 1;
        const double w = (t - knot_t_[lo]) / (knot_t_[hi] - knot_t_[lo]);
        return knot_T_[lo] + w * (knot_T_[hi] - knot_T_[lo]);
    }

    /// Temperature of the last dwell (the program maximum if there is no dwell).
    double final_hold_temperature() const {
        double level = *std::max_element(knot_T_.begin(), knot_T_.end());
        double current = start_;
        for (const auto& s : segments_) {
            if (const auto* r = std::get_if<Ramp>(&s)) {
                current = r->target;
            } else {
                level = current;
            }
        }
        return level;
    }

    /// First time (min) at which the air program reaches its final hold temperature.
    double final_hold_reached_at() const {
        const double level = final_hold_temperature();
        constexpr double eps = 1e-9;
        if (std::abs(knot_T_[0] - level) <= eps) return 0.0;
        for (std::size_t k = 0; k + 1 < knot_t_.size(); ++k) {
            const double a = knot_T_[k], b = knot_T_[k + 1];
            if (std::abs(b - level) <= eps) return knot_t_[k + 1];
            if ((a - level) * (b - level) < 0.0) {
                return knot_t_[k] + (level - a) / (b - a) * (knot_t_[k + 1] - knot_t_[k]);
            }
        }
        return knot_t_.back();
    }

    /// Parameters in two-hold form when the cycle was built by `one_hold` or `two_hold`.
    std::optional<TwoHoldParams> two_hold_params() const {
        if (const auto* p = std::get_if<TwoHoldParams>(&origin_)) return *p;
        if (const auto* p = std::get_if<OneHoldParams>(&origin_)) {
            return TwoHoldParams{p->rate, p->rate, p->hold_temperature, 0.0, p->hold_temperature,
                                 p->hold_time, p->cooldown_rate, p->start};
        }
        return std::nullopt;
    }

    const std::variant<std::monostate, OneHoldParams, TwoHoldParams>& origin() const { return origin_; }

    bool operator==(const CureCycle& o) const {
        return start_ == o.start_ && segments_ == o.segments_ && cooldown_rate_ == o.cooldown_rate_ &&
               origin_ == o.origin_;
    }

private:
    friend CureCycle one_hold(double, double, double, double, double);
    friend CureCycle two_hold(double, double, double, double, double, double, double, double);

    void build() {
        if (!std::isfinite(start_)) throw domain_error("cycle: start temperature must be finite");
        if (!(cooldown_rate_ > 0.0) || !std::isfinite(cooldown_rate_)) {
            throw domain_error("cycle: cool-down rate must be positive");
        }
        knot_t_ = {0.0};
        knot_T_ = {start_};
        double t = 0.0, T = start_;
        auto ramp_to = [&](double rate, double target) {
            const double duration = std::abs(target - T) / rate;
            if (duration > 0.0) {
                t += duration;
                T = target;
                knot_t_.push_back(t);
                knot_T_.push_back(T);
            }
        };
        for (const auto& s : segments_) {
            if (const auto* r = std::get_if<Ramp>(&s)) {
                if (!(r->rate > 0.0) || !std::isfinite(r->rate)) throw domain_error("cycle: ramp rates must be positive");
                if (!(r->target >= min_program_temperature && r->target <= max_program_temperature)) {
                    throw domain_error("cycle: ramp target " + std::to_string(r->target) + " outside [20, 200] °C");
                }
                ramp_to(r->rate, r->target);
            } else {
                const double d = std::get<Dwell>(s).duration;
                if (!(d >= 0.0) || !std::isfinite(d)) throw domain_error("cycle: dwell durations must be non-negative");
                if (d > 0.0) {
                    t += d;
                    knot_t_.push_back(t);
                    knot_T_.push_back(T);
                }
            }
        }
        ramp_to(cooldown_rate_, start_);
    }

    double start_ = 20.0;
    std::vector<Segment> segments_;
    double cooldown_rate_ = 1.0;
    std::variant<std::monostate, OneHoldParams, TwoHoldParams> origin_;
    std::vector<double> knot_t_{0.0};
    std::vector<double> knot_T_{20.0};
};

/// ramp -> T1, dwell t1, ramp -> T2, dwell t2, cool to start.
inline CureCycle two_hold(double rate1, double rate2, double T1, double t1, double T2, double t2,
                          double cooldown_rate, double start = 20.0) {
    CureCycle c(start, {Ramp{rate1, T1}, Dwell{t1}, Ramp{rate2, T2}, Dwell{t2}}, cooldown_rate);
    c.origin_ = TwoHoldParams{rate1, rate2, T1, t1, T2, t2, cooldown_rate, start};
    return c;
}

inline CureCycle two_hold(const TwoHoldParams& p) {
    return two_hold(p.rate1, p.rate2, p.T1, p.t1, p.T2, p.t2, p.cooldown_rate, p.start);
}

inline CureCycle one_hold(double rate, double hold_temperature, double hold_time, double cooldown_rate,
                          double start = 20.0) {
    CureCycle c(start, {Ramp{rate, hold_temperature}, Dwell{hold_time}}, cooldown_rate);
    c.origin_ = OneHoldParams{rate, hold_temperature, hold_time, cooldown_rate, start};
    return c;
}

inline double air_temperature(const CureCycle& cycle, double t_min) { return cycle.air_temperature(t_min); }

/// Sum of all ramp and dwell durations, cool-down included.
inline double total_time(const CureCycle& cycle) { return cycle.total_time(); }

struct ProcessSpecs {
    double max_part_temperature_limit = 185.0;  ///< °C
    double rate_lower = 1.0;                    ///< °C/min
    double rate_upper = 3.0;                    ///< °C/min

    bool operator==(const ProcessSpecs&) const = default;
};

inline void validate(const ProcessSpecs& s) {
    if (!(s.rate_lower < s.rate_upper)) throw validation_error("specs: rate_lower must be below rate_upper");
}

struct CycleMetrics {
    double max_part_temperature = 0.0;     ///< °C
    double part_rate_at_final_hold = 0.0;  ///< °C/min

    bool operator==(const CycleMetrics&) const = default;
};

enum class SpecViolation { max_part_temperature, rate_lower, rate_upper };

inline const char* to_string(SpecViolation v) {
    switch (v) {
        case SpecViolation::max_part_temperature: return "max_part_temperature";
        case SpecViolation::rate_lower: return "rate_lower";
        case SpecViolation::rate_upper: return "rate_upper";
    }
    return "?";
}

struct SpecCheck {
    bool pass = true;
    std::vector<SpecViolation> violations;
};

/// Strict inequalities: ties fail. Non-finite metrics fail every affected bound.
inline SpecCheck check_specs(const CycleMetrics& m, const ProcessSpecs& s) {
    SpecCheck r;
    if (!(m.max_part_temperature < s.max_part_temperature_limit)) {
        r.violations.push_back(SpecViolation::max_part_temperature);
    }
    if (!(m.part_rate_at_final_hold > s.rate_lower)) r.violations.push_back(SpecViolation::rate_lower);
    if (!(m.part_rate_at_final_hold < s.rate_upper)) r.violations.push_back(SpecViolation::rate_upper);
    r.pass = r.violations.empty();
    return r;
}

// --- serialization -------------------------------------------------------------

inline nlohmann::json to_json(const CureCycle& c) {
    if (const auto* p = std::get_if<TwoHoldParams>(&c.origin())) {
        return {{"type", "two_hold"},       {"rate1_C_per_min", p->rate1}, {"rate2_C_per_min", p->rate2},
                {"T1_C", p->T1},            {"t1_min", p->t1},             {"T2_C", p->T2},
                {"t2_min", p->t2},          {"cooldown_C_per_min", p->cooldown_rate},
                {"start_C", p->start}};
    }
    if (const auto* p = std::get_if<OneHoldParams>(&c.origin())) {
        return {{"type", "one_hold"},
                {"rate_C_per_min", p->rate},
                {"hold_C", p->hold_temperature},
                {"hold_min", p->hold_time},
                {"cooldown_C_per_min", p->cooldown_rate},
                {"start_C", p->start}};
    }
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : c.segments()) {
        if (const auto* r = std::get_if<Ramp>(&s)) {
            segs.push_back({{"ramp", {{"rate_C_per_min", r->rate}, {"target_C", r->target}}}});
        } else {
            segs.push_back({{"dwell_min", std::get<Dwell>(s).duration}});
        }
    }
    return {{"type", "segments"},
            {"start_C", c.start_temperature()},
            {"cooldown_C_per_min", c.cooldown_rate()},
            {"segments", segs}};
}

namespace detail {
inline double number_at(const nlohmann::json& j, const char* key, const std::string& path) {
    if (!j.contains(key)) throw parse_error(path + "." + key, "missing required key");
    if (!j.at(key).is_number()) throw parse_error(path + "." + key, "expected a number");
    return j.at(key).get<double>();
}
}  // namespace detail

inline CureCycle cycle_from_json(const nlohmann::json& j, const std::string& path = "cycle") {
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        throw parse_error(path + ".type", "missing cycle type");
    }
    const auto type = j.at("type").get<std::string>();
    using detail::number_at;
    if (type == "two_hold") {
        return two_hold(number_at(j, "rate1_C_per_min", path), number_at(j, "rate2_C_per_min", path),
                        number_at(j, "T1_C", path), number_at(j, "t1_min", path), number_at(j, "T2_C", path),
                        number_at(j, "t2_min", path), number_at(j, "cooldown_C_per_min", path),
                        number_at(j, "start_C", path));
    }
    if (type == "one_hold") {
        return one_hold(number_at(j, "rate_C_per_min", path), number_at(j, "hold_C", path),
                        number_at(j, "hold_min", path), number_at(j, "cooldown_C_per_min", path),
                        number_at(j, "start_C", path));
    }
    if (type == "segments") {
        std::vector<Segment> segs;
        if (!j.contains("segments") || !j.at("segments").is_array()) {
            throw parse_error(path + ".segments", "expected an array");
        }
        for (std::size_t i = 0; i < j.at("segments").size(); ++i) {
            const auto& s = j.at("segments")[i];
            const std::string sp = path + ".segments[" + std::to_string(i) + "]";
            if (s.contains("ramp")) {
                segs.push_back(Ramp{number_at(s.at("ramp"), "rate_C_per_min", sp + ".ramp"),
                                    number_at(s.at("ramp"), "target_C", sp + ".ramp")});
            } else {
                segs.push_back(Dwell{number_at(s, "dwell_min", sp)});
            }
        }
        return CureCycle(number_at(j, "start_C", path), std::move(segs), number_at(j, "cooldown_C_per_min", path));
    }
    throw parse_error(path + ".type", "unknown cycle type '" + type + "'");
}

inline nlohmann::json to_json(const ProcessSpecs& s) {
    return {{"max_part_temperature_C", s.max_part_temperature_limit},
            {"rate_lower_C_per_min", s.rate_lower},
            {"rate_upper_C_per_min", s.rate_upper}};
}

inline ProcessSpecs specs_from_json(const nlohmann::json& j, const std::string& path = "specs") {
    ProcessSpecs s{detail::number_at(j, "max_part_temperature_C", path), detail::number_at(j, "rate_lower_C_per_min", path),
                   detail::number_at(j, "rate_upper_C_per_min", path)};
    validate(s);
    return s;
}

}  // namespace curekit
