#pragma once

/**
 * Material models for the composite part and the tool.
 *
 * The part carries an autocatalytic cure-kinetics law with a sigmoidal
 * diffusion factor:
 *
 *   dα/dt = K exp(-E / (R T)) α^m (1 - α)^n / (1 + exp(C (α - (αC0 + αCT T))))
 *
 * Only the functional form lives in code; every constant comes from the
 * material document (see docs/material-schema.md).
 */

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "curekit/binary_io.hpp"
#include "curekit/error.hpp"

namespace curekit {

inline constexpr double gas_constant = 8.314462618;  // J/(mol K)
inline constexpr double kelvin_offset = 273.15;

struct ThermalProperties {
    double density = 0.0;                         ///< kg/m^3
    double specific_heat = 0.0;                   ///< J/(kg K)
    double conductivity_through_thickness = 0.0;  ///< W/(m K)

    double volumetric_heat_capacity() const { return density * specific_heat; }
};

struct RateConstants {
    double pre_exponential = 0.0;    ///< K, 1/s
    double activation_energy = 0.0;  ///< E, J/mol
    double m = 0.0;                  ///< autocatalytic order
    double n = 0.0;                  ///< reaction order in (1 - α)
    double diffusion_C = 0.0;        ///< sharpness of the diffusion factor
    double alpha_C0 = 0.0;           ///< critical degree of cure at 0 K
    double alpha_CT = 0.0;           ///< temperature slope of the critical degree of cure, 1/K
};

struct CureKinetics {
    double total_heat_of_reaction = 0.0;  ///< J per kg of composite
    RateConstants rate_constants;
    double initial_degree_of_cure = 0.01;
};

struct PartMaterial {
    ThermalProperties thermal;
    CureKinetics kinetics;
};

/// Part and tool properties; the tool has no heat source.
struct MaterialPair {
    std::string name;
    PartMaterial part;
    ThermalProperties tool;
};

namespace detail {

/// Rate law without argument checks; the solver calls this in its inner loop.
inline double cure_rate_unchecked(double alpha, double temperature_k, const RateConstants& c) noexcept {
    if (alpha >= 1.0) {
        return 0.0;
    }
    const double arrhenius = c.pre_exponential * std::exp(-c.activation_energy / (gas_constant * temperature_k));
    const double order = std::pow(alpha, c.m) * std::pow(1.0 - alpha, c.n);
    const double diffusion = 1.0 / (1.0 + std::exp(c.diffusion_C * (alpha - (c.alpha_C0 + c.alpha_CT * temperature_k))));
    return arrhenius * order * diffusion;
}

}  // namespace detail

/// Degree-of-cure rate dα/dt in 1/s at temperature `temperature_k` (kelvin).
inline double cure_rate(double alpha, double temperature_k, const CureKinetics& kinetics) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw domain_error("cure_rate: degree of cure " + std::to_string(alpha) + " outside [0, 1]");
    }
    if (!(temperature_k > 0.0)) {
        throw domain_error("cure_rate: temperature must be positive kelvin, got " + std::to_string(temperature_k));
    }
    return detail::cure_rate_unchecked(alpha, temperature_k, kinetics.rate_constants);
}

/// Volumetric heat release rate in W/m^3 for a given cure rate.
inline double heat_generation(double cure_rate_per_s, const PartMaterial& part) {
    return part.thermal.density * part.kinetics.total_heat_of_reaction * cure_rate_per_s;
}

inline void validate(const ThermalProperties& p, std::string_view where) {
    auto positive = [&](double v, const char* field) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw validation_error(std::string(where) + ": " + field + " must be positive");
        }
    };
    positive(p.density, "density");
    positive(p.specific_heat, "specific_heat");
    positive(p.conductivity_through_thickness, "conductivity_through_thickness");
}

inline void validate(const CureKinetics& k, std::string_view where) {
    const auto& c = k.rate_constants;
    auto non_negative = [&](double v, const char* field) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw validation_error(std::string(where) + ": " + field + " must be non-negative");
        }
    };
    non_negative(k.total_heat_of_reaction, "total_heat_of_reaction");
    non_negative(c.pre_exponential, "pre_exponential");
    non_negative(c.activation_energy, "activation_energy");
    non_negative(c.m, "m");
    non_negative(c.n, "n");
    if (!std::isfinite(c.diffusion_C) || !std::isfinite(c.alpha_C0) || !std::isfinite(c.alpha_CT)) {
        throw validation_error(std::string(where) + ": diffusion constants must be finite");
    }
    if (!(k.initial_degree_of_cure >= 0.0 && k.initial_degree_of_cure < 1.0)) {
        throw validation_error(std::string(where) + ": initial_degree_of_cure must lie in [0, 1)");
    }
    // Coarse scan of the operating envelope; the rate must stay finite and non-negative.
    for (int i = 0; i <= 40; ++i) {
        for (int j = 0; j <= 35; ++j) {
            const double alpha = i / 40.0;
            const double temperature = 250.0 + 10.0 * j;
            const double r = detail::cure_rate_unchecked(alpha, temperature, c);
            if (!std::isfinite(r) || r < 0.0) {
                throw validation_error(std::string(where) + ": cure rate is not finite and non-negative at alpha=" +
                                       std::to_string(alpha) + ", T=" + std::to_string(temperature) + " K");
            }
        }
    }
}

inline void validate(const MaterialPair& m) {
    validate(m.part.thermal, "part.thermal");
    validate(m.part.kinetics, "part.kinetics");
    validate(m.tool, "tool.thermal");
}

namespace detail {

inline double read_quantity(const nlohmann::json& section, const std::string& path, const char* key,
                            std::string_view unit) {
    const std::string key_path = path + "." + key;
    if (!section.is_object() || !section.contains(key)) {
        throw parse_error(key_path, "missing required key");
    }
    const auto& entry = section.at(key);
    if (!entry.is_object() || !entry.contains("value") || !entry.contains("unit")) {
        throw parse_error(key_path, "expected an object with \"value\" and \"unit\"");
    }
    if (!entry.at("value").is_number()) {
        throw parse_error(key_path + ".value", "expected a number");
    }
    if (!entry.at("unit").is_string() || entry.at("unit").get<std::string>() != unit) {
        throw parse_error(key_path + ".unit", "expected unit \"" + std::string(unit) + "\"");
    }
    return entry.at("value").get<double>();
}

inline const nlohmann::json& read_section(const nlohmann::json& doc, const std::string& parent, const char* key) {
    if (!doc.is_object() || !doc.contains(key) || !doc.at(key).is_object()) {
        throw parse_error(parent.empty() ? key : parent + "." + key, "missing required section");
    }
    return doc.at(key);
}

inline ThermalProperties read_thermal(const nlohmann::json& s, const std::string& path) {
    ThermalProperties p;
    p.density = read_quantity(s, path, "density", "kg/m^3");
    p.specific_heat = read_quantity(s, path, "specific_heat", "J/(kg*K)");
    p.conductivity_through_thickness = read_quantity(s, path, "conductivity_through_thickness", "W/(m*K)");
    return p;
}

inline nlohmann::json quantity(double v, std::string_view unit) {
    return {{"value", v}, {"unit", unit}};
}

inline nlohmann::json thermal_json(const ThermalProperties& p) {
    return {{"density", quantity(p.density, "kg/m^3")},
            {"specific_heat", quantity(p.specific_heat, "J/(kg*K)")},
            {"conductivity_through_thickness", quantity(p.conductivity_through_thickness, "W/(m*K)")}};
}

}  // namespace detail

/// Parses and validates a material document (JSON text).
inline MaterialPair load_material(std::string_view config_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(config_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error("", std::string("malformed material document: ") + e.what());
    }
    MaterialPair m;
    if (doc.contains("name") && doc.at("name").is_string()) {
        m.name = doc.at("name").get<std::string>();
    }
    const auto& part = detail::read_section(doc, "", "part");
    m.part.thermal = detail::read_thermal(detail::read_section(part, "part", "thermal"), "part.thermal");

    const auto& kin = detail::read_section(part, "part", "kinetics");
    auto& k = m.part.kinetics;
    k.total_heat_of_reaction = detail::read_quantity(kin, "part.kinetics", "total_heat_of_reaction", "J/kg");
    if (kin.contains("initial_degree_of_cure")) {
        k.initial_degree_of_cure = detail::read_quantity(kin, "part.kinetics", "initial_degree_of_cure", "1");
    }
    const auto& rc = detail::read_section(kin, "part.kinetics", "rate_constants");
    const std::string rc_path = "part.kinetics.rate_constants";
    k.rate_constants.pre_exponential = detail::read_quantity(rc, rc_path, "pre_exponential", "1/s");
    k.rate_constants.activation_energy = detail::read_quantity(rc, rc_path, "activation_energy", "J/mol");
    k.rate_constants.m = detail::read_quantity(rc, rc_path, "m", "1");
    k.rate_constants.n = detail::read_quantity(rc, rc_path, "n", "1");
    k.rate_constants.diffusion_C = detail::read_quantity(rc, rc_path, "diffusion_C", "1");
    k.rate_constants.alpha_C0 = detail::read_quantity(rc, rc_path, "alpha_C0", "1");
    k.rate_constants.alpha_CT = detail::read_quantity(rc, rc_path, "alpha_CT", "1/K");

    const auto& tool = detail::read_section(doc, "", "tool");
    m.tool = detail::read_thermal(detail::read_section(tool, "tool", "thermal"), "tool.thermal");

    validate(m);
    return m;
}

inline MaterialPair load_material_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open material file " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_material(ss.str());
}

inline nlohmann::json to_json(const MaterialPair& m) {
    const auto& k = m.part.kinetics;
    const auto& c = k.rate_constants;
    nlohmann::json rc = {{"pre_exponential", detail::quantity(c.pre_exponential, "1/s")},
                         {"activation_energy", detail::quantity(c.activation_energy, "J/mol")},
                         {"m", detail::quantity(c.m, "1")},
                         {"n", detail::quantity(c.n, "1")},
                         {"diffusion_C", detail::quantity(c.diffusion_C, "1")},
                         {"alpha_C0", detail::quantity(c.alpha_C0, "1")},
                         {"alpha_CT", detail::quantity(c.alpha_CT, "1/K")}};
    return {{"name", m.name},
            {"part",
             {{"thermal", detail::thermal_json(m.part.thermal)},
              {"kinetics",
               {{"total_heat_of_reaction", detail::quantity(k.total_heat_of_reaction, "J/kg")},
                {"initial_degree_of_cure", detail::quantity(k.initial_degree_of_cure, "1")},
                {"rate_constants", rc}}}}},
            {"tool", {{"thermal", detail::thermal_json(m.tool)}}}};
}

/// Fingerprint of the numeric content, stored in dataset provenance.
inline std::string material_hash(const MaterialPair& m) {
    const std::string canonical = to_json(m).dump();
    return hex32(crc32(std::as_bytes(std::span(canonical.data(), canonical.size()))));
}

/// Test fixture shipped with the repository (also at data/reference-thermoset.json).
/// The constants are chosen to give a pronounced exotherm in thick parts; they are
/// not a characterization of any commercial prepreg.
inline constexpr std::string_view reference_thermoset_json = R"json({
  "name": "reference-thermoset",
  "part": {
    "thermal": {
      "density": {"value": 1580.0, "unit": "kg/m^3"},
      "specific_heat": {"value": 1100.0, "unit": "J/(kg*K)"},
      "conductivity_through_thickness": {"value": 0.5, "unit": "W/(m*K)"}
    },
    "kinetics": {
      "total_heat_of_reaction": {"value": 200000.0, "unit": "J/kg"},
      "initial_degree_of_cure": {"value": 0.01, "unit": "1"},
      "rate_constants": {
        "pre_exponential": {"value": 153000.0, "unit": "1/s"},
        "activation_energy": {"value": 66500.0, "unit": "J/mol"},
        "m": {"value": 0.81, "unit": "1"},
        "n": {"value": 2.74, "unit": "1"},
        "diffusion_C": {"value": 43.1, "unit": "1"},
        "alpha_C0": {"value": -1.684, "unit": "1"},
        "alpha_CT": {"value": 0.005475, "unit": "1/K"}
      }
    }
  },
  "tool": {
    "thermal": {
      "density": {"value": 8100.0, "unit": "kg/m^3"},
      "specific_heat": {"value": 515.0, "unit": "J/(kg*K)"},
      "conductivity_through_thickness": {"value": 10.4, "unit": "W/(m*K)"}
    }
  }
})json";

inline MaterialPair reference_thermoset() { return load_material(reference_thermoset_json); }

}  // namespace curekit
