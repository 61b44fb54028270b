#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kru/errors.hpp"
#include "kru/measure.hpp"

namespace kru {

using Json = nlohmann::ordered_json;

/// Schema:
/// { "dimension": D, "base_point": [..D..], "metric_exponent": s,
///   "atoms": [ {"location": [..D..], "weight": w}, ... ] }
inline Json measure_to_json(const DiscreteMeasure& m) {
    Json j;
    j["dimension"] = m.space().dimension;
    j["base_point"] = m.space().base_point;
    j["metric_exponent"] = m.space().metric_exponent;
    Json atoms = Json::array();
    for (const Atom& a : m.atoms()) {
        Json ja;
        ja["location"] = a.location;
        ja["weight"] = a.weight;
        atoms.push_back(std::move(ja));
    }
    j["atoms"] = std::move(atoms);
    return j;
}

inline DiscreteMeasure measure_from_json(const Json& j) {
    try {
        const auto dim = j.at("dimension").get<std::size_t>();
        Vec base = j.contains("base_point") ? j.at("base_point").get<Vec>() : Vec(dim, 0.0);
        const double s = j.contains("metric_exponent") ? j.at("metric_exponent").get<double>() : 1.0;
        PointedSpace space(dim, std::move(base), s);
        std::vector<Atom> atoms;
        for (const Json& ja : j.at("atoms")) {
            Atom a;
            a.location = ja.at("location").get<Vec>();
            a.weight = ja.at("weight").get<double>();
            atoms.push_back(std::move(a));
        }
        return DiscreteMeasure(std::move(space), std::move(atoms));
    } catch (const Json::exception& e) {
        throw InvalidMeasure(std::string("malformed measure JSON: ") + e.what());
    }
}

/// Atomic write: the content lands under a temporary name first and is renamed
/// into place, so a crash never leaves a half-written file at `path`.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidParameter("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw InvalidParameter("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline void write_measure_json(const std::filesystem::path& path, const DiscreteMeasure& m) {
    write_text_atomic(path, measure_to_json(m).dump(2) + "\n");
}

inline DiscreteMeasure read_measure_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidParameter("cannot open measure file: " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw InvalidMeasure("cannot parse " + path.string() + ": " + e.what());
    }
    return measure_from_json(j);
}

} // namespace kru
