#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "kru/errors.hpp"

namespace kru {

enum class ActKind { relu, leaky_relu, tanh, sigmoid, repu };

/// Scalar activation with the metadata the theory cares about: a Lipschitz
/// bound (absent for RePU with power parameter m > 2) and degree-1 positive
/// homogeneity. Derivatives at kinks use the left derivative, so sigma'(0) = 0
/// for relu/repu and lambda for leaky_relu; any deterministic subgradient
/// choice works for the local search that consumes these.
struct Activation {
    ActKind kind = ActKind::relu;
    double param = 0.0;  // slope lambda for leaky_relu, integer power m for repu

    static Activation relu() { return {ActKind::relu, 0.0}; }

    static Activation leaky_relu(double lambda) {
        if (!(lambda > 0.0) || !(lambda < 1.0))
            throw InvalidParameter("leaky_relu: slope must lie in (0, 1)");
        return {ActKind::leaky_relu, lambda};
    }

    static Activation tanh() { return {ActKind::tanh, 0.0}; }
    static Activation sigmoid() { return {ActKind::sigmoid, 0.0}; }

    static Activation repu(int m) {
        if (m < 2) throw InvalidParameter("repu: power parameter must be an integer >= 2");
        return {ActKind::repu, static_cast<double>(m)};
    }

    double value(double t) const {
        switch (kind) {
            case ActKind::relu: return t > 0.0 ? t : 0.0;
            case ActKind::leaky_relu: return t > 0.0 ? t : param * t;
            case ActKind::tanh: return std::tanh(t);
            case ActKind::sigmoid: return 1.0 / (1.0 + std::exp(-t));
            case ActKind::repu: return t > 0.0 ? std::pow(t, param - 1.0) : 0.0;
        }
        return 0.0;
    }

    double derivative(double t) const {
        switch (kind) {
            case ActKind::relu: return t > 0.0 ? 1.0 : 0.0;
            case ActKind::leaky_relu: return t > 0.0 ? 1.0 : param;
            case ActKind::tanh: {
                const double v = std::tanh(t);
                return 1.0 - v * v;
            }
            case ActKind::sigmoid: {
                const double v = 1.0 / (1.0 + std::exp(-t));
                return v * (1.0 - v);
            }
            case ActKind::repu:
                return t > 0.0 ? (param - 1.0) * std::pow(t, param - 2.0) : 0.0;
        }
        return 0.0;
    }

    std::optional<double> lipschitz_constant() const {
        switch (kind) {
            case ActKind::relu: return 1.0;
            case ActKind::leaky_relu: return 1.0;
            case ActKind::tanh: return 1.0;
            case ActKind::sigmoid: return 0.25;
            case ActKind::repu: return param == 2.0 ? std::optional<double>(1.0) : std::nullopt;
        }
        return std::nullopt;
    }

    bool positively_homogeneous() const {
        return kind == ActKind::relu || kind == ActKind::leaky_relu ||
               (kind == ActKind::repu && param == 2.0);
    }

    std::string name() const {
        switch (kind) {
            case ActKind::relu: return "relu";
            case ActKind::leaky_relu: return "leaky_relu";
            case ActKind::tanh: return "tanh";
            case ActKind::sigmoid: return "sigmoid";
            case ActKind::repu: return "repu";
        }
        return "?";
    }
};

inline Activation activation_from_name(const std::string& name, double param) {
    if (name == "relu") return Activation::relu();
    if (name == "leaky_relu") return Activation::leaky_relu(param == 0.0 ? 0.1 : param);
    if (name == "tanh") return Activation::tanh();
    if (name == "sigmoid") return Activation::sigmoid();
    if (name == "repu") return Activation::repu(param == 0.0 ? 3 : static_cast<int>(param));
    throw InvalidParameter("unknown activation: " + name);
}

} // namespace kru
