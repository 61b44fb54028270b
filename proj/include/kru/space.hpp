#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kru/errors.hpp"

namespace kru {

using Vec = std::vector<double>;

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double sq_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Parameter domain: R^D with a distinguished base point and the metric
/// d(a, b) = ||a - b||_2^s for a snowflake exponent s in (0, 1].
struct PointedSpace {
    std::size_t dimension = 0;
    Vec base_point;                // canonically the origin
    double metric_exponent = 1.0;  // s

    PointedSpace() = default;

    PointedSpace(std::size_t dim, Vec base, double exponent)
        : dimension(dim), base_point(std::move(base)), metric_exponent(exponent) {
        if (base_point.empty()) base_point.assign(dimension, 0.0);
        if (base_point.size() != dimension)
            throw InvalidParameter("PointedSpace: base point has dimension " +
                                   std::to_string(base_point.size()) + ", expected " +
                                   std::to_string(dimension));
        if (!all_finite(base_point))
            throw InvalidParameter("PointedSpace: base point has non-finite coordinates");
        if (!(metric_exponent > 0.0) || metric_exponent > 1.0)
            throw InvalidParameter("PointedSpace: metric exponent must lie in (0, 1]");
    }

    /// Euclidean R^D with base point at the origin and s = 1.
    static PointedSpace euclidean(std::size_t dim, double exponent = 1.0) {
        return PointedSpace(dim, Vec(dim, 0.0), exponent);
    }

    double distance(const Vec& a, const Vec& b) const {
        double s2 = 0.0;
        for (std::size_t i = 0; i < dimension; ++i) {
            const double t = a[i] - b[i];
            s2 += t * t;
        }
        const double euclid = std::sqrt(s2);
        return metric_exponent == 1.0 ? euclid : std::pow(euclid, metric_exponent);
    }

    double distance_to_base(const Vec& a) const { return distance(a, base_point); }

    bool same_as(const PointedSpace& other) const {
        return dimension == other.dimension && metric_exponent == other.metric_exponent &&
               base_point == other.base_point;
    }
};

inline void require_same_space(const PointedSpace& a, const PointedSpace& b, const char* where) {
    if (!a.same_as(b))
        throw SpaceMismatch(std::string(where) + ": operands live on different pointed spaces");
}

} // namespace kru
