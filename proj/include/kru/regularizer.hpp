#pragma once

#include <cmath>
#include <string>

#include "kru/errors.hpp"
#include "kru/measure.hpp"
#include "kru/transport.hpp"

namespace kru {

enum class RegMode { kru_moment, weighted_tv };

/// Parameters of the three-term penalty
///   G_{alpha,beta}(mu) = alpha ||mu||_KRu + beta (||mu||_TV + p-moment(mu)).
/// weighted_tv mode swaps the moment exponent for q, i.e. the beta term becomes
/// beta * sum_i |w_i| (1 + d(theta_i, e)^q); with q = p and alpha = 0 the two
/// modes coincide.
struct RegParams {
    double alpha = 0.0;
    double beta = 1.0;
    double p = 2.0;
    RegMode mode = RegMode::kru_moment;
    double q = 2.0;  // weighted_tv moment exponent

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw InvalidParameter("RegParams: alpha must be >= 0");
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw InvalidParameter("RegParams: beta must be > 0");
        if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidParameter("RegParams: p must be >= 1");
        if (mode == RegMode::weighted_tv && (!(q > 0.0) || !std::isfinite(q)))
            throw InvalidParameter("RegParams: q must be > 0 in weighted_tv mode");
    }

    /// Exponent actually used in the per-atom weight 1 + d(theta, e)^exponent.
    double moment_exponent() const { return mode == RegMode::kru_moment ? p : q; }
};

/// G_{alpha,beta}(m) in the split form alpha * KRu + beta * (TV + moment).
inline double g_alpha_beta(const DiscreteMeasure& m, const RegParams& params) {
    params.validate();
    const double moment = p_moment(m, params.moment_exponent());
    const double kru_part = params.alpha > 0.0 ? params.alpha * kru_norm(m) : 0.0;
    return kru_part + params.beta * (tv_norm(m) + moment);
}

/// Dual-weighted TV norm: sum_i |w_i| (1 + d(theta_i, e)^q).
inline double weighted_dual_norm(const DiscreteMeasure& m, double q) {
    if (!(q > 0.0)) throw InvalidParameter("weighted_dual_norm: q must be positive");
    return tv_norm(m) + p_moment(m, q);
}

/// Normalizing weight a > 0 of the extremal combination
///   a delta_x - a delta_y + c delta_e,   |c| = c_abs,
/// solving 1 = alpha (a d(x,y) + c_abs) + beta (a (2 + d(x,e)^p + d(y,e)^p) + c_abs).
/// With x == y the dipole cancels and the equation forces (alpha+beta) c_abs = 1
/// (pure base atom); a is then 0 by convention.
inline double extremal_dipole_scale(const Vec& x, const Vec& y, double c_abs,
                                    const PointedSpace& space, const RegParams& params) {
    params.validate();
    if (!(c_abs >= 0.0)) throw InvalidParameter("extremal_dipole_scale: c_abs must be >= 0");
    const double p = params.moment_exponent();
    const double dxy = space.distance(x, y);
    if (dxy == 0.0) {
        if (c_abs == 0.0)
            throw DegenerateExtremal("extremal_dipole_scale: x == y with no base mass");
        if (std::abs((params.alpha + params.beta) * c_abs - 1.0) > 1e-10)
            throw DegenerateExtremal(
                "extremal_dipole_scale: collapsed dipole with base mass off the unit sphere");
        return 0.0;
    }
    const double wx = 1.0 + std::pow(space.distance_to_base(x), p);
    const double wy = 1.0 + std::pow(space.distance_to_base(y), p);
    const double denom = params.alpha * dxy + params.beta * (wx + wy);
    const double numer = 1.0 - c_abs * (params.alpha + params.beta);
    if (!(denom > 0.0) || !(numer > 0.0))
        throw DegenerateExtremal("extremal_dipole_scale: no positive normalizing weight");
    return numer / denom;
}

} // namespace kru
