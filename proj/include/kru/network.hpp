#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "kru/activation.hpp"
#include "kru/dataset.hpp"
#include "kru/measure.hpp"

namespace kru {

/// sigma(<theta, x>) for a lifted input x in R^{d+1}.
inline double feature_value(const Activation& act, const Vec& theta, const Vec& x_lifted) {
    return act.value(dot(theta, x_lifted));
}

/// Gradient in theta of sigma(<theta, x>): sigma'(<theta, x>) * x.
inline Vec feature_grad_theta(const Activation& act, const Vec& theta, const Vec& x_lifted) {
    const double slope = act.derivative(dot(theta, x_lifted));
    Vec g = x_lifted;
    for (double& v : g) v *= slope;
    return g;
}

/// Network realization at a lifted input: f_mu(x) = sum_i w_i sigma(<theta_i, x>).
inline double realize_lifted(const DiscreteMeasure& m, const Activation& act, const Vec& x_lifted) {
    if (x_lifted.size() != m.space().dimension)
        throw SpaceMismatch("realize: lifted input dimension does not match the measure space");
    double s = 0.0;
    for (const Atom& a : m.atoms()) s += a.weight * feature_value(act, a.location, x_lifted);
    return s;
}

/// Network realization at an unlifted input of length d (atoms live in R^{d+1}).
inline double realize(const DiscreteMeasure& m, const Activation& act, const Vec& x) {
    return realize_lifted(m, act, lift(x));
}

inline std::vector<double> realize_batch(const DiscreteMeasure& m, const Activation& act,
                                         const Dataset& data) {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = realize(m, act, data.inputs[i]);
    return out;
}

/// Deterministic low-discrepancy grid (Halton) in the closed input ball of
/// radius R in R^d, unlifted. d = 0 yields the single empty point.
inline std::vector<Vec> ball_grid(std::size_t d, double R, std::size_t count) {
    if (!(R > 0.0)) throw InvalidParameter("ball_grid: radius must be positive");
    if (count == 0) throw InvalidParameter("ball_grid: grid size must be positive");
    if (d == 0) return {Vec{}};
    static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    if (d > sizeof(primes) / sizeof(primes[0]))
        throw InvalidParameter("ball_grid: input dimension too large for the Halton bases");
    auto halton = [](std::size_t index, int base) {
        double f = 1.0, r = 0.0;
        for (std::size_t i = index; i > 0; i /= base) {
            f /= base;
            r += f * static_cast<double>(i % base);
        }
        return r;
    };
    std::vector<Vec> grid;
    grid.push_back(Vec(d, 0.0));  // include the center
    for (std::size_t index = 1; grid.size() < count; ++index) {
        Vec x(d);
        double nrm2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            x[c] = R * (2.0 * halton(index, primes[c]) - 1.0);
            nrm2 += x[c] * x[c];
        }
        if (nrm2 <= R * R) grid.push_back(std::move(x));
    }
    return grid;
}

/// Max over a deterministic grid in the radius-R input ball of |f_m - f_n|.
inline double uniform_error(const DiscreteMeasure& m, const DiscreteMeasure& n,
                            const Activation& act, double R, std::size_t grid_size) {
    require_same_space(m.space(), n.space(), "uniform_error");
    if (!act.lipschitz_constant())
        throw InvalidParameter("uniform_error: requires a Lipschitz activation");
    if (m.space().dimension == 0) throw InvalidParameter("uniform_error: empty space");
    const std::size_t d = m.space().dimension - 1;
    double worst = 0.0;
    for (const Vec& x : ball_grid(d, R, grid_size)) {
        const Vec z = lift(x);
        worst = std::max(worst, std::abs(realize_lifted(m, act, z) - realize_lifted(n, act, z)));
    }
    return worst;
}

/// T(mu): atom weights multiplied by (1 + d(theta, e)^p). Carries measures with
/// finite p-moments onto plain TV-normed measures; tv_norm(T(mu)) equals
/// tv_norm(mu) + p_moment(mu, p).
inline DiscreteMeasure moment_map(const DiscreteMeasure& m, double p) {
    if (!(p > 0.0)) throw InvalidParameter("moment_map: p must be positive");
    std::vector<Atom> atoms = m.atoms();
    for (Atom& a : atoms)
        a.weight *= 1.0 + std::pow(m.space().distance_to_base(a.location), p);
    return DiscreteMeasure(m.space(), std::move(atoms));
}

inline DiscreteMeasure moment_map_inverse(const DiscreteMeasure& n, double p) {
    if (!(p > 0.0)) throw InvalidParameter("moment_map_inverse: p must be positive");
    std::vector<Atom> atoms = n.atoms();
    for (Atom& a : atoms)
        a.weight /= 1.0 + std::pow(n.space().distance_to_base(a.location), p);
    return DiscreteMeasure(n.space(), std::move(atoms));
}

} // namespace kru
