#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "kru/errors.hpp"
#include "kru/space.hpp"

namespace kru {

struct Atom {
    Vec location;
    double weight = 0.0;
};

inline bool lex_less(const Vec& a, const Vec& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// Finite signed atomic measure mu = sum_i w_i delta_{theta_i} on a PointedSpace.
/// Always canonical: atoms sorted lexicographically by location, locations unique,
/// no zero weights. Instances are immutable; operations return new measures.
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;

    DiscreteMeasure(PointedSpace space, std::vector<Atom> atoms)
        : space_(std::move(space)), atoms_(std::move(atoms)) {
        canonicalize_in_place();
    }

    static DiscreteMeasure empty(PointedSpace space) { return DiscreteMeasure(std::move(space), {}); }

    /// Single atom w * delta_theta.
    static DiscreteMeasure dirac(PointedSpace space, Vec theta, double w) {
        return DiscreteMeasure(std::move(space), {Atom{std::move(theta), w}});
    }

    const PointedSpace& space() const { return space_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }
    bool is_empty() const { return atoms_.empty(); }

private:
    void canonicalize_in_place() {
        for (const Atom& a : atoms_) {
            if (a.location.size() != space_.dimension)
                throw InvalidMeasure("measure atom has dimension " +
                                     std::to_string(a.location.size()) + ", expected " +
                                     std::to_string(space_.dimension));
            if (!all_finite(a.location) || !std::isfinite(a.weight))
                throw InvalidMeasure("measure atom has non-finite location or weight");
        }
        std::sort(atoms_.begin(), atoms_.end(),
                  [](const Atom& a, const Atom& b) { return lex_less(a.location, b.location); });
        std::vector<Atom> merged;
        merged.reserve(atoms_.size());
        for (Atom& a : atoms_) {
            if (!merged.empty() && merged.back().location == a.location)
                merged.back().weight += a.weight;
            else
                merged.push_back(std::move(a));
        }
        merged.erase(std::remove_if(merged.begin(), merged.end(),
                                    [](const Atom& a) { return a.weight == 0.0; }),
                     merged.end());
        atoms_ = std::move(merged);
    }

    PointedSpace space_;
    std::vector<Atom> atoms_;
};

/// Merge duplicate locations, drop zero weights, sort. Idempotent; the
/// DiscreteMeasure constructor already applies it, so this is a plain rebuild.
inline DiscreteMeasure canonicalize(const DiscreteMeasure& m) {
    return DiscreteMeasure(m.space(), m.atoms());
}

inline double total_mass(const DiscreteMeasure& m) {
    double s = 0.0;
    for (const Atom& a : m.atoms()) s += a.weight;
    return s;
}

inline double tv_norm(const DiscreteMeasure& m) {
    double s = 0.0;
    for (const Atom& a : m.atoms()) s += std::abs(a.weight);
    return s;
}

/// Integral of d(theta, e)^p against |mu|.
inline double p_moment(const DiscreteMeasure& m, double p) {
    if (!(p > 0.0)) throw InvalidParameter("p_moment: p must be positive");
    double s = 0.0;
    for (const Atom& a : m.atoms())
        s += std::abs(a.weight) * std::pow(m.space().distance_to_base(a.location), p);
    return s;
}

/// Split m = mu0 + c * delta_e with mu0 balanced and c = total mass.
inline std::pair<DiscreteMeasure, double> balance_split(const DiscreteMeasure& m) {
    const double c = total_mass(m);
    std::vector<Atom> atoms = m.atoms();
    atoms.push_back(Atom{m.space().base_point, -c});
    return {DiscreteMeasure(m.space(), std::move(atoms)), c};
}

/// Jordan decomposition: (mu_plus, mu_minus), both nonnegative with disjoint
/// supports, m = mu_plus - mu_minus.
inline std::pair<DiscreteMeasure, DiscreteMeasure> jordan_split(const DiscreteMeasure& m) {
    std::vector<Atom> pos, neg;
    for (const Atom& a : m.atoms()) {
        if (a.weight > 0.0)
            pos.push_back(a);
        else
            neg.push_back(Atom{a.location, -a.weight});
    }
    return {DiscreteMeasure(m.space(), std::move(pos)), DiscreteMeasure(m.space(), std::move(neg))};
}

inline DiscreteMeasure add(const DiscreteMeasure& m, const DiscreteMeasure& n) {
    require_same_space(m.space(), n.space(), "add");
    std::vector<Atom> atoms = m.atoms();
    atoms.insert(atoms.end(), n.atoms().begin(), n.atoms().end());
    return DiscreteMeasure(m.space(), std::move(atoms));
}

inline DiscreteMeasure scale(const DiscreteMeasure& m, double t) {
    if (!std::isfinite(t)) throw InvalidParameter("scale: factor must be finite");
    std::vector<Atom> atoms = m.atoms();
    for (Atom& a : atoms) a.weight *= t;
    return DiscreteMeasure(m.space(), std::move(atoms));
}

inline DiscreteMeasure subtract(const DiscreteMeasure& m, const DiscreteMeasure& n) {
    return add(m, scale(n, -1.0));
}

/// Pushforward under theta -> R*theta with weights divided by R. Leaves the
/// first moment invariant (metric exponent 1) and divides the TV norm by R.
inline DiscreteMeasure rescale_pushforward(const DiscreteMeasure& m, double R) {
    if (!(R > 0.0) || !std::isfinite(R)) throw InvalidParameter("rescale_pushforward: R must be positive");
    if (sq_norm(m.space().base_point) != 0.0)
        throw InvalidMeasure("rescale_pushforward: base point must be the origin");
    std::vector<Atom> atoms = m.atoms();
    for (Atom& a : atoms) {
        for (double& x : a.location) x *= R;
        a.weight /= R;
    }
    return DiscreteMeasure(m.space(), std::move(atoms));
}

} // namespace kru
