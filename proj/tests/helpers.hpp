#pragma once

#include <cstdint>
#include <vector>

#include "kru/measure.hpp"
#include "kru/rng.hpp"
#include "kru/space.hpp"

namespace kru::testing {

/// Random signed measure with `count` atoms, coordinates uniform in [-range, range].
inline DiscreteMeasure random_measure(Rng& rng, const PointedSpace& space, std::size_t count,
                                      double range = 2.0) {
    std::vector<Atom> atoms;
    for (std::size_t k = 0; k < count; ++k) {
        Atom a;
        a.location.resize(space.dimension);
        for (double& x : a.location) x = rng.uniform(-range, range);
        a.weight = rng.uniform(-2.0, 2.0);
        if (a.weight == 0.0) a.weight = 0.5;
        atoms.push_back(std::move(a));
    }
    return DiscreteMeasure(space, std::move(atoms));
}

/// Random nonnegative measure with integer-grid locations in [-5, 5]^D.
inline DiscreteMeasure random_grid_marginal(Rng& rng, const PointedSpace& space, std::size_t count) {
    std::vector<Atom> atoms;
    for (std::size_t k = 0; k < count; ++k) {
        Atom a;
        a.location.resize(space.dimension);
        for (double& x : a.location) x = static_cast<double>(rng.below(11)) - 5.0;
        a.weight = rng.uniform(0.1, 2.0);
        atoms.push_back(std::move(a));
    }
    // Integer-grid locations collide often; merging keeps the marginal nonnegative.
    return DiscreteMeasure(space, std::move(atoms));
}

} // namespace kru::testing
