#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kru/measure.hpp"
#include "kru/measure_json.hpp"
#include "kru/rng.hpp"

#include "helpers.hpp"

using namespace kru;
using Catch::Approx;

namespace {
const PointedSpace plane = PointedSpace::euclidean(2);

DiscreteMeasure make(std::initializer_list<Atom> atoms) {
    return DiscreteMeasure(plane, std::vector<Atom>(atoms));
}
} // namespace

TEST_CASE("canonicalize merges, cancels, and sorts") {
    CHECK(make({{{1, 0}, 2.0}, {{1, 0}, -2.0}}).is_empty());

    const auto sorted = make({{{1, 0}, 1.0}, {{0, 1}, -1.0}});
    REQUIRE(sorted.size() == 2);
    CHECK(sorted.atoms()[0].location == Vec{0, 1});
    CHECK(sorted.atoms()[1].location == Vec{1, 0});

    const auto merged = make({{{1, 0}, 1.0}, {{1, 0}, 0.5}});
    REQUIRE(merged.size() == 1);
    CHECK(merged.atoms()[0].weight == Approx(1.5));

    CHECK_THROWS_AS(make({{{1, std::nan("")}, 1.0}}), InvalidMeasure);
    CHECK_THROWS_AS(make({{{1, 0}, std::numeric_limits<double>::infinity()}}), InvalidMeasure);
}

TEST_CASE("canonicalize is idempotent on random measures") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = testing::random_measure(rng, plane, rng.below(6));
        const auto again = canonicalize(m);
        REQUIRE(again.size() == m.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK(again.atoms()[i].location == m.atoms()[i].location);
            CHECK(again.atoms()[i].weight == m.atoms()[i].weight);
        }
    }
}

TEST_CASE("mass, TV and moment functionals") {
    const auto dipole = make({{{1, 0}, 3.0}, {{0, 1}, -3.0}});
    CHECK(total_mass(dipole) == Approx(0.0).margin(0));
    CHECK(tv_norm(dipole) == Approx(6.0));

    CHECK(total_mass(DiscreteMeasure::empty(plane)) == 0.0);
    CHECK(tv_norm(DiscreteMeasure::empty(plane)) == 0.0);

    const auto mixed = make({{{1, 1}, 1.0}, {{2, 0}, -2.0}, {{0, 3}, 0.5}});
    CHECK(tv_norm(mixed) == Approx(3.5));
    CHECK(total_mass(mixed) == Approx(-0.5));

    // p-moment: single atom at distance 2 with p = 2.
    const auto far = make({{{2, 0}, 1.0}});
    CHECK(p_moment(far, 2.0) == Approx(4.0));
    CHECK(p_moment(make({{{0, 0}, 7.0}}), 3.0) == 0.0);
    CHECK_THROWS_AS(p_moment(far, 0.0), InvalidParameter);

    // Independent recomputation on a 3-atom instance.
    double expect = 0.0;
    for (const Atom& a : mixed.atoms())
        expect += std::abs(a.weight) * std::pow(std::hypot(a.location[0], a.location[1]), 1.7);
    CHECK(p_moment(mixed, 1.7) == Approx(expect));
}

TEST_CASE("balance split and recombination") {
    const auto single = make({{{1, 1}, 1.0}});
    auto [balanced, c] = balance_split(single);
    CHECK(c == Approx(1.0));
    REQUIRE(balanced.size() == 2);
    CHECK(total_mass(balanced) == Approx(0.0).margin(1e-15));
    const auto back = add(balanced, DiscreteMeasure::dirac(plane, {0, 0}, c));
    REQUIRE(back.size() == 1);
    CHECK(back.atoms()[0].weight == Approx(1.0));

    auto [b2, c2] = balance_split(make({{{0, 0}, 5.0}}));
    CHECK(b2.is_empty());
    CHECK(c2 == Approx(5.0));

    const auto dip = make({{{1, 0}, 2.0}, {{0, 1}, -2.0}});
    auto [b3, c3] = balance_split(dip);
    CHECK(c3 == 0.0);
    CHECK(b3.size() == 2);

    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = testing::random_measure(rng, plane, 1 + rng.below(5));
        auto [m0, mass] = balance_split(m);
        CHECK(std::abs(total_mass(m0)) <= 1e-12 * std::max(1.0, tv_norm(m0)));
        const auto rebuilt = add(m0, DiscreteMeasure::dirac(plane, {0, 0}, mass));
        REQUIRE(rebuilt.size() == m.size());
        for (std::size_t i = 0; i < m.size(); ++i)
            CHECK(rebuilt.atoms()[i].weight == Approx(m.atoms()[i].weight).margin(1e-12));
    }
}

TEST_CASE("jordan split, add, scale") {
    const auto m = make({{{1, 0}, 1.0}, {{0, 1}, -2.0}});
    auto [pos, neg] = jordan_split(m);
    REQUIRE(pos.size() == 1);
    REQUIRE(neg.size() == 1);
    CHECK(pos.atoms()[0].weight == Approx(1.0));
    CHECK(neg.atoms()[0].weight == Approx(2.0));

    CHECK(add(m, scale(m, -1.0)).is_empty());
    CHECK(scale(m, 0.0).is_empty());

    const auto doubled = scale(m, 2.0);
    CHECK(tv_norm(doubled) == Approx(2.0 * tv_norm(m)));

    const auto other_space = DiscreteMeasure::empty(PointedSpace::euclidean(3));
    CHECK_THROWS_AS(add(m, other_space), SpaceMismatch);
}

TEST_CASE("rescale pushforward") {
    const auto m = make({{{1, 2}, 1.0}});
    const auto r = rescale_pushforward(m, 2.0);
    REQUIRE(r.size() == 1);
    CHECK(r.atoms()[0].location == Vec{2, 4});
    CHECK(r.atoms()[0].weight == Approx(0.5));
    CHECK_THROWS_AS(rescale_pushforward(m, -1.0), InvalidParameter);

    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = testing::random_measure(rng, plane, 1 + rng.below(5));
        const double R = rng.uniform(1.1, 5.0);
        const auto xr = rescale_pushforward(x, R);
        CHECK(p_moment(xr, 1.0) == Approx(p_moment(x, 1.0)).epsilon(1e-12));
        CHECK(tv_norm(xr) == Approx(tv_norm(x) / R).epsilon(1e-12));
    }
}

TEST_CASE("metric axioms on random triples") {
    Rng rng(23);
    for (double s : {1.0, 0.5, 0.8}) {
        const auto space = PointedSpace::euclidean(3, s);
        for (int trial = 0; trial < 1000; ++trial) {
            Vec a(3), b(3), c(3);
            for (int i = 0; i < 3; ++i) {
                a[i] = rng.uniform(-4, 4);
                b[i] = rng.uniform(-4, 4);
                c[i] = rng.uniform(-4, 4);
            }
            const double ab = space.distance(a, b), ba = space.distance(b, a);
            CHECK(ab == ba);
            CHECK(space.distance(a, a) == 0.0);
            CHECK(ab <= space.distance(a, c) + space.distance(c, b) + 1e-12);
        }
    }
    CHECK_THROWS_AS(PointedSpace::euclidean(2, 1.5), InvalidParameter);
    CHECK_THROWS_AS(PointedSpace::euclidean(2, 0.0), InvalidParameter);
}

TEST_CASE("measure JSON round trip") {
    const auto m = make({{{1.25, -0.5}, 1.5}, {{0, 1e-3}, -0.25}});
    const Json j = measure_to_json(m);
    CHECK(j["dimension"] == 2);
    CHECK(j["metric_exponent"] == 1.0);
    const auto back = measure_from_json(j);
    REQUIRE(back.size() == m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(back.atoms()[i].location == m.atoms()[i].location);
        CHECK(back.atoms()[i].weight == m.atoms()[i].weight);
    }

    CHECK_THROWS_AS(measure_from_json(Json::parse(R"({"dimension": 2})")), InvalidMeasure);
    // Readers canonicalize: duplicate locations merge on load.
    const auto dup = measure_from_json(Json::parse(
        R"({"dimension": 1, "base_point": [0], "metric_exponent": 1,
            "atoms": [{"location": [1], "weight": 1}, {"location": [1], "weight": 2}]})"));
    REQUIRE(dup.size() == 1);
    CHECK(dup.atoms()[0].weight == Approx(3.0));
}
