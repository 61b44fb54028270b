#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kru/errors.hpp"
#include "kru/measure.hpp"

namespace kru {

struct PlanEdge {
    std::size_t i = 0;  // index into the source marginal's atoms
    std::size_t j = 0;  // index into the sink marginal's atoms
    double mass = 0.0;
};

/// Exact solution of a discrete transportation problem. Potentials are the
/// restriction of a single globally 1-Lipschitz Kantorovich potential to the
/// support points, so phi_i - psi_j <= d(x_i, y_j) holds for every pair with
/// equality on plan edges.
struct TransportResult {
    double cost = 0.0;
    std::vector<PlanEdge> plan;
    Vec source_potentials;  // phi, one per atom of mu_plus
    Vec sink_potentials;    // psi, one per atom of mu_minus

    double dual_value(const Vec& a, const Vec& b) const {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * source_potentials[i];
        for (std::size_t j = 0; j < b.size(); ++j) s -= b[j] * sink_potentials[j];
        return s;
    }
};

namespace detail {

struct BasicCell {
    std::size_t i, j;
    double flow;
};

/// Transportation-variant network simplex. Supplies/demands are positive reals
/// with equal sums; returns the optimal basis flows and LP duals (u, v) with
/// u_i + v_j = c_ij on basic cells and u_i + v_j <= c_ij elsewhere.
class TransportSimplex {
public:
    TransportSimplex(std::vector<double> a, std::vector<double> b, std::vector<double> cost)
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(cost)), m_(a_.size()), n_(b_.size()) {
        double cmax = 0.0;
        for (double x : c_) cmax = std::max(cmax, std::abs(x));
        tol_ = 1e-13 * (1.0 + cmax);
    }

    void solve() {
        northwest_corner();
        u_.assign(m_, 0.0);
        v_.assign(n_, 0.0);
        const std::size_t max_pivots = 2000 + 200 * (m_ + n_) * std::max(m_, n_);
        std::size_t degenerate_streak = 0;
        bool bland = false;
        for (std::size_t pivot = 0;; ++pivot) {
            if (pivot > max_pivots)
                throw NumericalFailure("transport simplex exceeded its pivot budget");
            compute_duals();
            std::size_t ei = 0, ej = 0;
            if (!find_entering(bland, ei, ej)) break;
            const double t = pivot_on(ei, ej);
            if (t <= 0.0) {
                if (++degenerate_streak > 4 * (m_ + n_)) bland = true;
            } else {
                degenerate_streak = 0;
            }
        }
    }

    const std::vector<BasicCell>& basis() const { return basis_; }
    const std::vector<double>& u() const { return u_; }
    const std::vector<double>& v() const { return v_; }

private:
    void northwest_corner() {
        std::vector<double> ar = a_, br = b_;
        std::size_t i = 0, j = 0;
        while (true) {
            const double t = std::min(ar[i], br[j]);
            basis_.push_back({i, j, t});
            ar[i] -= t;
            br[j] -= t;
            if (i == m_ - 1 && j == n_ - 1) break;
            if (i < m_ - 1 && ar[i] <= br[j])
                ++i;
            else if (j < n_ - 1)
                ++j;
            else
                ++i;
        }
    }

    // Nodes: 0..m-1 supplies, m..m+n-1 demands. Rebuilt each pivot; basis is tiny.
    void build_adjacency(std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& adj) const {
        adj.assign(m_ + n_, {});
        for (std::size_t k = 0; k < basis_.size(); ++k) {
            adj[basis_[k].i].push_back({k, m_ + basis_[k].j});
            adj[m_ + basis_[k].j].push_back({k, basis_[k].i});
        }
    }

    void compute_duals() {
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj;
        build_adjacency(adj);
        std::vector<char> seen(m_ + n_, 0);
        std::vector<std::size_t> stack = {0};
        seen[0] = 1;
        u_[0] = 0.0;
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (auto [k, other] : adj[node]) {
                if (seen[other]) continue;
                seen[other] = 1;
                const BasicCell& cell = basis_[k];
                if (other >= m_)
                    v_[other - m_] = c_[cell.i * n_ + cell.j] - u_[cell.i];
                else
                    u_[other] = c_[cell.i * n_ + cell.j] - v_[cell.j];
                stack.push_back(other);
            }
        }
        for (char s : seen)
            if (!s) throw NumericalFailure("transport simplex basis is not a spanning tree");
    }

    bool find_entering(bool bland, std::size_t& ei, std::size_t& ej) const {
        double best = -tol_;
        bool found = false;
        for (std::size_t i = 0; i < m_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                const double red = c_[i * n_ + j] - u_[i] - v_[j];
                if (red < best) {
                    best = red;
                    ei = i;
                    ej = j;
                    found = true;
                    if (bland) return true;  // first eligible cell in index order
                }
            }
        }
        return found;
    }

    /// Bring (ei, ej) into the basis; returns the amount of flow moved.
    double pivot_on(std::size_t ei, std::size_t ej) {
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj;
        build_adjacency(adj);
        // Tree path from supply node ei to demand node m_+ej.
        std::vector<std::ptrdiff_t> parent_edge(m_ + n_, -1);
        std::vector<std::ptrdiff_t> parent_node(m_ + n_, -1);
        std::vector<char> seen(m_ + n_, 0);
        std::vector<std::size_t> stack = {ei};
        seen[ei] = 1;
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node == m_ + ej) break;
            for (auto [k, other] : adj[node]) {
                if (seen[other]) continue;
                seen[other] = 1;
                parent_edge[other] = static_cast<std::ptrdiff_t>(k);
                parent_node[other] = static_cast<std::ptrdiff_t>(node);
                stack.push_back(other);
            }
        }
        if (!seen[m_ + ej]) throw NumericalFailure("transport simplex lost tree connectivity");
        // Walk back from the demand node; edges alternate -,+,-,... (entering cell is +).
        std::vector<std::size_t> minus_edges, plus_edges;
        std::size_t node = m_ + ej;
        bool minus = true;
        while (node != ei) {
            const std::size_t k = static_cast<std::size_t>(parent_edge[node]);
            (minus ? minus_edges : plus_edges).push_back(k);
            minus = !minus;
            node = static_cast<std::size_t>(parent_node[node]);
        }
        double t = std::numeric_limits<double>::infinity();
        std::size_t leave = minus_edges.front();
        for (std::size_t k : minus_edges) {
            if (basis_[k].flow < t ||
                (basis_[k].flow == t && cell_index(basis_[k]) < cell_index(basis_[leave]))) {
                t = basis_[k].flow;
                leave = k;
            }
        }
        for (std::size_t k : minus_edges) basis_[k].flow -= t;
        for (std::size_t k : plus_edges) basis_[k].flow += t;
        basis_[leave] = {ei, ej, t};
        return t;
    }

    std::size_t cell_index(const BasicCell& c) const { return c.i * n_ + c.j; }

    std::vector<double> a_, b_, c_;
    std::size_t m_, n_;
    double tol_ = 1e-13;
    std::vector<BasicCell> basis_;
    std::vector<double> u_, v_;
};

inline void check_mass_match(double sa, double sb, const char* where) {
    const double scale = std::max(sa, sb);
    if (std::abs(sa - sb) > 1e-12 * scale)
        throw UnbalancedInput(std::string(where) + ": total masses differ (" + std::to_string(sa) +
                              " vs " + std::to_string(sb) + ")");
}

inline void require_nonnegative(const DiscreteMeasure& m, const char* where) {
    for (const Atom& a : m.atoms())
        if (a.weight < 0.0)
            throw InvalidMeasure(std::string(where) + ": marginal has a negative weight");
}

} // namespace detail

/// Exact 1-Wasserstein distance between nonnegative discrete measures of equal
/// total mass, with optimal plan and globally consistent dual potentials. All
/// TransportResult invariants (marginals, complementary slackness, feasibility,
/// strong duality) are certified before returning; a violation raises
/// NumericalFailure rather than producing an unreliable result.
inline TransportResult w1_distance(const DiscreteMeasure& mu_plus, const DiscreteMeasure& mu_minus) {
    require_same_space(mu_plus.space(), mu_minus.space(), "w1_distance");
    detail::require_nonnegative(mu_plus, "w1_distance");
    detail::require_nonnegative(mu_minus, "w1_distance");
    const std::size_t m = mu_plus.size(), n = mu_minus.size();
    if (m == 0 && n == 0) return {};
    if (m == 0 || n == 0)
        throw UnbalancedInput("w1_distance: one marginal is empty and the other carries mass");

    Vec a(m), b(n);
    for (std::size_t i = 0; i < m; ++i) a[i] = mu_plus.atoms()[i].weight;
    for (std::size_t j = 0; j < n; ++j) b[j] = mu_minus.atoms()[j].weight;
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    detail::check_mass_match(sa, sb, "w1_distance");
    for (double& x : b) x *= sa / sb;  // make the float sums agree exactly enough

    const PointedSpace& space = mu_plus.space();
    std::vector<double> cost(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost[i * n + j] = space.distance(mu_plus.atoms()[i].location, mu_minus.atoms()[j].location);

    detail::TransportSimplex simplex(a, b, cost);
    simplex.solve();

    TransportResult result;
    for (const detail::BasicCell& cell : simplex.basis()) {
        if (cell.flow > 0.0) {
            result.plan.push_back({cell.i, cell.j, cell.flow});
            result.cost += cell.flow * cost[cell.i * n + cell.j];
        }
    }

    // Tighten the LP duals into evaluations of the single 1-Lipschitz function
    // f(z) = min_j (psi_j + d(z, y_j)). Each substitution can only increase the
    // dual objective, so optimality is preserved while global feasibility
    // (including constraints the LP never saw, e.g. sink-sink pairs) becomes
    // automatic.
    Vec psi_raw(n);
    for (std::size_t j = 0; j < n; ++j) psi_raw[j] = -simplex.v()[j];
    result.source_potentials.assign(m, 0.0);
    result.sink_potentials.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) best = std::min(best, psi_raw[j] + cost[i * n + j]);
        result.source_potentials[i] = best;
    }
    for (std::size_t j = 0; j < n; ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k)
            best = std::min(best, psi_raw[k] + space.distance(mu_minus.atoms()[j].location,
                                                              mu_minus.atoms()[k].location));
        result.sink_potentials[j] = best;
    }

    // Certification.
    {
        Vec row(m, 0.0), col(n, 0.0);
        for (const PlanEdge& e : result.plan) {
            row[e.i] += e.mass;
            col[e.j] += e.mass;
        }
        for (std::size_t i = 0; i < m; ++i)
            if (std::abs(row[i] - a[i]) > 1e-9)
                throw NumericalFailure("w1_distance: plan violates the source marginal");
        for (std::size_t j = 0; j < n; ++j)
            if (std::abs(col[j] - b[j]) > 1e-9)
                throw NumericalFailure("w1_distance: plan violates the sink marginal");
        for (const PlanEdge& e : result.plan) {
            const double gap = result.source_potentials[e.i] - result.sink_potentials[e.j] -
                               cost[e.i * n + e.j];
            if (std::abs(gap) > 1e-9)
                throw NumericalFailure("w1_distance: complementary slackness violated on a plan edge");
        }
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (result.source_potentials[i] - result.sink_potentials[j] >
                    cost[i * n + j] + 1e-9)
                    throw NumericalFailure("w1_distance: dual feasibility violated");
        const double dual = result.dual_value(a, b);
        if (std::abs(dual - result.cost) > 1e-9 * std::max({1.0, std::abs(dual), result.cost}))
            throw NumericalFailure("w1_distance: primal and dual values disagree");
    }
    return result;
}

/// Exhaustive reference oracle: enumerates every basic feasible solution of the
/// transportation polytope (= spanning trees of the complete bipartite support
/// graph) and returns the minimum cost. Only for m + n <= 9.
inline double brute_force_w1(const DiscreteMeasure& mu_plus, const DiscreteMeasure& mu_minus) {
    require_same_space(mu_plus.space(), mu_minus.space(), "brute_force_w1");
    detail::require_nonnegative(mu_plus, "brute_force_w1");
    detail::require_nonnegative(mu_minus, "brute_force_w1");
    const std::size_t m = mu_plus.size(), n = mu_minus.size();
    if (m + n > 9)
        throw OracleSizeExceeded("brute_force_w1: support size " + std::to_string(m + n) +
                                 " exceeds the cap of 9");
    if (m == 0 && n == 0) return 0.0;
    if (m == 0 || n == 0)
        throw UnbalancedInput("brute_force_w1: one marginal is empty and the other carries mass");

    Vec a(m), b(n);
    for (std::size_t i = 0; i < m; ++i) a[i] = mu_plus.atoms()[i].weight;
    for (std::size_t j = 0; j < n; ++j) b[j] = mu_minus.atoms()[j].weight;
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    detail::check_mass_match(sa, sb, "brute_force_w1");
    for (double& x : b) x *= sa / sb;

    std::vector<double> cost(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost[i * n + j] = mu_plus.space().distance(mu_plus.atoms()[i].location,
                                                       mu_minus.atoms()[j].location);

    const std::size_t edges = m * n;
    const std::size_t k = m + n - 1;
    std::vector<std::size_t> pick(k);
    for (std::size_t t = 0; t < k; ++t) pick[t] = t;
    double best = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> uf(m + n);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(m + n);
    std::vector<std::size_t> degree(m + n);
    std::vector<double> rem(m + n), flow(k);

    auto uf_find = [&](std::size_t x) {
        while (uf[x] != x) x = uf[x] = uf[uf[x]];
        return x;
    };

    while (true) {
        // Acyclicity check; a forest with m+n-1 edges over m+n nodes is spanning.
        std::iota(uf.begin(), uf.end(), 0);
        bool tree = true;
        for (std::size_t e : pick) {
            const std::size_t ru = uf_find(e / n), rv = uf_find(m + e % n);
            if (ru == rv) {
                tree = false;
                break;
            }
            uf[ru] = rv;
        }
        if (tree) {
            // Unique tree flow via leaf elimination.
            for (auto& lst : adj) lst.clear();
            for (std::size_t t = 0; t < k; ++t) {
                const std::size_t i = pick[t] / n, j = pick[t] % n;
                adj[i].push_back({t, m + j});
                adj[m + j].push_back({t, i});
            }
            for (std::size_t v = 0; v < m + n; ++v) {
                degree[v] = adj[v].size();
                rem[v] = v < m ? a[v] : b[v - m];
            }
            std::vector<char> used_edge(k, 0);
            std::vector<std::size_t> leaves;
            for (std::size_t v = 0; v < m + n; ++v)
                if (degree[v] == 1) leaves.push_back(v);
            bool feasible = true;
            while (!leaves.empty()) {
                const std::size_t v = leaves.back();
                leaves.pop_back();
                if (degree[v] == 0) continue;
                std::size_t edge = 0, other = 0;
                for (auto [t, o] : adj[v]) {
                    if (!used_edge[t]) {
                        edge = t;
                        other = o;
                        break;
                    }
                }
                used_edge[edge] = 1;
                flow[edge] = rem[v];
                if (flow[edge] < -1e-11) feasible = false;
                rem[other] -= rem[v];
                rem[v] = 0.0;
                if (--degree[other] == 1) leaves.push_back(other);
                degree[v] = 0;
            }
            if (feasible) {
                double c = 0.0;
                for (std::size_t t = 0; t < k; ++t) c += std::max(flow[t], 0.0) * cost[pick[t]];
                best = std::min(best, c);
            }
        }
        // Next k-combination of the edge set.
        std::size_t pos = k;
        while (pos > 0 && pick[pos - 1] == edges - k + pos - 1) --pos;
        if (pos == 0) break;
        ++pick[pos - 1];
        for (std::size_t t = pos; t < k; ++t) pick[t] = pick[t - 1] + 1;
    }
    if (!std::isfinite(best))
        throw NumericalFailure("brute_force_w1: no feasible basic solution found");
    return best;
}

/// KR norm of a balanced measure: W1 distance between its Jordan parts.
inline double kr_norm(const DiscreteMeasure& m) {
    if (m.is_empty()) return 0.0;
    if (std::abs(total_mass(m)) > 1e-12 * tv_norm(m))
        throw UnbalancedInput("kr_norm: measure is not balanced; use kru_norm");
    auto [pos, neg] = jordan_split(m);
    return w1_distance(pos, neg).cost;
}

/// KRu norm: |mu(Z)| + KR norm of the base-point-balanced part mu - mu(Z) delta_e.
inline double kru_norm(const DiscreteMeasure& m) {
    auto [balanced, c] = balance_split(m);
    return std::abs(c) + kr_norm(balanced);
}

inline double kru_distance(const DiscreteMeasure& m, const DiscreteMeasure& n) {
    require_same_space(m.space(), n.space(), "kru_distance");
    return kru_norm(subtract(m, n));
}

/// Supporting linear functional of the KRu norm at a measure: a globally
/// 1-Lipschitz potential f with f(e) = 0 (stored as anchor values; evaluation
/// anywhere is min over anchors of value + distance) plus the mass-sign term.
/// Pairing any measure nu against it gives <= kru_norm(nu), with equality at
/// the measure it was built from.
struct KruDual {
    PointedSpace space;
    double mass_sign = 0.0;
    std::vector<std::pair<Vec, double>> anchors;  // (location, f value); contains (e, 0)

    double potential(const Vec& z) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [loc, val] : anchors) best = std::min(best, val + space.distance(z, loc));
        return anchors.empty() ? 0.0 : best;
    }

    /// Coefficient of the supporting functional on an atom at z: f(z) + sign(mass).
    double coefficient(const Vec& z) const { return potential(z) + mass_sign; }
};

inline KruDual kru_dual(const DiscreteMeasure& m) {
    KruDual dual;
    dual.space = m.space();
    auto [balanced, c] = balance_split(m);
    dual.mass_sign = (c > 0.0) - (c < 0.0);
    if (!balanced.is_empty()) {
        auto [pos, neg] = jordan_split(balanced);
        const TransportResult tr = w1_distance(pos, neg);
        // Anchor the raw potentials, then shift so the base point maps to 0.
        std::vector<std::pair<Vec, double>> anchors;
        for (std::size_t i = 0; i < pos.size(); ++i)
            anchors.push_back({pos.atoms()[i].location, tr.source_potentials[i]});
        for (std::size_t j = 0; j < neg.size(); ++j)
            anchors.push_back({neg.atoms()[j].location, tr.sink_potentials[j]});
        double at_base = std::numeric_limits<double>::infinity();
        for (const auto& [loc, val] : anchors)
            at_base = std::min(at_base, val + dual.space.distance_to_base(loc));
        for (auto& [loc, val] : anchors) val -= at_base;
        dual.anchors = std::move(anchors);
    }
    dual.anchors.push_back({m.space().base_point, 0.0});
    return dual;
}

/// Per-atom coefficients g_i (aligned with m.atoms()) of a supporting
/// functional: sum_i g_i w_i == kru_norm(m), certified to 1e-8 before return.
inline Vec kru_subgradient(const DiscreteMeasure& m) {
    if (m.is_empty()) return {};
    const KruDual dual = kru_dual(m);
    Vec g(m.size());
    double pairing = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        g[i] = dual.coefficient(m.atoms()[i].location);
        pairing += g[i] * m.atoms()[i].weight;
    }
    const double norm = kru_norm(m);
    if (std::abs(pairing - norm) > 1e-8 * std::max(1.0, norm))
        throw NumericalFailure("kru_subgradient: pairing does not reproduce the norm");
    return g;
}

/// CSV dump of a transport plan: one row per edge, with the edge cost.
inline std::string plan_to_csv(const TransportResult& result, const DiscreteMeasure& mu_plus,
                               const DiscreteMeasure& mu_minus) {
    std::ostringstream out;
    out.precision(17);
    out << "i,j,mass,cost_edge\n";
    for (const PlanEdge& e : result.plan) {
        const double d = mu_plus.space().distance(mu_plus.atoms()[e.i].location,
                                                  mu_minus.atoms()[e.j].location);
        out << e.i << ',' << e.j << ',' << e.mass << ',' << d << '\n';
    }
    return out.str();
}

} // namespace kru
