#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "kru/activation.hpp"
#include "kru/dataset.hpp"
#include "kru/errors.hpp"
#include "kru/measure.hpp"
#include "kru/network.hpp"
#include "kru/regularizer.hpp"
#include "kru/rng.hpp"
#include "kru/space.hpp"
#include "kru/transport.hpp"

namespace kru {

enum class LossKind { squared, absolute };
enum class MomentOn { solution, solution_minus_first_reference };

inline std::string loss_name(LossKind k) { return k == LossKind::squared ? "squared" : "absolute"; }

inline LossKind loss_from_name(const std::string& name) {
    if (name == "squared") return LossKind::squared;
    if (name == "absolute") return LossKind::absolute;
    throw InvalidParameter("unknown loss '" + name + "' (expected squared or absolute)");
}

inline double loss_value(LossKind k, double y, double w) {
    return k == LossKind::squared ? (w - y) * (w - y) : std::abs(w - y);
}

/// Derivative in the prediction argument; the absolute-loss kink uses the 0
/// subgradient.
inline double loss_derivative(LossKind k, double y, double w) {
    if (k == LossKind::squared) return 2.0 * (w - y);
    return w > y ? 1.0 : (w < y ? -1.0 : 0.0);
}

/// One anchor of a measure-distance penalty term: coefficient * kru_distance
/// to a fixed measure.
struct Reference {
    double coefficient = 1.0;
    DiscreteMeasure measure;
};

/// Regularized empirical risk minimization instance over discrete measures on
/// a pointed parameter space. Atoms live in the lifted space R^{d+1} acting on
/// inputs through (x, 1). The dataset may be empty, leaving a pure
/// regularization objective (used by the fusion barycenter runs).
struct Problem {
    PointedSpace space;
    Dataset data;
    Activation activation;
    LossKind loss = LossKind::squared;
    RegParams params;
    std::vector<Reference> references;  // empty: plain ERM with alpha * kru_norm
    MomentOn moment_on = MomentOn::solution;
    double data_weight = 1.0;

    // Companion-problem knobs for the moment-mapped TV form: divide features
    // by 1 + d(theta,e)^exponent and/or replace the weighted-l1 factor by 1.
    // Standard problems leave both untouched; make_moment_mapped sets them.
    std::optional<double> feature_scale_exponent;
    bool plain_tv_penalty = false;

    void validate() const {
        params.validate();
        if (space.dimension == 0)
            throw InvalidParameter("problem: parameter space dimension must be >= 1");
        if (!(data_weight >= 0.0) || !std::isfinite(data_weight))
            throw InvalidParameter("problem: data_weight must be finite and >= 0");
        if (!data.inputs.empty() || !data.labels.empty()) {
            data.validate();
            if (data.input_dim() + 1 != space.dimension)
                throw SpaceMismatch("problem: inputs of dimension " +
                                    std::to_string(data.input_dim()) +
                                    " require parameter space dimension " +
                                    std::to_string(data.input_dim() + 1) + ", got " +
                                    std::to_string(space.dimension));
        }
        if (!activation.lipschitz_constant() &&
            !(params.mode == RegMode::weighted_tv && params.alpha == 0.0))
            throw InvalidParameter(
                "problem: non-Lipschitz activation requires weighted_tv mode with alpha = 0");
        for (const Reference& r : references) {
            if (!(r.coefficient >= 0.0) || !std::isfinite(r.coefficient))
                throw InvalidParameter("problem: reference coefficients must be finite and >= 0");
            require_same_space(r.measure.space(), space, "problem reference");
        }
        if (moment_on == MomentOn::solution_minus_first_reference && references.empty())
            throw InvalidParameter("problem: shifted moment penalty requires a reference measure");
        if (feature_scale_exponent && !(*feature_scale_exponent > 0.0))
            throw InvalidParameter("problem: feature scale exponent must be positive");
    }
};

struct SolverOptions {
    int max_outer = 200;        // insertion rounds
    double tol_outer = 1e-8;    // relative objective decrease counted as progress
    int stall_rounds = 3;       // consecutive no-progress rounds before stopping
    double prune_tol = 1e-10;   // drop atoms below prune_tol * max |weight|
    int max_inner = 5000;       // fixed-support iterations
    double tol_inner = 1e-9;    // relative decrease stopping the inner solve
    double tol_stat = 1e-6;     // stationarity residual target (gradient mapping)
    int multistart = 32;        // insertion search starts
    int ascent_iters = 120;     // hill-climb steps per start
    double cert_slack = 1e-6;   // relative slack on certificate thresholds
    std::uint64_t seed = 0;     // drives all insertion randomness
    std::optional<DiscreteMeasure> init;  // warm-start measure (fusion seeds this)
};

struct SolveReport {
    DiscreteMeasure measure;
    std::vector<double> objective_trace;  // objective after each corrective solve
    // Heuristic suboptimality indicator from the last insertion search
    // (multi-start local maxima, not a global bound); unset if no search ran.
    std::optional<double> certificate_gap;
    int iterations = 0;  // insertion rounds run
    std::size_t atom_count = 0;
    double wall_time_seconds = 0.0;
    bool oracle_exhausted = false;  // stopped because no candidate cleared the threshold
    bool inner_converged = false;   // last corrective solve met the stationarity target
    double stationarity_residual = std::numeric_limits<double>::quiet_NaN();
    std::vector<DiscreteMeasure> inserted_candidates;  // unit-regularizer extremal elements
    std::vector<std::string> warnings;
};

struct FixedSupportResult {
    std::vector<double> weights;
    double objective = 0.0;
    bool converged = false;  // stationarity residual below tol_stat
    double stationarity = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
};

struct InsertCandidate {
    DiscreteMeasure measure;  // extremal element scaled to unit regularizer value
    std::vector<Vec> points;  // locations to join the active support
    double certificate = 0.0;
    double threshold = 0.0;  // firing threshold: beta for diracs, 1 for dipoles
};

namespace detail {

/// Weighted-l1 factor of the penalty at a location: 1 + d(z,e)^q_eff, or 1 in
/// plain-TV companion mode.
inline double penalty_weight(const Problem& pr, const Vec& z) {
    if (pr.plain_tv_penalty) return 1.0;
    const double d = pr.space.distance_to_base(z);
    return 1.0 + std::pow(d, pr.params.moment_exponent());
}

inline double feature_divisor(const Problem& pr, const Vec& z) {
    if (!pr.feature_scale_exponent) return 1.0;
    const double d = pr.space.distance_to_base(z);
    return 1.0 + std::pow(d, *pr.feature_scale_exponent);
}

inline double model_feature(const Problem& pr, const Vec& theta, const Vec& x_lifted) {
    return feature_value(pr.activation, theta, x_lifted) / feature_divisor(pr, theta);
}

/// 1 + d(z, base)^ex together with its gradient in z (zero at the base point,
/// where the snowflake metric is not differentiable).
inline std::pair<double, Vec> weight_and_grad(const PointedSpace& space, const Vec& z, double ex) {
    Vec diff(space.dimension);
    double rho2 = 0.0;
    for (std::size_t c = 0; c < space.dimension; ++c) {
        diff[c] = z[c] - space.base_point[c];
        rho2 += diff[c] * diff[c];
    }
    const double rho = std::sqrt(rho2);
    const double s = space.metric_exponent;
    Vec g(space.dimension, 0.0);
    if (rho <= 0.0) return {1.0, std::move(g)};
    const double val = 1.0 + std::pow(rho, s * ex);
    const double coef = ex * s * std::pow(rho, s * ex - 2.0);
    if (std::isfinite(coef))
        for (std::size_t c = 0; c < space.dimension; ++c) g[c] = coef * diff[c];
    return {val, std::move(g)};
}

inline std::pair<double, Vec> penalty_weight_grad(const Problem& pr, const Vec& z) {
    if (pr.plain_tv_penalty) return {1.0, Vec(pr.space.dimension, 0.0)};
    return weight_and_grad(pr.space, z, pr.params.moment_exponent());
}

/// Subgradient of the tightened dual potential (a min of cones): gradient of
/// the active anchor's cone, zero at anchor apexes.
inline Vec dual_subgrad(const KruDual& dual, const PointedSpace& space, const Vec& z) {
    Vec g(space.dimension, 0.0);
    const Vec* loc = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [anchor, val] : dual.anchors) {
        const double v = val + space.distance(z, anchor);
        if (v < best) {
            best = v;
            loc = &anchor;
        }
    }
    if (!loc) return g;
    double rho2 = 0.0;
    Vec diff(space.dimension);
    for (std::size_t c = 0; c < space.dimension; ++c) {
        diff[c] = z[c] - (*loc)[c];
        rho2 += diff[c] * diff[c];
    }
    const double rho = std::sqrt(rho2);
    if (rho <= 1e-300) return g;
    const double coef = space.metric_exponent * std::pow(rho, space.metric_exponent - 2.0);
    if (std::isfinite(coef))
        for (std::size_t c = 0; c < space.dimension; ++c) g[c] = coef * diff[c];
    return g;
}

}  // namespace detail

/// Model output at an unlifted input; equals realize() unless the companion
/// feature scaling is active.
inline double predict(const Problem& pr, const DiscreteMeasure& m, const Vec& x) {
    const Vec xl = lift(x);
    double s = 0.0;
    for (const Atom& a : m.atoms()) s += a.weight * detail::model_feature(pr, a.location, xl);
    return s;
}

inline double empirical_risk(const Problem& pr, const DiscreteMeasure& m) {
    const std::size_t n = pr.data.size();
    if (n == 0 || pr.data_weight == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        s += loss_value(pr.loss, pr.data.labels[i], predict(pr, m, pr.data.inputs[i]));
    return pr.data_weight * s / static_cast<double>(n);
}

/// Full objective: empirical risk, the transport term (kru_norm for plain ERM,
/// coefficient-weighted kru_distance sums otherwise), and the weighted-l1
/// moment penalty on the measure selected by moment_on.
inline double objective(const DiscreteMeasure& m, const Problem& pr) {
    require_same_space(m.space(), pr.space, "objective");
    double v = empirical_risk(pr, m);
    if (pr.params.alpha > 0.0) {
        if (pr.references.empty()) {
            v += pr.params.alpha * kru_norm(m);
        } else {
            for (const Reference& r : pr.references)
                if (r.coefficient > 0.0)
                    v += pr.params.alpha * r.coefficient * kru_distance(m, r.measure);
        }
    }
    DiscreteMeasure shifted;
    const DiscreteMeasure* pm = &m;
    if (pr.moment_on == MomentOn::solution_minus_first_reference) {
        shifted = subtract(m, pr.references.front().measure);
        pm = &shifted;
    }
    double b = 0.0;
    for (const Atom& a : pm->atoms())
        b += std::abs(a.weight) * detail::penalty_weight(pr, a.location);
    return v + pr.params.beta * b;
}

/// Warn when the transport term is active at the ill-posed moment boundary:
/// with exponent 1 the moment is invariant under pushing atoms outward while
/// every other term shrinks, so nonzero minimizers need not exist.
inline std::optional<std::string> ill_posedness_warning(const Problem& pr) {
    if (!(pr.params.alpha > 0.0) || pr.params.moment_exponent() != 1.0 || pr.plain_tv_penalty)
        return std::nullopt;
    if (pr.activation.positively_homogeneous())
        return "alpha > 0 with moment exponent 1 and the positively homogeneous activation '" +
               pr.activation.name() +
               "': rescaling any nonzero measure outward strictly lowers the objective, so only "
               "the zero measure can be a minimizer; the solve continues but may chase escaping "
               "mass instead of converging";
    return "alpha > 0 with moment exponent 1 sits at the ill-posed boundary of the regularizer; "
           "minimizers may fail to exist";
}

namespace detail {

/// Precomputed fixed-support restriction: feature matrix, penalty factors, and
/// evaluators for the composite objective and its smooth/subgradient part.
struct SupportEval {
    const Problem* pr;
    std::vector<Vec> support;
    std::vector<double> omega;             // penalty factors per support point
    std::vector<std::vector<double>> phi;  // phi[i][j] = feature of atom j at datum i
    std::vector<double> labels;
    std::size_t n_data = 0;
    double per_datum = 0.0;  // data_weight / N

    SupportEval(const Problem& p, std::vector<Vec> sup) : pr(&p), support(std::move(sup)) {
        const std::size_t J = support.size();
        omega.resize(J);
        for (std::size_t j = 0; j < J; ++j) omega[j] = penalty_weight(p, support[j]);
        if (p.data_weight > 0.0) n_data = p.data.size();
        if (n_data) {
            labels = p.data.labels;
            per_datum = p.data_weight / static_cast<double>(n_data);
            phi.assign(n_data, std::vector<double>(J));
            for (std::size_t i = 0; i < n_data; ++i) {
                const Vec xl = lift(p.data.inputs[i]);
                for (std::size_t j = 0; j < J; ++j)
                    phi[i][j] = model_feature(p, support[j], xl);
            }
        }
    }

    DiscreteMeasure measure(const std::vector<double>& w) const {
        std::vector<Atom> atoms;
        atoms.reserve(w.size());
        for (std::size_t j = 0; j < w.size(); ++j) atoms.push_back({support[j], w[j]});
        return DiscreteMeasure(pr->space, std::move(atoms));
    }

    void predictions(const std::vector<double>& w, std::vector<double>& F) const {
        F.assign(n_data, 0.0);
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (w[j] == 0.0) continue;
            for (std::size_t i = 0; i < n_data; ++i) F[i] += w[j] * phi[i][j];
        }
    }

    double transport_term(const std::vector<double>& w) const {
        if (!(pr->params.alpha > 0.0)) return 0.0;
        const DiscreteMeasure m = measure(w);
        if (pr->references.empty()) return pr->params.alpha * kru_norm(m);
        double v = 0.0;
        for (const Reference& r : pr->references)
            if (r.coefficient > 0.0)
                v += pr->params.alpha * r.coefficient * kru_distance(m, r.measure);
        return v;
    }

    double value(const std::vector<double>& w, std::vector<double>& Fbuf) const {
        double v = 0.0;
        if (n_data) {
            predictions(w, Fbuf);
            double s = 0.0;
            for (std::size_t i = 0; i < n_data; ++i)
                s += loss_value(pr->loss, labels[i], Fbuf[i]);
            v += per_datum * s;
        }
        v += transport_term(w);
        double b = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) b += std::abs(w[j]) * omega[j];
        return v + pr->params.beta * b;
    }

    /// Gradient of the risk plus a subgradient of the transport term; the
    /// weighted-l1 part is handled by the prox step, not here.
    void grad_smooth(const std::vector<double>& w, const std::vector<double>& F,
                     std::vector<double>& g) const {
        const std::size_t J = w.size();
        g.assign(J, 0.0);
        if (n_data) {
            for (std::size_t i = 0; i < n_data; ++i) {
                const double r = per_datum * loss_derivative(pr->loss, labels[i], F[i]);
                if (r == 0.0) continue;
                for (std::size_t j = 0; j < J; ++j) g[j] += r * phi[i][j];
            }
        }
        if (pr->params.alpha > 0.0) {
            const DiscreteMeasure m = measure(w);
            if (pr->references.empty()) {
                const KruDual dual = kru_dual(m);
                for (std::size_t j = 0; j < J; ++j)
                    g[j] += pr->params.alpha * dual.coefficient(support[j]);
            } else {
                for (const Reference& r : pr->references) {
                    if (!(r.coefficient > 0.0)) continue;
                    const KruDual dual = kru_dual(subtract(m, r.measure));
                    const double c = pr->params.alpha * r.coefficient;
                    for (std::size_t j = 0; j < J; ++j)
                        g[j] += c * dual.coefficient(support[j]);
                }
            }
        }
    }
};

inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

/// Cholesky solve of a symmetric positive semidefinite system, retrying with
/// escalating diagonal jitter when the factorization hits a nonpositive pivot.
inline std::optional<std::vector<double>> spd_solve(std::size_t n, const std::vector<double>& G,
                                                    const std::vector<double>& b) {
    double dmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) dmax = std::max(dmax, G[i * n + i]);
    if (!(dmax > 0.0)) return std::nullopt;
    for (double jitter : {0.0, 1e-14, 1e-11, 1e-8}) {
        std::vector<double> L = G;
        for (std::size_t i = 0; i < n; ++i) L[i * n + i] += jitter * dmax;
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double s = L[i * n + j];
                for (std::size_t k = 0; k < j; ++k) s -= L[i * n + k] * L[j * n + k];
                if (i == j) {
                    if (!(s > 0.0)) {
                        ok = false;
                        break;
                    }
                    L[i * n + i] = std::sqrt(s);
                } else {
                    L[i * n + j] = s / L[j * n + j];
                }
            }
        }
        if (!ok) continue;
        std::vector<double> x = b;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < i; ++k) x[i] -= L[i * n + k] * x[k];
            x[i] /= L[i * n + i];
        }
        for (std::size_t i = n; i-- > 0;) {
            for (std::size_t k = i + 1; k < n; ++k) x[i] -= L[k * n + i] * x[k];
            x[i] /= L[i * n + i];
        }
        return x;
    }
    return std::nullopt;
}

/// Exact cyclic coordinate descent for the alpha = 0, squared-loss case: the
/// subproblem is a weighted lasso, per-coordinate minimization is closed form,
/// and collinear supports (clusters of nearby atoms) that stall proximal
/// steps are drained to exact zeros here.
inline std::pair<std::vector<double>, int> lasso_descent(const SupportEval& ev,
                                                         std::vector<double> w,
                                                         const SolverOptions& opt) {
    const std::size_t J = ev.support.size();
    const double beta = ev.pr->params.beta;
    if (ev.n_data == 0) return {std::vector<double>(J, 0.0), 0};
    const double c2 = 2.0 * ev.per_datum;
    std::vector<double> a(J, 0.0), lam(J);
    for (std::size_t j = 0; j < J; ++j) {
        lam[j] = beta * ev.omega[j];
        double s = 0.0;
        for (std::size_t i = 0; i < ev.n_data; ++i) s += ev.phi[i][j] * ev.phi[i][j];
        a[j] = c2 * s;
    }
    std::vector<double> r(ev.n_data);
    for (std::size_t i = 0; i < ev.n_data; ++i) {
        double F = 0.0;
        for (std::size_t j = 0; j < J; ++j) F += ev.phi[i][j] * w[j];
        r[i] = F - ev.labels[i];
    }
    int sweeps = 0;
    for (; sweeps < opt.max_inner; ++sweeps) {
        double moved = 0.0, scale = 1.0;
        for (std::size_t j = 0; j < J; ++j) {
            double u = 0.0;
            if (a[j] > 0.0) {
                double g = 0.0;
                for (std::size_t i = 0; i < ev.n_data; ++i) g += ev.phi[i][j] * r[i];
                u = soft_threshold(w[j] - c2 * g / a[j], lam[j] / a[j]);
            }
            if (u != w[j]) {
                const double d = u - w[j];
                for (std::size_t i = 0; i < ev.n_data; ++i) r[i] += ev.phi[i][j] * d;
                moved = std::max(moved, std::abs(d));
                w[j] = u;
            }
            scale = std::max(scale, std::abs(w[j]));
        }
        if (moved <= 1e-15 * scale) {
            ++sweeps;
            break;
        }
    }
    return {std::move(w), sweeps};
}

inline FixedSupportResult solve_fixed_support_impl(const Problem& pr,
                                                   const std::vector<Vec>& support,
                                                   std::vector<double> w,
                                                   const SolverOptions& opt) {
    const std::size_t J = support.size();
    if (J == 0) throw InvalidParameter("solve_fixed_support: empty support");
    for (const Vec& z : support)
        if (z.size() != pr.space.dimension)
            throw SpaceMismatch("solve_fixed_support: support point dimension mismatch");
    for (std::size_t a = 0; a < J; ++a)
        for (std::size_t b = a + 1; b < J; ++b)
            if (support[a] == support[b])
                throw InvalidParameter("solve_fixed_support: duplicate support locations");
    if (w.empty()) w.assign(J, 0.0);
    if (w.size() != J)
        throw InvalidParameter("solve_fixed_support: init weights do not match the support");

    SupportEval ev(pr, support);
    const double beta = pr.params.beta;
    std::vector<double> F, F2, g, w2(J);

    if (pr.params.alpha == 0.0 && pr.loss == LossKind::squared) {
        auto [wcd, sweeps] = lasso_descent(ev, std::move(w), opt);
        // Cyclic descent crawls on near-collinear columns; once it has settled
        // the signs, the active-set optimum is a linear system. Solve it and
        // accept on strict objective decrease, then let descent re-verify.
        for (int polish = 0; polish < 8 && ev.n_data > 0; ++polish) {
            std::vector<std::size_t> act;
            for (std::size_t j = 0; j < J; ++j)
                if (wcd[j] != 0.0) act.push_back(j);
            std::vector<double> sol;
            const double c2 = 2.0 * ev.per_datum;
            // sign-fixed KKT system over the active set; coordinates whose
            // solution flips sign are clamped to zero and the system re-solved
            while (!act.empty()) {
                const std::size_t m = act.size();
                std::vector<double> G(m * m), rhs(m);
                for (std::size_t a = 0; a < m; ++a) {
                    const std::size_t ja = act[a];
                    double ry = 0.0;
                    for (std::size_t i = 0; i < ev.n_data; ++i)
                        ry += ev.phi[i][ja] * ev.labels[i];
                    rhs[a] = c2 * ry - beta * ev.omega[ja] * (wcd[ja] > 0.0 ? 1.0 : -1.0);
                    for (std::size_t b = a; b < m; ++b) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < ev.n_data; ++i)
                            s += ev.phi[i][ja] * ev.phi[i][act[b]];
                        G[a * m + b] = G[b * m + a] = c2 * s;
                    }
                }
                auto s = spd_solve(m, G, rhs);
                if (!s) break;
                std::vector<std::size_t> kept;
                std::vector<double> vals;
                for (std::size_t a = 0; a < m; ++a) {
                    if ((*s)[a] * (wcd[act[a]] > 0.0 ? 1.0 : -1.0) >= 0.0) {
                        kept.push_back(act[a]);
                        vals.push_back((*s)[a]);
                    }
                }
                if (kept.size() == m) {
                    sol = std::move(vals);
                    break;
                }
                act = std::move(kept);
            }
            if (sol.empty()) break;
            std::vector<double> wp(J, 0.0);
            for (std::size_t a = 0; a < act.size(); ++a) wp[act[a]] = sol[a];
            if (!(std::isfinite(ev.value(wp, F)) && ev.value(wp, F) < ev.value(wcd, F))) break;
            auto [w3, s3] = lasso_descent(ev, std::move(wp), opt);
            sweeps += s3;
            wcd = std::move(w3);
            if (s3 <= 1) break;
        }
        FixedSupportResult out;
        out.objective = ev.value(wcd, F);
        if (ev.n_data) ev.predictions(wcd, F);
        ev.grad_smooth(wcd, F, g);
        const double tp = 1e-3;
        double res = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            const double wj = soft_threshold(wcd[j] - tp * g[j], tp * beta * ev.omega[j]);
            res = std::max(res, std::abs(wj - wcd[j]) / tp);
        }
        out.weights = std::move(wcd);
        out.stationarity = res;
        out.converged = res <= opt.tol_stat;
        out.iterations = sweeps;
        return out;
    }

    double h = ev.value(w, F);
    if (ev.n_data) ev.predictions(w, F);

    double t = 1.0;
    int iters = 0;
    bool prox_fixed_point = false;
    for (; iters < opt.max_inner; ++iters) {
        ev.grad_smooth(w, F, g);
        bool accepted = false;
        double h2 = h;
        while (t >= 1e-18) {
            double move2 = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                w2[j] = soft_threshold(w[j] - t * g[j], t * beta * ev.omega[j]);
                const double d = w2[j] - w[j];
                move2 += d * d;
            }
            if (move2 == 0.0) {
                prox_fixed_point = true;  // exact stationary point of the composite model
                break;
            }
            h2 = ev.value(w2, F2);
            if (std::isfinite(h2) && h2 <= h - 1e-4 * move2 / t) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (prox_fixed_point || !accepted) break;
        const double drop = h - h2;
        w.swap(w2);
        F.swap(F2);
        h = h2;
        t = std::min(t * 1.5, 1e8);
        if (drop < opt.tol_inner * std::max(std::abs(h), 1e-12)) {
            ++iters;
            break;
        }
    }

    // Gradient-mapping residual at a fixed probe step: zero exactly at
    // composite stationary points (with the transport subgradient chosen here).
    if (ev.n_data) ev.predictions(w, F);
    ev.grad_smooth(w, F, g);
    const double tp = 1e-3;
    double res = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        const double wj = soft_threshold(w[j] - tp * g[j], tp * beta * ev.omega[j]);
        res = std::max(res, std::abs(wj - w[j]) / tp);
    }

    FixedSupportResult out;
    out.weights = std::move(w);
    out.objective = h;
    out.stationarity = res;
    out.converged = res <= opt.tol_stat;
    out.iterations = iters;
    return out;
}

/// Residuals and dual anchors defining the insertion certificate
/// eta(z) = sum_i r_i * feature(z, x_i) + alpha * sum_k c_k * u_k(z).
struct CertEval {
    const Problem* pr;
    std::vector<Vec> xl;
    std::vector<double> resid;
    std::vector<std::pair<double, KruDual>> duals;
    bool identically_zero = true;

    CertEval(const Problem& p, const DiscreteMeasure& cur) : pr(&p) {
        const std::size_t n = p.data_weight > 0.0 ? p.data.size() : 0;
        xl.reserve(n);
        resid.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) xl.push_back(lift(p.data.inputs[i]));
        for (std::size_t i = 0; i < n; ++i) {
            double F = 0.0;
            for (const Atom& a : cur.atoms()) F += a.weight * model_feature(p, a.location, xl[i]);
            resid[i] = p.data_weight * loss_derivative(p.loss, p.data.labels[i], F) /
                       static_cast<double>(n);
            if (resid[i] != 0.0) identically_zero = false;
        }
        if (p.params.alpha > 0.0 && !p.references.empty()) {
            for (const Reference& r : p.references)
                if (r.coefficient > 0.0) {
                    duals.emplace_back(p.params.alpha * r.coefficient,
                                       kru_dual(subtract(cur, r.measure)));
                    identically_zero = false;
                }
        }
    }

    double eta(const Vec& z) const {
        double raw = 0.0;
        for (std::size_t i = 0; i < xl.size(); ++i)
            raw += resid[i] * pr->activation.value(dot(z, xl[i]));
        double v = raw / feature_divisor(*pr, z);
        for (const auto& [c, dual] : duals) v += c * dual.coefficient(z);
        return v;
    }

    Vec eta_grad(const Vec& z) const {
        const std::size_t D = z.size();
        Vec g(D, 0.0);
        double raw = 0.0;
        for (std::size_t i = 0; i < xl.size(); ++i) {
            const double pre = dot(z, xl[i]);
            raw += resid[i] * pr->activation.value(pre);
            const double dv = resid[i] * pr->activation.derivative(pre);
            if (dv == 0.0) continue;
            for (std::size_t c = 0; c < D; ++c) g[c] += dv * xl[i][c];
        }
        if (pr->feature_scale_exponent) {
            auto [div, dg] = weight_and_grad(pr->space, z, *pr->feature_scale_exponent);
            for (std::size_t c = 0; c < D; ++c) g[c] = g[c] / div - raw * dg[c] / (div * div);
        }
        for (const auto& [c, dual] : duals) {
            const Vec dgrad = dual_subgrad(dual, pr->space, z);
            for (std::size_t k = 0; k < D; ++k) g[k] += c * dgrad[k];
        }
        return g;
    }
};

/// Value-checked adaptive-step ascent; gradients are only a direction hint, so
/// kinks and dead regions degrade to early stops rather than wrong answers.
template <class ValueFn, class GradFn>
inline std::pair<double, Vec> hill_climb(const ValueFn& value, const GradFn& grad, Vec z,
                                         int iters) {
    double v = value(z);
    if (!std::isfinite(v)) return {-std::numeric_limits<double>::infinity(), std::move(z)};
    double t = 0.5;
    for (int k = 0; k < iters && t > 1e-12; ++k) {
        const Vec g = grad(z);
        const double gn = std::sqrt(sq_norm(g));
        if (!std::isfinite(gn) || gn < 1e-15) break;
        Vec z2 = z;
        for (std::size_t c = 0; c < z.size(); ++c) z2[c] += (t / gn) * g[c];
        const double v2 = value(z2);
        if (std::isfinite(v2) && v2 > v) {
            z = std::move(z2);
            v = v2;
            t *= 1.6;
        } else {
            t *= 0.5;
        }
    }
    return {v, std::move(z)};
}

/// Deterministic multi-start seeds: the base point, normalized lifted data,
/// the heaviest current atoms, reference atoms, then Gaussian fills.
inline std::vector<Vec> insertion_seeds(const Problem& pr, const DiscreteMeasure& cur,
                                        int multistart, Rng& rng) {
    std::vector<Vec> seeds;
    seeds.push_back(pr.space.base_point);
    const std::size_t n = pr.data.size();
    const std::size_t ndata = std::min<std::size_t>(n, 8);
    for (std::size_t k = 0; k < ndata; ++k) {
        Vec z = lift(pr.data.inputs[k * n / ndata]);
        const double nz = std::sqrt(sq_norm(z));
        if (nz > 0.0)
            for (double& c : z) c /= nz;
        seeds.push_back(std::move(z));
    }
    std::vector<Atom> atoms(cur.atoms().begin(), cur.atoms().end());
    std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) {
        if (std::abs(a.weight) != std::abs(b.weight))
            return std::abs(a.weight) > std::abs(b.weight);
        return lex_less(a.location, b.location);
    });
    for (std::size_t k = 0; k < atoms.size() && k < 8; ++k) seeds.push_back(atoms[k].location);
    std::size_t from_refs = 0;
    for (const Reference& r : pr.references) {
        for (const Atom& a : r.measure.atoms()) {
            if (from_refs >= 4) break;
            seeds.push_back(a.location);
            ++from_refs;
        }
        if (from_refs >= 4) break;
    }
    while (seeds.size() < static_cast<std::size_t>(std::max(multistart, 1))) {
        Vec z(pr.space.dimension);
        for (double& c : z) c = rng.gauss();
        seeds.push_back(std::move(z));
    }
    return seeds;
}

struct OracleOutcome {
    std::optional<InsertCandidate> candidate;
    double best = 0.0;
    double threshold = 0.0;
};

constexpr std::uint64_t kDiracTag = 0x64697261630001ULL;
constexpr std::uint64_t kDipoleTag = 0x6469706f6c0002ULL;

/// Radial exponent c of the dirac score's denominator profile 1 + t^c along
/// rays, when the numerator is positively homogeneous and c > 1 (so the
/// radial maximum exists in closed form). nullopt: no such reduction.
inline std::optional<double> radial_exponent(const Problem& pr) {
    if (!pr.activation.positively_homogeneous()) return std::nullopt;
    const double s = pr.space.metric_exponent;
    double c = 0.0;
    if (!pr.plain_tv_penalty && !pr.feature_scale_exponent) {
        c = s * pr.params.moment_exponent();
    } else if (pr.plain_tv_penalty && pr.feature_scale_exponent) {
        c = s * *pr.feature_scale_exponent;
    } else {
        return std::nullopt;
    }
    if (!(c > 1.0)) return std::nullopt;
    return c;
}

/// Exact-in-radius dirac search for positively homogeneous activations:
/// eta(t u) = t * eta(u) for t > 0, so the score along the ray through u is
/// |eta(u)| * t / (1 + t^c), maximized at t* = (c-1)^{-1/c}; only the sphere
/// direction needs a numerical search.
inline std::vector<std::pair<double, Vec>> sphere_dirac_search(const Problem& pr,
                                                               const CertEval& ce, double c,
                                                               const std::vector<Vec>& seeds,
                                                               const SolverOptions& opt) {
    const std::size_t D = pr.space.dimension;
    const double tstar = std::pow(c - 1.0, -1.0 / c);
    const double mult = tstar / (1.0 + 1.0 / (c - 1.0));

    const auto normalize = [](Vec z) -> std::optional<Vec> {
        const double n = std::sqrt(sq_norm(z));
        if (!(n > 1e-12)) return std::nullopt;
        for (double& x : z) x /= n;
        return z;
    };
    const auto value = [&](const Vec& u) { return std::abs(ce.eta(u)); };
    const auto grad = [&](const Vec& u) {
        Vec g = ce.eta_grad(u);
        const double sgn = ce.eta(u) >= 0.0 ? 1.0 : -1.0;
        const double gu = dot(g, u);
        for (std::size_t k = 0; k < D; ++k) g[k] = sgn * (g[k] - gu * u[k]);
        return g;
    };

    std::vector<std::pair<double, Vec>> maxima;
    for (const Vec& s : seeds) {
        for (double flip : {1.0, -1.0}) {
            Vec z = s;
            for (double& x : z) x *= flip;
            const auto u0 = normalize(std::move(z));
            if (!u0) continue;
            Vec u = *u0;
            double v = value(u);
            double t = 0.5;
            for (int k = 0; k < opt.ascent_iters && t > 1e-14; ++k) {
                const Vec g = grad(u);
                const double gn = std::sqrt(sq_norm(g));
                if (!std::isfinite(gn) || gn < 1e-16) break;
                Vec u2 = u;
                for (std::size_t i = 0; i < D; ++i) u2[i] += (t / gn) * g[i];
                const auto un = normalize(std::move(u2));
                if (!un) break;
                const double v2 = value(*un);
                if (std::isfinite(v2) && v2 > v) {
                    u = *un;
                    v = v2;
                    t *= 1.6;
                } else {
                    t *= 0.5;
                }
            }
            if (std::isfinite(v) && v > 0.0) {
                Vec z2 = u;
                for (double& x : z2) x *= tstar;
                maxima.emplace_back(v * mult, std::move(z2));
            }
        }
    }
    return maxima;
}

/// alpha = 0 oracle: maximize |eta(z)| / omega(z); fires above beta.
inline OracleOutcome dirac_oracle(const Problem& pr, const DiscreteMeasure& cur,
                                  const SolverOptions& opt, std::uint64_t round) {
    OracleOutcome out;
    out.threshold = pr.params.beta;
    CertEval ce(pr, cur);
    if (ce.identically_zero) return out;
    Rng rng(derive_seed(derive_seed(opt.seed, kDiracTag), round));
    const std::vector<Vec> seeds = insertion_seeds(pr, cur, opt.multistart, rng);

    const auto value = [&](const Vec& z) { return std::abs(ce.eta(z)) / penalty_weight(pr, z); };
    const auto grad = [&](const Vec& z) {
        const double ev = ce.eta(z);
        const Vec eg = ce.eta_grad(z);
        auto [w, wg] = penalty_weight_grad(pr, z);
        const double sgn = ev >= 0.0 ? 1.0 : -1.0;
        Vec g(z.size());
        for (std::size_t c = 0; c < z.size(); ++c)
            g[c] = sgn * eg[c] / w - std::abs(ev) * wg[c] / (w * w);
        return g;
    };

    std::vector<std::pair<double, Vec>> maxima;
    maxima.reserve(seeds.size());
    if (const auto c = radial_exponent(pr)) {
        maxima = sphere_dirac_search(pr, ce, *c, seeds, opt);
        for (auto& [v, z] : maxima) v = value(z);
    } else {
        for (const Vec& s : seeds) {
            auto [v, z] = hill_climb(value, grad, s, opt.ascent_iters);
            if (std::isfinite(v) && v > 0.0) maxima.emplace_back(v, std::move(z));
        }
    }
    double bestv = 0.0;
    for (const auto& [v, z] : maxima) bestv = std::max(bestv, v);
    out.best = bestv;
    if (!(bestv > pr.params.beta * (1.0 + opt.cert_slack))) return out;

    // near-ties resolve to the lexicographically smallest location
    const Vec* pick = nullptr;
    for (const auto& [v, z] : maxima)
        if (bestv - v <= opt.cert_slack * bestv && (!pick || lex_less(z, *pick))) pick = &z;
    Vec bestz = *pick;

    const double w = penalty_weight(pr, bestz);
    const double sgn = ce.eta(bestz) >= 0.0 ? -1.0 : 1.0;
    InsertCandidate cand;
    cand.certificate = bestv;
    cand.threshold = pr.params.beta;
    cand.points = {bestz};
    cand.measure =
        DiscreteMeasure(pr.space, {Atom{std::move(bestz), sgn / (pr.params.beta * w)}});
    out.candidate = std::move(cand);
    return out;
}

/// alpha > 0 oracle over the extremal dictionary. Plain ERM scores pairs
/// against the full regularizer (alpha d(x,y) + beta weights); with reference
/// distance terms their subgradients are folded into eta instead and only the
/// beta part remains in the denominator. Fires above 1.
inline OracleOutcome dipole_oracle(const Problem& pr, const DiscreteMeasure& cur,
                                   const SolverOptions& opt, std::uint64_t round) {
    OracleOutcome out;
    out.threshold = 1.0;
    CertEval ce(pr, cur);
    const bool fused = !ce.duals.empty();
    if (ce.identically_zero) return out;
    Rng rng(derive_seed(derive_seed(opt.seed, kDipoleTag), round));
    const std::vector<Vec> seeds = insertion_seeds(pr, cur, opt.multistart, rng);
    const double alpha = pr.params.alpha;
    const double beta = pr.params.beta;
    const std::size_t D = pr.space.dimension;

    const auto score = [&](const Vec& x, const Vec& y) {
        const double d = pr.space.distance(x, y);
        if (!(d > 1e-12)) return -std::numeric_limits<double>::infinity();
        const double num = std::abs(ce.eta(x) - ce.eta(y));
        const double den = (fused ? 0.0 : alpha * d) +
                           beta * (penalty_weight(pr, x) + penalty_weight(pr, y));
        return num / den;
    };
    const auto value = [&](const Vec& s) {
        const Vec x(s.begin(), s.begin() + D), y(s.begin() + D, s.end());
        return score(x, y);
    };
    const auto grad = [&](const Vec& s) {
        const Vec x(s.begin(), s.begin() + D), y(s.begin() + D, s.end());
        Vec g(2 * D, 0.0);
        const double d = pr.space.distance(x, y);
        if (!(d > 1e-12)) return g;
        const double ex = ce.eta(x), ey = ce.eta(y);
        const double sgn = ex - ey >= 0.0 ? 1.0 : -1.0;
        const double num = std::abs(ex - ey);
        auto [wx, wgx] = penalty_weight_grad(pr, x);
        auto [wy, wgy] = penalty_weight_grad(pr, y);
        const double den = (fused ? 0.0 : alpha * d) + beta * (wx + wy);
        const Vec gx = ce.eta_grad(x), gy = ce.eta_grad(y);
        Vec ddx(D, 0.0);  // gradient of d(x,y) in x; mirrored for y
        if (!fused && alpha > 0.0) {
            double rho2 = 0.0;
            for (std::size_t c = 0; c < D; ++c) {
                ddx[c] = x[c] - y[c];
                rho2 += ddx[c] * ddx[c];
            }
            const double rho = std::sqrt(rho2);
            const double coef =
                rho > 1e-300 ? pr.space.metric_exponent *
                                   std::pow(rho, pr.space.metric_exponent - 2.0)
                             : 0.0;
            for (std::size_t c = 0; c < D; ++c) ddx[c] *= std::isfinite(coef) ? coef : 0.0;
        }
        for (std::size_t c = 0; c < D; ++c) {
            const double denx = (fused ? 0.0 : alpha * ddx[c]) + beta * wgx[c];
            const double deny = (fused ? 0.0 : -alpha * ddx[c]) + beta * wgy[c];
            g[c] = (sgn * gx[c] * den - num * denx) / (den * den);
            g[D + c] = (-sgn * gy[c] * den - num * deny) / (den * den);
        }
        return g;
    };

    // Pair the largest-eta seeds against the smallest (dipoles live on eta
    // gaps), include argmax |eta| against the base point, fill randomly.
    std::vector<std::pair<double, std::size_t>> ranked(seeds.size());
    for (std::size_t k = 0; k < seeds.size(); ++k) ranked[k] = {ce.eta(seeds[k]), k};
    std::sort(ranked.begin(), ranked.end());
    std::vector<Vec> starts;
    const auto push_pair = [&](const Vec& x, const Vec& y) {
        if (!(pr.space.distance(x, y) > 1e-12)) return;
        Vec s;
        s.reserve(2 * D);
        s.insert(s.end(), x.begin(), x.end());
        s.insert(s.end(), y.begin(), y.end());
        starts.push_back(std::move(s));
    };
    const std::size_t S = ranked.size();
    const std::size_t K = std::min<std::size_t>(4, S);
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b)
            push_pair(seeds[ranked[S - 1 - a].second], seeds[ranked[b].second]);
    std::size_t arg_abs =
        std::abs(ranked.front().first) >= std::abs(ranked.back().first) ? ranked.front().second
                                                                        : ranked.back().second;
    push_pair(seeds[arg_abs], pr.space.base_point);
    while (starts.size() < static_cast<std::size_t>(std::max(opt.multistart, 1))) {
        Vec s(2 * D);
        for (double& c : s) c = rng.gauss();
        starts.push_back(std::move(s));
    }

    std::vector<std::pair<double, Vec>> maxima;
    maxima.reserve(starts.size());
    for (const Vec& s : starts) {
        auto [v, z] = hill_climb(value, grad, s, opt.ascent_iters);
        if (std::isfinite(v) && v > 0.0) maxima.emplace_back(v, std::move(z));
    }
    double best_pair = 0.0;
    for (const auto& [v, z] : maxima) best_pair = std::max(best_pair, v);
    Vec bestx, besty;
    if (best_pair > 0.0) {
        const Vec* pick = nullptr;
        for (const auto& [v, z] : maxima)
            if (best_pair - v <= opt.cert_slack * best_pair && (!pick || lex_less(z, *pick)))
                pick = &z;
        bestx.assign(pick->begin(), pick->begin() + D);
        besty.assign(pick->begin() + D, pick->end());
    }

    const double eta_e = ce.eta(pr.space.base_point);
    const double score_e = std::abs(eta_e) / (fused ? beta : (alpha + beta));
    out.best = std::max({best_pair, score_e, 0.0});
    if (!(out.best > 1.0 + opt.cert_slack)) return out;

    InsertCandidate cand;
    cand.threshold = 1.0;
    if (score_e >= best_pair) {
        cand.certificate = score_e;
        cand.points = {pr.space.base_point};
        const double c = (eta_e >= 0.0 ? -1.0 : 1.0) / (alpha + beta);
        cand.measure = DiscreteMeasure(pr.space, {Atom{pr.space.base_point, c}});
    } else {
        cand.certificate = best_pair;
        // orientation: positive mass where eta is smaller
        if (ce.eta(bestx) > ce.eta(besty)) std::swap(bestx, besty);
        const double a = extremal_dipole_scale(bestx, besty, 0.0, pr.space, pr.params);
        cand.points = {bestx, besty};
        cand.measure =
            DiscreteMeasure(pr.space, {Atom{std::move(bestx), a}, Atom{std::move(besty), -a}});
    }
    out.candidate = std::move(cand);
    return out;
}

inline OracleOutcome insertion_oracle(const Problem& pr, const DiscreteMeasure& cur,
                                      const SolverOptions& opt, std::uint64_t round) {
    return pr.params.alpha > 0.0 ? dipole_oracle(pr, cur, opt, round)
                                 : dirac_oracle(pr, cur, opt, round);
}

}  // namespace detail

inline FixedSupportResult solve_fixed_support(const Problem& pr, const std::vector<Vec>& support,
                                              std::vector<double> init,
                                              const SolverOptions& opt = {}) {
    pr.validate();
    if (pr.moment_on != MomentOn::solution)
        throw InvalidParameter(
            "solve_fixed_support: shifted moment penalties go through solve_distillation");
    return detail::solve_fixed_support_impl(pr, support, std::move(init), opt);
}

inline std::optional<InsertCandidate> insert_dirac(const Problem& pr, const DiscreteMeasure& cur,
                                                   const SolverOptions& opt = {},
                                                   std::uint64_t round = 0) {
    pr.validate();
    if (pr.params.alpha != 0.0)
        throw InvalidParameter("insert_dirac: requires alpha == 0 (use insert_dipole)");
    require_same_space(cur.space(), pr.space, "insert_dirac");
    return detail::dirac_oracle(pr, cur, opt, round).candidate;
}

inline std::optional<InsertCandidate> insert_dipole(const Problem& pr, const DiscreteMeasure& cur,
                                                    const SolverOptions& opt = {},
                                                    std::uint64_t round = 0) {
    pr.validate();
    if (!(pr.params.alpha > 0.0))
        throw InvalidParameter("insert_dipole: requires alpha > 0 (use insert_dirac)");
    require_same_space(cur.space(), pr.space, "insert_dipole");
    return detail::dipole_oracle(pr, cur, opt, round).candidate;
}

/// Fully corrective conditional gradient: insert the best extremal candidate,
/// re-solve the convex fixed-support restriction from a warm start, prune
/// negligible atoms, and stop on an exhausted oracle, a stalled objective, or
/// the round budget.
inline SolveReport conditional_gradient_solve(const Problem& pr, const SolverOptions& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    pr.validate();
    if (pr.moment_on != MomentOn::solution)
        throw InvalidParameter(
            "conditional_gradient_solve: shifted moment penalties go through solve_distillation");

    SolveReport rep;
    if (const auto warn = ill_posedness_warning(pr)) rep.warnings.push_back(*warn);

    std::vector<Vec> support;
    std::vector<double> weights;
    if (opt.init) {
        require_same_space(opt.init->space(), pr.space, "conditional_gradient_solve init");
        for (const Atom& a : opt.init->atoms()) {
            support.push_back(a.location);
            weights.push_back(a.weight);
        }
    }

    const auto rebuild = [&](const std::vector<double>& w) {
        std::vector<Atom> atoms;
        atoms.reserve(w.size());
        for (std::size_t j = 0; j < w.size(); ++j) atoms.push_back({support[j], w[j]});
        return DiscreteMeasure(pr.space, std::move(atoms));
    };

    DiscreteMeasure cur = rebuild(weights);
    if (!support.empty()) {
        FixedSupportResult fs = detail::solve_fixed_support_impl(pr, support, weights, opt);
        weights = std::move(fs.weights);
        rep.inner_converged = fs.converged;
        rep.stationarity_residual = fs.stationarity;
        cur = rebuild(weights);
    }
    rep.objective_trace.push_back(objective(cur, pr));

    int stall = 0;
    for (int round = 1; round <= opt.max_outer; ++round) {
        const detail::OracleOutcome oracle = detail::insertion_oracle(
            pr, cur, opt, static_cast<std::uint64_t>(round));
        rep.certificate_gap = std::max(0.0, oracle.best - oracle.threshold);
        rep.iterations = round;
        if (!oracle.candidate) {
            rep.oracle_exhausted = true;
            break;
        }
        rep.inserted_candidates.push_back(oracle.candidate->measure);

        for (const Vec& pt : oracle.candidate->points) {
            bool present = false;
            for (const Vec& z : support)
                if (pr.space.distance(z, pt) <= 1e-12) {
                    present = true;
                    break;
                }
            if (!present) {
                support.push_back(pt);
                weights.push_back(0.0);
            }
        }

        FixedSupportResult fs = detail::solve_fixed_support_impl(pr, support, weights, opt);
        weights = std::move(fs.weights);
        rep.inner_converged = fs.converged;
        rep.stationarity_residual = fs.stationarity;

        // prune and merge, but never let bookkeeping break the monotone trace
        double wmax = 0.0;
        for (double w : weights) wmax = std::max(wmax, std::abs(w));
        std::vector<Vec> psup;
        std::vector<double> pw;
        for (std::size_t j = 0; j < weights.size(); ++j) {
            if (wmax > 0.0 && std::abs(weights[j]) >= opt.prune_tol * wmax) {
                psup.push_back(support[j]);
                pw.push_back(weights[j]);
            }
        }
        for (std::size_t i = 0; i < psup.size(); ++i) {
            for (std::size_t j = psup.size(); j-- > i + 1;) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < psup[i].size(); ++c) {
                    const double d = psup[i][c] - psup[j][c];
                    d2 += d * d;
                }
                if (d2 <= 1e-14) {  // locations equal to numerical noise
                    pw[i] += pw[j];
                    psup.erase(psup.begin() + static_cast<std::ptrdiff_t>(j));
                    pw.erase(pw.begin() + static_cast<std::ptrdiff_t>(j));
                }
            }
        }
        const double prev = rep.objective_trace.back();
        DiscreteMeasure pruned(pr.space, [&] {
            std::vector<Atom> atoms;
            for (std::size_t j = 0; j < pw.size(); ++j) atoms.push_back({psup[j], pw[j]});
            return atoms;
        }());
        double obj = objective(pruned, pr);
        if (obj <= prev + 1e-11 * std::max(1.0, std::abs(prev))) {
            support = std::move(psup);
            weights = std::move(pw);
            cur = std::move(pruned);
        } else {
            cur = rebuild(weights);
            obj = objective(cur, pr);
        }
        rep.objective_trace.push_back(obj);

        const double rel = (prev - obj) / std::max(std::abs(prev), 1e-12);
        stall = rel < opt.tol_outer ? stall + 1 : 0;
        if (stall >= opt.stall_rounds) break;
    }

    rep.measure = std::move(cur);
    rep.atom_count = rep.measure.size();
    rep.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// Distillation: one unit-coefficient reference whose moment penalty acts on
/// mu - mu*. Substituting nu = mu - mu* turns this into a plain run on
/// residual labels with identical objective values, so the trace carries over
/// unchanged and nu-hat + mu* is returned.
inline SolveReport solve_distillation(const Problem& pr, const SolverOptions& opt = {}) {
    pr.validate();
    if (pr.references.size() != 1 || pr.references.front().coefficient != 1.0)
        throw InvalidParameter("solve_distillation: exactly one reference with coefficient 1");
    if (pr.moment_on != MomentOn::solution_minus_first_reference)
        throw InvalidParameter("solve_distillation: moment penalty must act on the shifted measure");

    const DiscreteMeasure& teacher = pr.references.front().measure;
    Problem shifted = pr;
    shifted.references.clear();
    shifted.moment_on = MomentOn::solution;
    for (std::size_t i = 0; i < shifted.data.size(); ++i)
        shifted.data.labels[i] -= predict(pr, teacher, pr.data.inputs[i]);

    SolveReport rep = conditional_gradient_solve(shifted, opt);
    rep.measure = add(rep.measure, teacher);
    rep.atom_count = rep.measure.size();
    return rep;
}

/// Fusion: conditional gradient on the multi-reference objective, seeded with
/// the coefficient-weighted average of the references so the corrective solves
/// can reach (and exactly cancel) the reference atoms.
inline SolveReport solve_fusion(const Problem& pr, const SolverOptions& opt = {}) {
    pr.validate();
    if (pr.references.size() < 2)
        throw InvalidParameter("solve_fusion: needs at least two references");
    if (pr.moment_on != MomentOn::solution)
        throw InvalidParameter("solve_fusion: moment penalty acts on the solution");

    SolverOptions o = opt;
    if (!o.init) {
        double csum = 0.0;
        for (const Reference& r : pr.references) csum += r.coefficient;
        DiscreteMeasure avg = DiscreteMeasure::empty(pr.space);
        for (const Reference& r : pr.references) {
            const double c =
                csum > 0.0 ? r.coefficient / csum : 1.0 / static_cast<double>(pr.references.size());
            avg = add(avg, scale(r.measure, c));
        }
        o.init = std::move(avg);
    }
    return conditional_gradient_solve(pr, o);
}

/// Companion problem of an alpha = 0 run under the moment map T (weights
/// multiplied by 1 + d^q): plain TV penalty, features divided by the same
/// factor. objective(m, pr) == objective(moment_map(m, q), companion).
inline Problem make_moment_mapped(const Problem& pr) {
    pr.validate();
    if (pr.params.alpha != 0.0)
        throw InvalidParameter("make_moment_mapped: requires alpha == 0");
    if (pr.plain_tv_penalty || pr.feature_scale_exponent)
        throw InvalidParameter("make_moment_mapped: problem is already in companion form");
    if (!pr.references.empty() || pr.moment_on != MomentOn::solution)
        throw InvalidParameter("make_moment_mapped: reference terms are not supported");
    Problem q = pr;
    q.feature_scale_exponent = pr.params.moment_exponent();
    q.plain_tv_penalty = true;
    return q;
}

/// Signed-pair structure of a measure: transport-plan pairing of the balanced
/// part plus the base-atom mass. Summing mass * (delta_plus - delta_minus)
/// over the terms and adding mass_at_base * delta_e reconstructs the measure.
struct DipoleTerm {
    Vec plus;
    Vec minus;
    double mass = 0.0;
};

inline std::pair<std::vector<DipoleTerm>, double> dipole_decomposition(const DiscreteMeasure& m) {
    const auto [balanced, c] = balance_split(m);
    const auto [pos, neg] = jordan_split(balanced);
    std::vector<DipoleTerm> terms;
    if (!pos.is_empty()) {
        const TransportResult tr = w1_distance(pos, neg);
        terms.reserve(tr.plan.size());
        for (const PlanEdge& e : tr.plan)
            terms.push_back(
                {pos.atoms()[e.i].location, neg.atoms()[e.j].location, e.mass});
    }
    return {std::move(terms), c};
}

inline std::string trace_to_csv(const SolveReport& rep) {
    std::string out = "round,objective\n";
    char buf[64];
    for (std::size_t i = 0; i < rep.objective_trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, rep.objective_trace[i]);
        out += buf;
    }
    return out;
}

}  // namespace kru
