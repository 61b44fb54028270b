#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "kru/dataset.hpp"
#include "kru/measure_json.hpp"
#include "kru/network.hpp"
#include "kru/report_json.hpp"
#include "kru/rng.hpp"
#include "kru/solver.hpp"

namespace kru {

/// Sampling law for experiment inputs.
struct InputDistribution {
    enum class Kind { gaussian, uniform_ball };
    Kind kind = Kind::gaussian;
    double sigma = 1.0;   // gaussian standard deviation
    double radius = 1.0;  // uniform_ball radius

    static InputDistribution gaussian(double sigma) {
        InputDistribution d;
        d.kind = Kind::gaussian;
        d.sigma = sigma;
        return d;
    }

    static InputDistribution uniform_ball(double radius) {
        InputDistribution d;
        d.kind = Kind::uniform_ball;
        d.radius = radius;
        return d;
    }

    void validate() const {
        if (kind == Kind::gaussian && (!(sigma > 0.0) || !std::isfinite(sigma)))
            throw InvalidParameter("input_distribution: sigma must be > 0");
        if (kind == Kind::uniform_ball && (!(radius > 0.0) || !std::isfinite(radius)))
            throw InvalidParameter("input_distribution: R must be > 0");
    }

    Vec sample(std::size_t d, Rng& rng) const {
        Vec x(d);
        if (kind == Kind::gaussian) {
            for (double& c : x) c = sigma * rng.gauss();
            return x;
        }
        // rejection from the bounding cube keeps the draw exact and deterministic
        for (;;) {
            for (double& c : x) c = rng.uniform(-radius, radius);
            if (sq_norm(x) <= radius * radius) return x;
        }
    }
};

/// iid inputs from `dist`, labels realized by the teacher plus optional
/// Gaussian noise. Deterministic per seed.
inline Dataset generate_dataset(const DiscreteMeasure& teacher, const Activation& act,
                                std::size_t n, double noise_std, const InputDistribution& dist,
                                std::uint64_t seed) {
    if (n < 1) throw InvalidParameter("generate_dataset: N must be >= 1");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
        throw InvalidParameter("generate_dataset: noise_std must be >= 0");
    dist.validate();
    if (teacher.space().dimension < 1)
        throw InvalidParameter("generate_dataset: teacher space must have dimension >= 1");
    const std::size_t d = teacher.space().dimension - 1;
    Rng rng(seed);
    Dataset data;
    data.inputs.reserve(n);
    data.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec x = dist.sample(d, rng);
        double y = realize(teacher, act, x);
        if (noise_std > 0.0) y += noise_std * rng.gauss();
        data.labels.push_back(y);
        data.inputs.push_back(std::move(x));
    }
    data.validate();
    return data;
}

/// Penalty schedule over sample sizes: beta(N) = c (constant) or c * N^(-gamma).
/// The power default gamma = 1/2 is a heuristic; no rate is guaranteed.
struct BetaSchedule {
    enum class Kind { constant, power };
    Kind kind = Kind::power;
    double c = 0.1;
    double gamma = 0.5;

    static BetaSchedule constant(double c) { return {Kind::constant, c, 0.0}; }
    static BetaSchedule power(double c, double gamma) { return {Kind::power, c, gamma}; }

    void validate() const {
        if (!(c > 0.0) || !std::isfinite(c))
            throw InvalidParameter("beta_schedule: c must be > 0");
        if (kind == Kind::power && (!(gamma > 0.0) || !(gamma <= 1.0)))
            throw InvalidParameter("beta_schedule: gamma must lie in (0, 1]");
    }

    double operator()(std::size_t n) const {
        if (kind == Kind::constant) return c;
        return c * std::pow(static_cast<double>(n), -gamma);
    }
};

/// Large-data-limit sweep description. `activation`, `activation_param` and
/// `p` select the model the rows are fit with (alpha = 0, squared loss).
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string teacher_path;
    std::vector<std::size_t> n_grid;
    BetaSchedule beta_schedule;
    double noise_std = 0.0;
    InputDistribution input_distribution;
    double radius_r = 1.0;
    std::size_t grid_size = 200;
    std::string output_dir;
    std::string activation = "relu";
    double activation_param = 0.0;
    double p = 2.0;

    void validate() const {
        if (teacher_path.empty())
            throw InvalidParameter("experiment config: teacher path must be set");
        if (n_grid.empty()) throw InvalidParameter("experiment config: N_grid must be non-empty");
        for (std::size_t i = 0; i < n_grid.size(); ++i) {
            if (n_grid[i] < 1)
                throw InvalidParameter("experiment config: N_grid entries must be >= 1");
            if (i > 0 && n_grid[i] <= n_grid[i - 1])
                throw InvalidParameter("experiment config: N_grid must be strictly increasing");
        }
        if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
            throw InvalidParameter("experiment config: noise_std must be >= 0");
        if (!(radius_r > 0.0) || !std::isfinite(radius_r))
            throw InvalidParameter("experiment config: radius_R must be > 0");
        if (grid_size < 2) throw InvalidParameter("experiment config: grid_size must be >= 2");
        if (!(p >= 1.0) || !std::isfinite(p))
            throw InvalidParameter("experiment config: p must be >= 1");
        beta_schedule.validate();
        input_distribution.validate();
        activation_from_name(activation, activation_param);
    }
};

inline InputDistribution input_distribution_from_json(const Json& j) {
    const std::string kind = j.value("kind", std::string("gaussian"));
    if (kind == "gaussian") return InputDistribution::gaussian(j.value("sigma", 1.0));
    if (kind == "uniform_ball") return InputDistribution::uniform_ball(j.value("R", 1.0));
    throw InvalidParameter("input_distribution: unknown kind '" + kind + "'");
}

inline Json input_distribution_to_json(const InputDistribution& d) {
    Json j;
    if (d.kind == InputDistribution::Kind::gaussian) {
        j["kind"] = "gaussian";
        j["sigma"] = d.sigma;
    } else {
        j["kind"] = "uniform_ball";
        j["R"] = d.radius;
    }
    return j;
}

inline BetaSchedule beta_schedule_from_json(const Json& j) {
    const std::string rule = j.value("rule", std::string("power"));
    if (rule == "constant") return BetaSchedule::constant(j.value("c", 0.1));
    if (rule == "power") return BetaSchedule::power(j.value("c", 0.1), j.value("gamma", 0.5));
    throw InvalidParameter("beta_schedule: unknown rule '" + rule + "'");
}

inline Json beta_schedule_to_json(const BetaSchedule& s) {
    Json j;
    j["rule"] = s.kind == BetaSchedule::Kind::constant ? "constant" : "power";
    j["c"] = s.c;
    if (s.kind == BetaSchedule::Kind::power) j["gamma"] = s.gamma;
    return j;
}

inline ExperimentConfig experiment_config_from_json(const Json& j) {
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
    if (!j.contains("teacher"))
        throw InvalidParameter("experiment config: missing 'teacher' measure path");
    cfg.teacher_path = j.at("teacher").get<std::string>();
    if (!j.contains("N_grid")) throw InvalidParameter("experiment config: missing 'N_grid'");
    for (const Json& n : j.at("N_grid")) cfg.n_grid.push_back(n.get<std::size_t>());
    if (j.contains("beta_schedule")) cfg.beta_schedule = beta_schedule_from_json(j["beta_schedule"]);
    cfg.noise_std = j.value("noise_std", 0.0);
    if (j.contains("input_distribution"))
        cfg.input_distribution = input_distribution_from_json(j["input_distribution"]);
    cfg.radius_r = j.value("radius_R", 1.0);
    cfg.grid_size = j.value("grid_size", static_cast<std::size_t>(200));
    cfg.output_dir = j.value("output_dir", std::string());
    cfg.activation = j.value("activation", std::string("relu"));
    cfg.activation_param = j.value("activation_param", 0.0);
    cfg.p = j.value("p", 2.0);
    cfg.validate();
    return cfg;
}

inline Json experiment_config_to_json(const ExperimentConfig& cfg) {
    Json j;
    j["seed"] = cfg.seed;
    j["teacher"] = cfg.teacher_path;
    j["N_grid"] = cfg.n_grid;
    j["beta_schedule"] = beta_schedule_to_json(cfg.beta_schedule);
    j["noise_std"] = cfg.noise_std;
    j["input_distribution"] = input_distribution_to_json(cfg.input_distribution);
    j["radius_R"] = cfg.radius_r;
    j["grid_size"] = cfg.grid_size;
    j["output_dir"] = cfg.output_dir;
    j["activation"] = cfg.activation;
    j["activation_param"] = cfg.activation_param;
    j["p"] = cfg.p;
    return j;
}

/// One sweep row. Numeric fields are NaN when the row failed; `status` then
/// carries the reason.
struct ExperimentRow {
    std::size_t n = 0;
    double beta = 0.0;
    double kru_distance_to_reference = std::numeric_limits<double>::quiet_NaN();
    double uniform_error_r = std::numeric_limits<double>::quiet_NaN();
    double solution_norm = std::numeric_limits<double>::quiet_NaN();
    double objective_value = std::numeric_limits<double>::quiet_NaN();
    std::string status = "ok";
};

/// Row parallelism cap from the KRU_THREADS environment variable (default 1).
inline int harness_threads() {
    const char* env = std::getenv("KRU_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) return 1;
    return static_cast<int>(v < 64 ? v : 64);
}

namespace detail {

inline ExperimentRow experiment_row(const ExperimentConfig& cfg, const DiscreteMeasure& teacher,
                                    const Activation& act, std::size_t index) {
    ExperimentRow row;
    row.n = cfg.n_grid[index];
    row.beta = cfg.beta_schedule(row.n);
    try {
        const std::uint64_t row_seed = derive_seed(cfg.seed, index);
        Problem pr;
        pr.space = teacher.space();
        pr.activation = act;
        pr.loss = LossKind::squared;
        pr.params.alpha = 0.0;
        pr.params.beta = row.beta;
        pr.params.p = cfg.p;
        pr.data = generate_dataset(teacher, act, row.n, cfg.noise_std, cfg.input_distribution,
                                   row_seed);
        SolverOptions opt;
        opt.seed = derive_seed(row_seed, 0x736f6c76ULL);
        const SolveReport rep = conditional_gradient_solve(pr, opt);
        row.kru_distance_to_reference = kru_distance(rep.measure, teacher);
        row.uniform_error_r =
            uniform_error(rep.measure, teacher, act, cfg.radius_r, cfg.grid_size);
        row.solution_norm = weighted_dual_norm(rep.measure, cfg.p);
        row.objective_value = rep.objective_trace.back();
    } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
    }
    return row;
}

} // namespace detail

/// ERM sweep over N_grid against a reference teacher. Rows are independent
/// solves with seeds derived per index, so results do not depend on the
/// execution order or thread count.
inline std::vector<ExperimentRow> large_data_experiment(const ExperimentConfig& cfg,
                                                        const DiscreteMeasure& teacher) {
    cfg.validate();
    const Activation act = activation_from_name(cfg.activation, cfg.activation_param);
    std::vector<ExperimentRow> rows(cfg.n_grid.size());
    const std::size_t want = static_cast<std::size_t>(harness_threads());
    const std::size_t threads = want < rows.size() ? want : rows.size();
    if (threads <= 1) {
        for (std::size_t i = 0; i < rows.size(); ++i)
            rows[i] = detail::experiment_row(cfg, teacher, act, i);
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= rows.size()) return;
                rows[i] = detail::experiment_row(cfg, teacher, act, i);
            }
        });
    for (std::thread& t : pool) t.join();
    return rows;
}

inline std::vector<ExperimentRow> large_data_experiment(const ExperimentConfig& cfg) {
    return large_data_experiment(cfg, read_measure_json(cfg.teacher_path));
}

inline std::string experiment_rows_to_csv(const std::vector<ExperimentRow>& rows) {
    std::string out =
        "N,beta,kru_distance_to_reference,uniform_error_R,solution_norm,objective,status\n";
    char buf[512];
    for (const ExperimentRow& r : rows) {
        std::string status = r.status;
        for (char& ch : status)
            if (ch == ',' || ch == '\n') ch = ';';
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,", r.n, r.beta,
                      r.kru_distance_to_reference, r.uniform_error_r, r.solution_norm,
                      r.objective_value);
        out += buf;
        out += status;
        out += '\n';
    }
    return out;
}

inline Json experiment_rows_to_json(const std::vector<ExperimentRow>& rows) {
    Json arr = Json::array();
    for (const ExperimentRow& r : rows) {
        Json j;
        j["N"] = r.n;
        j["beta"] = r.beta;
        j["kru_distance_to_reference"] = r.kru_distance_to_reference;
        j["uniform_error_R"] = r.uniform_error_r;
        j["solution_norm"] = r.solution_norm;
        j["objective"] = r.objective_value;
        j["status"] = r.status;
        arr.push_back(std::move(j));
    }
    return arr;
}

namespace detail {

inline void demo_require(bool ok, const std::string& what) {
    if (!ok) throw NumericalFailure("demo check failed: " + what);
}

/// Random nonzero measure on a 1-D parameter line, for the rescaling sweep.
inline DiscreteMeasure random_line_measure(const PointedSpace& space, Rng& rng,
                                           std::size_t atoms) {
    std::vector<Atom> a;
    a.reserve(atoms);
    for (std::size_t k = 0; k < atoms; ++k) {
        const double loc = rng.uniform(-3.0, 3.0);
        const double mag = 0.05 + 1.95 * rng.uniform();
        const double sgn = rng.uniform() < 0.5 ? -1.0 : 1.0;
        a.push_back({{loc}, sgn * mag});
    }
    return DiscreteMeasure(space, std::move(a));
}

} // namespace detail

/// Scalar ill-posedness example: one feature relu(theta), target 1/2 reached
/// by vanishing weights escaping to infinity. The infimum 3/4 is approached
/// but never attained, and rescaling any nonzero measure strictly lowers the
/// objective. Throws NumericalFailure if any of those values fail to hold.
inline Json demo_mass_escape() {
    const PointedSpace space = PointedSpace::euclidean(1);
    Problem pr;
    pr.space = space;
    pr.activation = Activation::relu();
    pr.loss = LossKind::squared;
    pr.params.alpha = 0.5;
    pr.params.beta = 0.5;
    pr.params.p = 1.0;
    pr.data.inputs = {Vec{}};
    pr.data.labels = {1.0};
    pr.validate();

    Json seq = Json::array();
    double prev_obj = std::numeric_limits<double>::infinity();
    double prev_kru = std::numeric_limits<double>::infinity();
    double obj = 0.0, kru = 0.0;
    for (int k = 1; k <= 6; ++k) {
        const double z = std::pow(10.0, k);
        const DiscreteMeasure mu = DiscreteMeasure::dirac(space, {z}, 1.0 / (2.0 * z));
        obj = objective(mu, pr);
        kru = kru_norm(mu);
        detail::demo_require(obj < prev_obj, "objective not strictly decreasing along the escape");
        detail::demo_require(kru < prev_kru, "KRu norm not strictly decreasing along the escape");
        prev_obj = obj;
        prev_kru = kru;
        Json row;
        row["z"] = z;
        row["objective"] = obj;
        row["kru_norm"] = kru;
        seq.push_back(std::move(row));
    }
    detail::demo_require(obj > 0.75, "objective fell to or below the unattained infimum 3/4");
    detail::demo_require(obj - 0.75 <= 1e-4, "objective gap to 3/4 exceeds 1e-4 at z = 1e6");
    detail::demo_require(std::abs(kru - 0.5) <= 1e-5, "KRu norm gap to 1/2 exceeds 1e-5 at z = 1e6");

    // strict rescaling decrease on random nonzero measures
    const double scale = 2.0;
    Rng rng(0x6d617373ULL);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const DiscreteMeasure m =
            detail::random_line_measure(space, rng, 1 + static_cast<std::size_t>(trial % 4));
        const DiscreteMeasure mr = rescale_pushforward(m, scale);
        const double before = objective(m, pr);
        const double after = objective(mr, pr);
        detail::demo_require(after < before, "rescaled objective failed to decrease strictly");
        const double drop =
            (pr.params.alpha * std::abs(total_mass(m)) + pr.params.beta * tv_norm(m)) *
            (1.0 - 1.0 / scale);
        detail::demo_require(std::abs((before - after) - drop) <= 1e-9 * (1.0 + drop),
                             "rescaling drop deviates from the closed form");
        ++checked;
    }

    Json report;
    report["setting"] = {{"alpha", pr.params.alpha},
                         {"beta", pr.params.beta},
                         {"p", pr.params.p},
                         {"activation", pr.activation.name()},
                         {"target", 1.0}};
    report["escape"] = std::move(seq);
    report["objective_limit"] = 0.75;
    report["kru_norm_limit"] = 0.5;
    report["rescaling"] = {{"measures", checked}, {"scale", scale}, {"strict_decrease", true}};
    const auto warn = ill_posedness_warning(pr);
    report["warning"] = warn ? Json(*warn) : Json(nullptr);
    return report;
}

namespace detail {

/// Oscillating 2-Lipschitz test function built on the node sequence n_k:
/// f(1/n_k) = (-1)^k / n_k, interpolated linearly between nodes, constant
/// above the first node and linear through the origin below the last.
inline double oscillating_pair_function(double t, const std::vector<double>& nk) {
    const double at = std::abs(t);
    if (at == 0.0) return 0.0;
    if (at >= 1.0 / nk.front()) return 1.0 / nk.front();
    const std::size_t K = nk.size();
    if (at < 1.0 / nk.back()) {
        const double sgn = (K - 1) % 2 == 0 ? 1.0 : -1.0;
        return sgn * at;
    }
    for (std::size_t k = 0; k + 1 < K; ++k) {
        if (at >= 1.0 / nk[k + 1] && at < 1.0 / nk[k]) {
            const double sgn = k % 2 == 0 ? 1.0 : -1.0;
            const double slope = (nk[k + 1] + nk[k]) / (nk[k] - nk[k + 1]);
            return sgn * (1.0 / nk[k] - (at - 1.0 / nk[k]) * slope);
        }
    }
    return 0.0;
}

} // namespace detail

inline Json demo_kr_vs_wass();

/// Dipole sequence mu_n = n(delta_{1/n} - delta_0): unit KR norm for every n,
/// yet pairings with a fixed 2-Lipschitz function oscillate as (-1)^k along
/// n_k = 3^k, so no subsequence converges weak-star. The report also carries
/// the snowflake-pairing variant from demo_kr_vs_wass.
inline Json demo_dipole_noncompactness() {
    const PointedSpace line = PointedSpace::euclidean(1);
    double max_dev = 0.0;
    for (int n = 1; n <= 10000; ++n) {
        const DiscreteMeasure mu(
            line, {{{1.0 / n}, static_cast<double>(n)}, {{0.0}, -static_cast<double>(n)}});
        max_dev = std::max(max_dev, std::abs(kr_norm(mu) - 1.0));
    }
    detail::demo_require(max_dev <= 1e-10, "KR norm of the dipole sequence deviates from 1");

    std::vector<double> nk;
    for (double n = 1.0; n <= 10000.0; n *= 3.0) nk.push_back(n);
    Json osc = Json::array();
    for (std::size_t k = 0; k < nk.size(); ++k) {
        const double pairing =
            nk[k] * (detail::oscillating_pair_function(1.0 / nk[k], nk) -
                     detail::oscillating_pair_function(0.0, nk));
        const double expected = k % 2 == 0 ? 1.0 : -1.0;
        detail::demo_require(std::abs(pairing - expected) <= 1e-9,
                             "oscillating pairing misses (-1)^k");
        Json row;
        row["n"] = nk[k];
        row["pairing"] = pairing;
        osc.push_back(std::move(row));
    }

    // sampled Lipschitz bound of the constructed test function
    Rng rng(0x6469706fULL);
    double max_slope = 0.0;
    for (int k = 0; k < 2000; ++k) {
        const double a = rng.uniform(-1.2, 1.2);
        const double b = rng.uniform(-1.2, 1.2);
        if (a == b) continue;
        const double df = detail::oscillating_pair_function(a, nk) -
                          detail::oscillating_pair_function(b, nk);
        max_slope = std::max(max_slope, std::abs(df) / std::abs(a - b));
    }
    detail::demo_require(max_slope <= 2.0 + 1e-9, "test function exceeds Lipschitz constant 2");

    Json report;
    report["kr_norm"] = {{"n_max", 10000}, {"value", 1.0}, {"max_deviation", max_dev}};
    report["oscillation"] = std::move(osc);
    report["test_function_lipschitz_bound"] = 2.0;
    report["test_function_sampled_slope"] = max_slope;
    report["kr_vs_wass"] = demo_kr_vs_wass();
    return report;
}

/// KR norm versus the snowflake pairing: mu_r = |r|^{-s}(delta_r - delta_0)
/// has plain KR norm |r|^{1-s} -> 0, yet its pairing with |z|^s (1-Lipschitz
/// for the snowflake metric d(x,y) = |x-y|^s) stays constant, so the family
/// cannot converge weak-star to zero.
inline Json demo_kr_vs_wass() {
    const double s = 0.5;
    const PointedSpace plain = PointedSpace::euclidean(1, 1.0);
    const PointedSpace snow = PointedSpace::euclidean(1, s);

    Json rows = Json::array();
    double prev = std::numeric_limits<double>::infinity();
    double kr_plain = 0.0;
    for (int k = 1; k <= 6; ++k) {
        const double r = std::pow(10.0, -k);
        const double c = std::pow(r, -s);
        const DiscreteMeasure mu_plain(plain, {{{r}, c}, {{0.0}, -c}});
        const DiscreteMeasure mu_snow(snow, {{{r}, c}, {{0.0}, -c}});
        kr_plain = kr_norm(mu_plain);
        const double kr_snow = kr_norm(mu_snow);
        const double pairing = c * std::pow(std::abs(r), s);
        detail::demo_require(std::abs(kr_plain - std::pow(r, 1.0 - s)) <= 1e-12 * (1.0 + kr_plain),
                             "plain KR norm deviates from |r|^{1-s}");
        detail::demo_require(kr_plain < prev, "plain KR norm not strictly decreasing");
        detail::demo_require(std::abs(kr_snow - 1.0) <= 1e-10,
                             "snowflake KR norm deviates from 1");
        detail::demo_require(std::abs(pairing - 1.0) <= 1e-12,
                             "pairing with |z|^s deviates from its constant");
        prev = kr_plain;
        Json row;
        row["r"] = r;
        row["kr_norm_plain"] = kr_plain;
        row["kr_norm_snowflake"] = kr_snow;
        row["pairing_with_abs_z_pow_s"] = pairing;
        rows.push_back(std::move(row));
    }
    detail::demo_require(kr_plain <= 1.1e-3, "plain KR norm failed to vanish at r = 1e-6");

    Json report;
    report["s"] = s;
    report["rows"] = std::move(rows);
    report["pairing_constant"] = 1.0;
    report["note"] =
        "the plain KR norm vanishes while the snowflake pairing stays at its constant, "
        "so the dipole family does not converge weak-star to zero";
    return report;
}

/// --- Problem/solver configuration from JSON (shared by the CLI and tests) ---

inline LossKind loss_kind_from_json(const Json& j) {
    return loss_from_name(j.value("loss", std::string("squared")));
}

inline RegParams reg_params_from_json(const Json& j) {
    RegParams params;
    params.alpha = j.value("alpha", 0.0);
    params.beta = j.value("beta", 1.0);
    params.p = j.value("p", 2.0);
    const std::string mode = j.value("mode", std::string("kru_moment"));
    if (mode == "kru_moment") {
        params.mode = RegMode::kru_moment;
    } else if (mode == "weighted_tv") {
        params.mode = RegMode::weighted_tv;
    } else {
        throw InvalidParameter("params: unknown mode '" + mode + "'");
    }
    params.q = j.value("q", 2.0);
    params.validate();
    return params;
}

inline SolverOptions solver_options_from_json(const Json& j, std::uint64_t default_seed) {
    SolverOptions opt;
    opt.seed = default_seed;
    if (j.is_null()) return opt;
    opt.max_outer = j.value("max_outer", opt.max_outer);
    opt.tol_outer = j.value("tol_outer", opt.tol_outer);
    opt.stall_rounds = j.value("stall_rounds", opt.stall_rounds);
    opt.prune_tol = j.value("prune_tol", opt.prune_tol);
    opt.max_inner = j.value("max_inner", opt.max_inner);
    opt.tol_inner = j.value("tol_inner", opt.tol_inner);
    opt.tol_stat = j.value("tol_stat", opt.tol_stat);
    opt.multistart = j.value("multistart", opt.multistart);
    opt.ascent_iters = j.value("ascent_iters", opt.ascent_iters);
    opt.cert_slack = j.value("cert_slack", opt.cert_slack);
    opt.seed = j.value("seed", opt.seed);
    return opt;
}

/// Builds a Problem from a config object. Relative file paths (dataset CSV,
/// teacher and reference measures) resolve against `base_dir`.
inline Problem problem_from_json(const Json& j, const std::filesystem::path& base_dir) {
    Problem pr;
    if (!j.contains("space") || !j["space"].contains("dimension"))
        throw InvalidParameter("config: missing space.dimension");
    const std::size_t dim = j["space"]["dimension"].get<std::size_t>();
    const double metric = j["space"].value("metric_exponent", 1.0);
    pr.space = PointedSpace::euclidean(dim, metric);
    if (j["space"].contains("base_point")) {
        Vec base = j["space"]["base_point"].get<Vec>();
        if (base.size() != dim)
            throw InvalidParameter("config: base_point length does not match dimension");
        if (!all_finite(base)) throw InvalidParameter("config: base_point must be finite");
        pr.space.base_point = std::move(base);
    }
    pr.activation =
        activation_from_name(j.value("activation", std::string("relu")),
                             j.value("activation_param", 0.0));
    pr.loss = loss_kind_from_json(j);
    if (j.contains("params")) pr.params = reg_params_from_json(j["params"]);
    pr.data_weight = j.value("data_weight", 1.0);

    const std::uint64_t seed = j.value("seed", static_cast<std::uint64_t>(0));
    if (j.contains("data")) {
        const Json& d = j["data"];
        if (d.contains("csv")) {
            pr.data = read_dataset_csv(base_dir / d["csv"].get<std::string>());
        } else if (d.contains("teacher")) {
            const DiscreteMeasure teacher =
                read_measure_json(base_dir / d["teacher"].get<std::string>());
            InputDistribution dist;
            if (d.contains("input_distribution"))
                dist = input_distribution_from_json(d["input_distribution"]);
            pr.data = generate_dataset(teacher, pr.activation,
                                       d.value("N", static_cast<std::size_t>(100)),
                                       d.value("noise_std", 0.0), dist,
                                       d.value("seed", derive_seed(seed, 0x64617461ULL)));
        } else if (d.contains("inputs")) {
            for (const Json& x : d["inputs"]) pr.data.inputs.push_back(x.get<Vec>());
            for (const Json& y : d.at("labels")) pr.data.labels.push_back(y.get<double>());
        } else if (!d.is_null() && !d.empty()) {
            throw InvalidParameter("config: data must provide 'csv', 'teacher' or 'inputs'");
        }
    }

    if (j.contains("references")) {
        for (const Json& r : j["references"]) {
            Reference ref;
            ref.coefficient = r.value("coefficient", 1.0);
            if (!r.contains("measure"))
                throw InvalidParameter("config: reference entry missing 'measure' path");
            ref.measure = read_measure_json(base_dir / r["measure"].get<std::string>());
            pr.references.push_back(std::move(ref));
        }
    }

    const std::string moment_on = j.value("moment_on", std::string("solution"));
    if (moment_on == "solution") {
        pr.moment_on = MomentOn::solution;
    } else if (moment_on == "solution_minus_first_reference") {
        pr.moment_on = MomentOn::solution_minus_first_reference;
    } else {
        throw InvalidParameter("config: unknown moment_on '" + moment_on + "'");
    }
    pr.validate();
    return pr;
}

} // namespace kru
