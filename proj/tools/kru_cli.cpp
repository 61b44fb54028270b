#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "kru/harness.hpp"

namespace fs = std::filesystem;
using namespace kru;

namespace {

std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    return p.is_absolute() ? p : base / p;
}

Json read_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidParameter("cannot open config file: " + path.string());
    try {
        Json j;
        in >> j;
        return j;
    } catch (const Json::exception& e) {
        throw InvalidParameter("cannot parse " + path.string() + ": " + e.what());
    }
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

int run_norm(const std::string& measure_path, const std::string& which, double p) {
    const DiscreteMeasure m = read_measure_json(measure_path);
    double value = 0.0;
    if (which == "kru") {
        value = kru_norm(m);
    } else if (which == "kr") {
        value = kr_norm(m);
    } else if (which == "tv") {
        value = tv_norm(m);
    } else {
        value = p_moment(m, p);
    }
    std::printf("%.17g\n", value);
    return 0;
}

int run_w1(const std::string& a_path, const std::string& b_path, const std::string& plan_path) {
    const DiscreteMeasure a = read_measure_json(a_path);
    const DiscreteMeasure b = read_measure_json(b_path);
    const TransportResult res = w1_distance(a, b);
    if (!plan_path.empty()) write_text_atomic(plan_path, plan_to_csv(res, a, b));
    std::printf("%.17g\n", res.cost);
    return 0;
}

int run_solve(const std::string& kind, const std::string& config_path) {
    const fs::path cfg_file = fs::path(config_path);
    const fs::path base = cfg_file.has_parent_path() ? cfg_file.parent_path() : fs::path(".");
    const Json j = read_config(cfg_file);

    Problem pr = problem_from_json(j, base);
    if (kind == "distill" && !j.contains("moment_on")) {
        pr.moment_on = MomentOn::solution_minus_first_reference;
        pr.validate();
    }
    const std::uint64_t seed = j.value("seed", static_cast<std::uint64_t>(0));
    const Json jsolver = j.contains("solver") ? j["solver"] : Json(nullptr);
    SolverOptions opt = solver_options_from_json(jsolver, derive_seed(seed, 0x736f6c76ULL));
    if (!jsolver.is_null() && jsolver.contains("init"))
        opt.init = read_measure_json(resolve(base, jsolver["init"].get<std::string>()));

    SolveReport rep;
    if (kind == "train") {
        rep = conditional_gradient_solve(pr, opt);
    } else if (kind == "distill") {
        rep = solve_distillation(pr, opt);
    } else {
        rep = solve_fusion(pr, opt);
    }
    print_warnings(rep.warnings);

    const fs::path out_dir = resolve(base, j.value("output_dir", std::string(".")));
    const fs::path measure_path = (out_dir / (kind + "_measure.json")).lexically_normal();
    write_measure_json(measure_path, rep.measure);
    Json report = solve_report_to_json(rep);
    report["config"] = j;
    report["meta"]["generated_at"] = utc_timestamp();
    write_text_atomic(out_dir / (kind + "_report.json"), report.dump(2) + "\n");
    write_text_atomic(out_dir / (kind + "_trace.csv"), trace_to_csv(rep));

    std::printf("%s: objective %.17g, %zu atoms, %d rounds -> %s\n", kind.c_str(),
                rep.objective_trace.back(), rep.measure.size(), rep.iterations,
                measure_path.string().c_str());
    return 0;
}

int run_experiment(const std::string& config_path) {
    const fs::path cfg_file = fs::path(config_path);
    const fs::path base = cfg_file.has_parent_path() ? cfg_file.parent_path() : fs::path(".");
    const Json j = read_config(cfg_file);

    ExperimentConfig cfg = experiment_config_from_json(j);
    cfg.teacher_path = resolve(base, cfg.teacher_path).string();
    const std::vector<ExperimentRow> rows = large_data_experiment(cfg);

    const fs::path out_dir =
        resolve(base, cfg.output_dir.empty() ? std::string(".") : cfg.output_dir);
    const fs::path csv_path = (out_dir / "experiment.csv").lexically_normal();
    write_text_atomic(csv_path, experiment_rows_to_csv(rows));
    Json report;
    report["config"] = j;
    report["rows"] = experiment_rows_to_json(rows);
    report["meta"]["generated_at"] = utc_timestamp();
    write_text_atomic(out_dir / "experiment_report.json", report.dump(2) + "\n");

    std::size_t failed = 0;
    for (const ExperimentRow& r : rows) {
        if (r.status != "ok") {
            ++failed;
            std::fprintf(stderr, "warning: N=%zu %s\n", r.n, r.status.c_str());
        }
    }
    std::printf("experiment: %zu rows (%zu failed) -> %s\n", rows.size(), failed,
                csv_path.string().c_str());
    return 0;
}

int run_demo(const std::string& name, const std::string& out_dir) {
    Json report;
    std::string file;
    if (name == "mass-escape") {
        report = demo_mass_escape();
        file = "demo_mass_escape.json";
    } else if (name == "dipoles") {
        report = demo_dipole_noncompactness();
        file = "demo_dipoles.json";
    } else {
        report = demo_kr_vs_wass();
        file = "demo_kr_vs_wass.json";
    }
    report["meta"]["generated_at"] = utc_timestamp();
    const fs::path path = (fs::path(out_dir) / file).lexically_normal();
    write_text_atomic(path, report.dump(2) + "\n");
    std::printf("demo %s: all checks passed -> %s\n", name.c_str(), path.string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"norms, transport and sparse measure optimization for shallow networks"};
    app.require_subcommand(1);

    std::string norm_path, norm_which = "kru";
    double norm_p = 2.0;
    CLI::App* norm = app.add_subcommand("norm", "evaluate a norm of a measure JSON file");
    norm->add_option("measure", norm_path, "measure JSON file")->required();
    norm->add_option("--which", norm_which, "kru|kr|tv|moment (default kru)")
        ->check(CLI::IsMember({"kru", "kr", "tv", "moment"}));
    norm->add_option("--p", norm_p, "moment exponent for --which moment (default 2)");

    std::string w1_a, w1_b, w1_plan;
    CLI::App* w1 = app.add_subcommand("w1", "Wasserstein-1 distance between two marginals");
    w1->add_option("a", w1_a, "first measure JSON file")->required();
    w1->add_option("b", w1_b, "second measure JSON file")->required();
    w1->add_option("--plan", w1_plan, "write the optimal plan to this CSV file");

    std::string train_cfg, distill_cfg, fuse_cfg, exp_cfg;
    CLI::App* train = app.add_subcommand("train", "regularized ERM from a config JSON");
    train->add_option("config", train_cfg, "config JSON file")->required();
    CLI::App* distill = app.add_subcommand("distill", "sparsify a reference network");
    distill->add_option("config", distill_cfg, "config JSON file")->required();
    CLI::App* fuse = app.add_subcommand("fuse", "fuse reference networks");
    fuse->add_option("config", fuse_cfg, "config JSON file")->required();
    CLI::App* expcmd = app.add_subcommand("experiment", "large-data sweep from a config JSON");
    expcmd->add_option("config", exp_cfg, "config JSON file")->required();

    std::string demo_name, demo_out = ".";
    CLI::App* demo = app.add_subcommand("demo", "self-checking reproductions of the examples");
    demo->add_option("name", demo_name, "mass-escape|dipoles|kr-vs-wass")
        ->required()
        ->check(CLI::IsMember({"mass-escape", "dipoles", "kr-vs-wass"}));
    demo->add_option("--out", demo_out, "output directory (default .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    try {
        if (*norm) return run_norm(norm_path, norm_which, norm_p);
        if (*w1) return run_w1(w1_a, w1_b, w1_plan);
        if (*train) return run_solve("train", train_cfg);
        if (*distill) return run_solve("distill", distill_cfg);
        if (*fuse) return run_solve("fuse", fuse_cfg);
        if (*expcmd) return run_experiment(exp_cfg);
        if (*demo) return run_demo(demo_name, demo_out);
    } catch (const NumericalFailure& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
