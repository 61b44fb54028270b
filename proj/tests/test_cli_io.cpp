#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "kru/harness.hpp"

using namespace kru;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

/// Runs the installed binary with `args`, capturing stdout; stderr is routed
/// to a scratch file so test logs stay readable.
CmdResult run_cli(const std::string& args, const fs::path& cwd = fs::current_path()) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" + std::string(KRU_CLI_PATH) + "' " +
                            args + " 2>>cli_stderr.log";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int rc = ::pclose(pipe);
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path fixtures = fs::path(KRU_FIXTURE_DIR);

} // namespace

TEST_CASE("norm subcommand prints closed-form values") {
    const fs::path dipole = fixtures / "dipole.json";
    CmdResult r = run_cli("norm '" + dipole.string() + "' --which kr");
    REQUIRE(r.code == 0);
    CHECK(std::stod(r.out) == Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));

    r = run_cli("norm '" + dipole.string() + "' --which tv");
    REQUIRE(r.code == 0);
    CHECK(std::stod(r.out) == Approx(4.0).epsilon(1e-12));

    r = run_cli("norm '" + dipole.string() + "' --which moment --p 1");
    REQUIRE(r.code == 0);
    CHECK(std::stod(r.out) == Approx(4.0).epsilon(1e-12));

    // default norm is the full unbalanced one
    r = run_cli("norm '" + dipole.string() + "'");
    REQUIRE(r.code == 0);
    const DiscreteMeasure m = read_measure_json(dipole);
    CHECK(std::stod(r.out) == Approx(kru_norm(m)).epsilon(1e-12));
}

TEST_CASE("w1 subcommand prints the cost and writes a plan") {
    const fs::path dir = fresh_dir("kru_cli_w1");
    write_measure_json(dir / "a.json",
                       DiscreteMeasure(PointedSpace::euclidean(1),
                                       {{{0.0}, 1.0}, {{2.0}, 1.0}}));
    write_measure_json(dir / "b.json",
                       DiscreteMeasure(PointedSpace::euclidean(1), {{{1.0}, 2.0}}));

    const CmdResult r = run_cli("w1 a.json b.json --plan plan.csv", dir);
    REQUIRE(r.code == 0);
    CHECK(std::stod(r.out) == Approx(2.0).margin(1e-12));
    const std::string plan = slurp(dir / "plan.csv");
    CHECK(plan.rfind("i,j,mass,cost_edge\n", 0) == 0);
    CHECK(std::count(plan.begin(), plan.end(), '\n') == 3);

    // mass mismatch is an input error
    write_measure_json(dir / "c.json",
                       DiscreteMeasure(PointedSpace::euclidean(1), {{{1.0}, 0.5}}));
    CHECK(run_cli("w1 a.json c.json", dir).code == 2);
}

TEST_CASE("bad inputs exit with code 2 and demos with code 0") {
    const fs::path dir = fresh_dir("kru_cli_errors");
    CHECK(run_cli("norm does_not_exist.json", dir).code == 2);

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run_cli("norm broken.json", dir).code == 2);

    std::ofstream(dir / "bad_cfg.json") << R"({"seed": 1, "space": {"dimension": 3},
        "params": {"alpha": -1.0, "beta": 0.1}})";
    CHECK(run_cli("train bad_cfg.json", dir).code == 2);

    CHECK(run_cli("norm", dir).code == 2);           // missing positional
    CHECK(run_cli("demo everything", dir).code == 2); // not in the demo set
    CHECK(run_cli("--help", dir).code == 0);

    const CmdResult demo = run_cli("demo mass-escape --out demos", dir);
    CHECK(demo.code == 0);
    const Json report = Json::parse(slurp(dir / "demos" / "demo_mass_escape.json"));
    CHECK(report["escape"].size() == 6);
    CHECK(report["meta"].contains("generated_at"));

    CHECK(run_cli("demo kr-vs-wass --out demos", dir).code == 0);
    CHECK(fs::exists(dir / "demos" / "demo_kr_vs_wass.json"));
}

TEST_CASE("train fixture reproduces the teacher recovery") {
    const fs::path dir = fresh_dir("kru_cli_recovery");
    fs::copy_file(fixtures / "teacher_2atom_d2.json", dir / "teacher_2atom_d2.json");
    fs::copy_file(fixtures / "train_recovery.json", dir / "train_recovery.json");

    const CmdResult r = run_cli("train train_recovery.json", dir);
    REQUIRE(r.code == 0);

    const DiscreteMeasure hat = read_measure_json(dir / "train_measure.json");
    const DiscreteMeasure teacher = read_measure_json(dir / "teacher_2atom_d2.json");
    RegParams params;
    params.alpha = 0.0;
    params.beta = 1e-4;
    params.p = 2.0;
    CHECK(g_alpha_beta(hat, params) <=
          g_alpha_beta(teacher, params) + 1e-6 * params.beta);
    CHECK(uniform_error(hat, teacher, Activation::relu(), 1.0, 64) <= 1e-2);

    const Json report = Json::parse(slurp(dir / "train_report.json"));
    CHECK(report["objective"].get<double>() ==
          Approx(std::stod(r.out.substr(r.out.find("objective") + 10))).epsilon(1e-12));
    CHECK(report["meta"].contains("generated_at"));
    CHECK(slurp(dir / "train_trace.csv").rfind("round,objective\n", 0) == 0);
}

TEST_CASE("solve and experiment outputs are deterministic modulo metadata") {
    const fs::path dir = fresh_dir("kru_cli_determinism");
    write_measure_json(dir / "teacher.json",
                       DiscreteMeasure(PointedSpace::euclidean(3),
                                       {{{0.6, 0.0, 0.8}, 1.0}, {{-0.48, 0.64, 0.6}, -0.7}}));
    std::ofstream(dir / "train.json") << R"({
        "seed": 9,
        "space": {"dimension": 3},
        "activation": "relu",
        "params": {"alpha": 0.0, "beta": 0.001, "p": 2.0},
        "data": {"teacher": "teacher.json", "N": 120,
                 "input_distribution": {"kind": "gaussian", "sigma": 1.0}},
        "output_dir": "run"
    })";
    REQUIRE(run_cli("train train.json", dir).code == 0);
    const std::string measure1 = slurp(dir / "run" / "train_measure.json");
    const std::string trace1 = slurp(dir / "run" / "train_trace.csv");
    Json report1 = Json::parse(slurp(dir / "run" / "train_report.json"));

    fs::remove_all(dir / "run");
    REQUIRE(run_cli("train train.json", dir).code == 0);
    CHECK(slurp(dir / "run" / "train_measure.json") == measure1);
    CHECK(slurp(dir / "run" / "train_trace.csv") == trace1);
    Json report2 = Json::parse(slurp(dir / "run" / "train_report.json"));
    report1.erase("meta");
    report2.erase("meta");
    CHECK(report1.dump() == report2.dump());

    std::ofstream(dir / "exp.json") << R"({
        "seed": 4,
        "teacher": "teacher.json",
        "N_grid": [20, 40],
        "beta_schedule": {"rule": "power", "c": 0.1, "gamma": 0.5},
        "input_distribution": {"kind": "gaussian", "sigma": 1.0},
        "radius_R": 1.0,
        "grid_size": 40,
        "output_dir": "sweep"
    })";
    REQUIRE(run_cli("experiment exp.json", dir).code == 0);
    const std::string csv1 = slurp(dir / "sweep" / "experiment.csv");
    REQUIRE(run_cli("experiment exp.json", dir).code == 0);
    CHECK(slurp(dir / "sweep" / "experiment.csv") == csv1);
    CHECK(csv1.rfind("N,beta,", 0) == 0);
    CHECK(std::count(csv1.begin(), csv1.end(), '\n') == 3);
    const Json erep = Json::parse(slurp(dir / "sweep" / "experiment_report.json"));
    REQUIRE(erep["rows"].size() == 2);
    CHECK(erep["rows"][0]["status"].get<std::string>() == "ok");
    CHECK(erep["config"]["seed"].get<int>() == 4);
}

TEST_CASE("distill and fuse subcommands write their solutions") {
    const fs::path dir = fresh_dir("kru_cli_distill_fuse");
    const DiscreteMeasure teacher(PointedSpace::euclidean(3),
                                  {{{0.6, 0.0, 0.8}, 1.0}, {{-0.48, 0.64, 0.6}, -0.7}});
    write_measure_json(dir / "teacher.json", teacher);
    std::ofstream(dir / "distill.json") << R"({
        "seed": 5,
        "space": {"dimension": 3},
        "activation": "relu",
        "params": {"alpha": 0.0, "beta": 0.01, "p": 2.0},
        "data": {"teacher": "teacher.json", "N": 50,
                 "input_distribution": {"kind": "gaussian", "sigma": 1.0}},
        "references": [{"coefficient": 1.0, "measure": "teacher.json"}],
        "output_dir": "out"
    })";
    REQUIRE(run_cli("distill distill.json", dir).code == 0);
    // exact labels and no extra pull: distillation returns the teacher itself
    const DiscreteMeasure distilled = read_measure_json(dir / "out" / "distill_measure.json");
    CHECK(kru_distance(distilled, teacher) <= 1e-12);

    write_measure_json(dir / "ref1.json",
                       DiscreteMeasure(PointedSpace::euclidean(3), {{{1.0, 1.0, 0.0}, 1.0}}));
    write_measure_json(dir / "ref2.json",
                       DiscreteMeasure(PointedSpace::euclidean(3), {{{-1.0, -1.0, 0.0}, 1.0}}));
    std::ofstream(dir / "fuse.json") << R"({
        "seed": 11,
        "space": {"dimension": 3},
        "activation": "relu",
        "params": {"alpha": 1.0, "beta": 1e-9, "p": 2.0},
        "data_weight": 0.0,
        "references": [{"coefficient": 0.5, "measure": "ref1.json"},
                        {"coefficient": 0.5, "measure": "ref2.json"}],
        "solver": {"max_outer": 12},
        "output_dir": "out"
    })";
    REQUIRE(run_cli("fuse fuse.json", dir).code == 0);
    const DiscreteMeasure fused = read_measure_json(dir / "out" / "fuse_measure.json");
    CHECK(total_mass(fused) == Approx(1.0).margin(1e-6));
    CHECK(fs::exists(dir / "out" / "fuse_trace.csv"));
}
