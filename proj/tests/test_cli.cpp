#include <catch2/catch_amalgamated.hpp>

#include <lzforge/csv.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using lzforge::CsvTable;
using lzforge::csv_column;
using lzforge::read_csv;

namespace {

const std::string kCli = LZFORGE_CLI_PATH;

fs::path scratch_root() {
    static const fs::path root = [] {
        const fs::path p = fs::temp_directory_path() / "lzforge_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = scratch_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd =
        kCli + " " + args + " >" + out.string() + " 2>" + err.string();
    const int st = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

bool has_comment(const CsvTable& t, const std::string& needle) {
    for (const auto& c : t.comments)
        if (c.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("simulate: linear sweep trajectory") {
    const auto dir = fresh_dir("sim_linear");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "pulse": {"type": "linear_oscillating", "v": 5.0, "lambda_r": 0.0, "omega": 1.0},
      "time": {"T": 40.0, "samples": 500}
    })");
    const auto res = run_cli("simulate --config " + cfg.string() + " --out " +
                                 (dir / "out").string() + " --seed 7",
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);

    const auto t = read_csv((dir / "out" / "trajectory.csv").string());
    CHECK(t.columns == std::vector<std::string>{"t", "population_0", "population_1", "epsilon"});
    CHECK(has_comment(t, "lzforge simulate"));
    CHECK(has_comment(t, "config: {"));
    CHECK(has_comment(t, "seed: 7"));
    REQUIRE(t.rows.size() >= 100);
    // starts in |1>, transfers roughly the single-crossing fraction
    CHECK(t.rows.front()[1] < 1e-9);
    CHECK(t.rows.back()[1] > 0.2);
    CHECK(t.rows.back()[1] < 0.35);
    for (const auto& row : t.rows)
        CHECK(std::abs(row[1] + row[2] - 1.0) < 1e-9);
    // epsilon column follows v t
    CHECK(std::abs(t.rows.front()[3] - 5.0 * t.rows.front()[0]) < 1e-9);
}

TEST_CASE("simulate: erf-tan and pixelated pulses") {
    const auto dir = fresh_dir("sim_erftan");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "pulse": {"type": "erf_tan", "eps0": 50.0, "T": 10.0},
      "time": {"samples": 200}
    })");
    const auto res =
        run_cli("simulate --config " + cfg.string() + " --out " + (dir / "out").string(), dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto t = read_csv((dir / "out" / "trajectory.csv").string());
    CHECK(std::abs(t.rows.front()[3] - 50.0) < 1e-6);
    CHECK(std::abs(t.rows.back()[3] + 50.0) < 1e-6);

    const auto cfg2 = dir / "config_px.json";
    write_text(cfg2, R"({
      "pulse": {"type": "pixelated", "values": [0.0, 0.0, 0.0, 0.0], "dt": 0.7853981633974483},
      "time": {"samples": 100}
    })");
    const auto res2 =
        run_cli("simulate --config " + cfg2.string() + " --out " + (dir / "out2").string(), dir);
    CAPTURE(res2.err);
    REQUIRE(res2.code == 0);
    const auto t2 = read_csv((dir / "out2" / "trajectory.csv").string());
    // zero pulse for pi/delta: complete transfer
    CHECK(std::abs(t2.rows.back()[1] - 1.0) < 1e-9);
}

TEST_CASE("simulate: validation failures exit 1 and name the field") {
    const auto dir = fresh_dir("sim_bad");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({"system": {"delta": 1.0}})");
    const auto res =
        run_cli("simulate --config " + cfg.string() + " --out " + (dir / "o").string(), dir);
    CHECK(res.code == 1);
    CHECK(res.err.find("pulse") != std::string::npos);

    write_text(cfg, R"({"pulse": {"type": "linear_oscillating", "omega": 1.0}, "time": {"T": 1}})");
    const auto res2 =
        run_cli("simulate --config " + cfg.string() + " --out " + (dir / "o").string(), dir);
    CHECK(res2.code == 1);
    CHECK(res2.err.find("pulse.v") != std::string::npos);

    write_text(cfg, "{oops");
    const auto res3 =
        run_cli("simulate --config " + cfg.string() + " --out " + (dir / "o").string(), dir);
    CHECK(res3.code == 1);
    CHECK(res3.err.find("parse") != std::string::npos);

    const auto res4 = run_cli("simulate --config " + (dir / "nope.json").string(), dir);
    CHECK(res4.code == 1);
}

TEST_CASE("design: outputs and infeasibility") {
    const auto dir = fresh_dir("design");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "design": {"v": 5.0, "omega": 10.0, "Ts": 0.8}
    })");
    const auto res = run_cli("design --config " + cfg.string() + " --out " +
                                 (dir / "out").string() + " --format csv,svg",
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto r = read_csv((dir / "out" / "result.csv").string());
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0][csv_column(r, "T")] == 6.0);
    CHECK(r.rows[0][csv_column(r, "lambda_r")] ==
          Catch::Approx(24.04825557695773).epsilon(1e-12));
    CHECK(r.rows[0][csv_column(r, "converged")] == 1.0);
    const double err = r.rows[0][csv_column(r, "survival_error")];
    CHECK(err >= 0.0);
    CHECK(err < 1.0);
    CHECK(fs::exists(dir / "out" / "pulse.csv"));
    CHECK(fs::exists(dir / "out" / "pulse.svg"));

    // the recorded pulse file propagates on its own
    const auto cfg2 = dir / "replay.json";
    write_text(cfg2, "{\"pulse\": {\"type\": \"pixelated\", \"file\": \"" +
                         (dir / "out" / "pulse.csv").string() + "\"}}");
    const auto res2 =
        run_cli("simulate --config " + cfg2.string() + " --out " + (dir / "replay").string(),
                dir);
    CAPTURE(res2.err);
    REQUIRE(res2.code == 0);
    const auto t2 = read_csv((dir / "replay" / "trajectory.csv").string());
    CHECK(std::abs(t2.rows.back()[1] - err) < 5e-3);

    // infeasible switching time
    write_text(cfg, R"({"design": {"v": 10.0, "omega": 50.0, "Ts": 2.8}})");
    const auto res3 =
        run_cli("design --config " + cfg.string() + " --out " + (dir / "bad").string(), dir);
    CHECK(res3.code == 1);
    CHECK(res3.err.find("design") != std::string::npos);
}

TEST_CASE("formats: csv only by default, no svg files") {
    const auto dir = fresh_dir("formats");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({"design": {"v": 5.0, "omega": 10.0, "Ts": 0.8}})");
    const auto res =
        run_cli("design --config " + cfg.string() + " --out " + (dir / "out").string(), dir);
    REQUIRE(res.code == 0);
    CHECK(fs::exists(dir / "out" / "result.csv"));
    CHECK(!fs::exists(dir / "out" / "pulse.svg"));
}

TEST_CASE("grape: convergence and pulse.csv round trip") {
    const auto dir = fresh_dir("grape");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "target": "sigma_x",
      "pulse": {"type": "pixelated",
                "values": [-2.875,-2.625,-2.375,-2.125,-1.875,-1.625,-1.375,-1.125,
                           -0.875,-0.625,-0.375,-0.125,0.125,0.375,0.625,0.875,
                           1.125,1.375,1.625,1.875,2.125,2.375,2.625,2.875],
                "dt": 0.1875},
      "grape": {"learning_rate": 0.01, "max_iterations": 20000, "target_error": 1e-5,
                "buffer_pixels": 3}
    })");
    const auto res = run_cli("grape --config " + cfg.string() + " --out " +
                                 (dir / "out").string(),
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto r = read_csv((dir / "out" / "result.csv").string());
    const double fid = r.rows[0][csv_column(r, "best_fidelity")];
    CHECK(r.rows[0][csv_column(r, "converged")] == 1.0);
    CHECK(fid >= 1.0 - 1e-5);
    const auto pulse = read_csv((dir / "out" / "pulse.csv").string());
    CHECK(pulse.rows.size() == 24);
    CHECK(pulse.columns == std::vector<std::string>{"t", "epsilon"});
    const auto hist = read_csv((dir / "out" / "history.csv").string());
    CHECK(hist.rows.size() >= 2);
    for (std::size_t i = 1; i < hist.rows.size(); ++i)
        CHECK(hist.rows[i][1] >= hist.rows[i - 1][1]);

    // re-loading pulse.csv as the seed reproduces the fidelity exactly
    const auto cfg2 = dir / "replay.json";
    write_text(cfg2, "{\"system\": {\"delta\": 1.0}, \"target\": \"sigma_x\","
                     "\"pulse\": {\"type\": \"pixelated\", \"file\": \"" +
                         (dir / "out" / "pulse.csv").string() +
                         "\"},"
                         "\"grape\": {\"max_iterations\": 0, \"buffer_pixels\": 3}}");
    const auto res2 =
        run_cli("grape --config " + cfg2.string() + " --out " + (dir / "replay").string(), dir);
    // zero-iteration run reports the seed's own fidelity; exit 2 (not converged) is fine
    REQUIRE((res2.code == 0 || res2.code == 2));
    const auto r2 = read_csv((dir / "replay" / "result.csv").string());
    CHECK(std::abs(r2.rows[0][csv_column(r2, "best_fidelity")] - fid) < 1e-8);
}

TEST_CASE("optimize-nm: file plumbing and exit codes") {
    const auto dir = fresh_dir("nm");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "time": {"T": 9.0},
      "initial": {"omega": 30.0},
      "optimizer": {"max_iterations": 40, "restarts": 0, "target_value": 1.0}
    })");
    const auto res = run_cli("optimize-nm --config " + cfg.string() + " --out " +
                                 (dir / "out").string(),
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto r = read_csv((dir / "out" / "result.csv").string());
    CHECK(r.rows[0][csv_column(r, "converged")] == 1.0);
    CHECK(r.rows[0][csv_column(r, "T")] == 9.0);
    CHECK(read_csv((dir / "out" / "pulse.csv").string()).rows.size() == 20000);
    CHECK(!read_csv((dir / "out" / "history.csv").string()).rows.empty());

    // unreachable target: exit 2, outputs still written
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "time": {"T": 9.0},
      "initial": {"omega": 30.0},
      "optimizer": {"max_iterations": 5, "restarts": 0, "target_value": 1e-30}
    })");
    const auto res2 = run_cli("optimize-nm --config " + cfg.string() + " --out " +
                                  (dir / "out2").string(),
                              dir);
    CHECK(res2.code == 2);
    CHECK(fs::exists(dir / "out2" / "result.csv"));
}

TEST_CASE("scan: phase sensitivity long format") {
    const auto dir = fresh_dir("scan_phase");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "scan": {"kind": "phase_sensitivity", "n_phases": 32},
      "design": {"v": 5.0, "omega": 10.0, "Ts": 0.8}
    })");
    const auto res = run_cli("scan --config " + cfg.string() + " --out " +
                                 (dir / "out").string(),
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto t = read_csv((dir / "out" / "scan.csv").string());
    CHECK(t.columns == std::vector<std::string>{"phi", "survival_error"});
    CHECK(t.rows.size() == 32);
    CHECK(has_comment(t, "metric=survival_error"));
    CHECK(has_comment(t, "span_half"));
    for (const auto& row : t.rows) {
        CHECK(row[1] >= 0.0);
        CHECK(row[1] <= 1.0);
    }
}

TEST_CASE("scan: robustness grid long format") {
    const auto dir = fresh_dir("scan_rob");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "time": {"T": 6.0},
      "scan": {"kind": "robustness",
               "v_grid": {"min": 4.5, "max": 5.5, "count": 3},
               "omega_grid": {"min": 9.5, "max": 10.5, "count": 3}},
      "optimal": {"v": 5.0, "lambda": 24.048, "omega": 10.0, "phi": 0.0}
    })");
    const auto res = run_cli("scan --config " + cfg.string() + " --out " +
                                 (dir / "out").string() + " --format csv,svg",
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto t = read_csv((dir / "out" / "scan.csv").string());
    CHECK(t.columns == std::vector<std::string>{"v", "omega", "log10_survival_error"});
    CHECK(t.rows.size() == 9);
    // axis1-major ordering
    CHECK(t.rows[0][0] == 4.5);
    CHECK(t.rows[0][1] == 9.5);
    CHECK(t.rows[1][0] == 4.5);
    CHECK(t.rows[1][1] == 10.0);
    CHECK(t.rows[3][0] == 5.0);
    CHECK(fs::exists(dir / "out" / "scan.svg"));

    // grid that misses the optimum
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "time": {"T": 6.0},
      "scan": {"kind": "robustness",
               "v_grid": {"min": 6.0, "max": 7.0, "count": 3},
               "omega_grid": {"min": 9.8, "max": 10.2, "count": 3}},
      "optimal": {"v": 5.0, "lambda": 24.048, "omega": 10.0, "phi": 0.0}
    })");
    const auto res2 =
        run_cli("scan --config " + cfg.string() + " --out " + (dir / "bad").string(), dir);
    CHECK(res2.code == 1);
    CHECK(res2.err.find("bracket") != std::string::npos);
}

TEST_CASE("scan: adiabatic fidelity with failure flags") {
    const auto dir = fresh_dir("scan_adiab");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "system": {"delta": 1.0},
      "scan": {"kind": "adiabatic_fidelity", "optimize": false,
               "eps0_grid": {"min": 4.0, "max": 10.0, "count": 2, "log": false},
               "t_grid": {"min": 2.0, "max": 6.0, "count": 3}}
    })");
    const auto res = run_cli("scan --config " + cfg.string() + " --out " +
                                 (dir / "out").string(),
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto t = read_csv((dir / "out" / "scan.csv").string());
    CHECK(t.columns ==
          std::vector<std::string>{"eps0", "T", "phase_insensitive_fidelity", "failed"});
    CHECK(t.rows.size() == 6);
    for (const auto& row : t.rows) {
        CHECK(row[3] == 0.0);
        CHECK(row[2] >= 0.0);
        CHECK(row[2] <= 1.0 + 1e-12);
    }
}

TEST_CASE("fit-qsl: points, file input, and degenerate data") {
    const auto dir = fresh_dir("fitqsl");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({
      "data": {"points": [[0.02, 126.0], [0.04, 84.333333333333333], [0.08, 51.0],
                          [0.16, 28.777777777777778], [0.32, 15.705882352941176]]}
    })");
    const auto res = run_cli("fit-qsl --config " + cfg.string() + " --out " +
                                 (dir / "out").string(),
                             dir);
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto r = read_csv((dir / "out" / "result.csv").string());
    CHECK(r.rows[0][csv_column(r, "t0")] == Catch::Approx(1.0).epsilon(1e-6));
    CHECK(r.rows[0][csv_column(r, "c")] == Catch::Approx(5.0).epsilon(1e-6));
    CHECK(r.rows[0][csv_column(r, "delta0")] == Catch::Approx(0.02).epsilon(1e-6));
    CHECK(r.rows[0][csv_column(r, "t0_fixed")] == 0.0);
    CHECK(r.rows[0][csv_column(r, "residual_rms")] < 1e-9);
    const auto ft = read_csv((dir / "out" / "fit.csv").string());
    CHECK(ft.columns == std::vector<std::string>{"delta", "T_QSL", "fitted", "residual"});
    CHECK(ft.rows.size() == 5);

    // same data through a csv file
    {
        CsvTable t;
        t.columns = {"delta", "T_QSL"};
        t.rows = {{0.02, 126.0},
                  {0.04, 84.333333333333333},
                  {0.08, 51.0},
                  {0.16, 28.777777777777778},
                  {0.32, 15.705882352941176}};
        lzforge::write_csv((dir / "data.csv").string(), t);
    }
    write_text(cfg, "{\"data\": {\"file\": \"" + (dir / "data.csv").string() + "\"}}");
    const auto res2 =
        run_cli("fit-qsl --config " + cfg.string() + " --out " + (dir / "out2").string(), dir);
    CAPTURE(res2.err);
    REQUIRE(res2.code == 0);
    const auto r2 = read_csv((dir / "out2" / "result.csv").string());
    CHECK(r2.rows[0][csv_column(r2, "c")] == Catch::Approx(5.0).epsilon(1e-6));

    // degenerate data is a validation error
    write_text(cfg, R"({"data": {"points": [[0.1, 5.0], [0.1, 5.0], [0.1, 5.0]]}})");
    const auto res3 =
        run_cli("fit-qsl --config " + cfg.string() + " --out " + (dir / "bad").string(), dir);
    CHECK(res3.code == 1);
    CHECK(res3.err.find("degenerate") != std::string::npos);
}

TEST_CASE("threads environment variable is validated") {
    const auto dir = fresh_dir("threads_env");
    const auto cfg = dir / "config.json";
    write_text(cfg, R"({"design": {"v": 5.0, "omega": 10.0, "Ts": 0.8}})");
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = "LZFORGE_THREADS=abc " + kCli + " design --config " + cfg.string() +
                            " --out " + (dir / "o").string() + " >" + out.string() + " 2>" +
                            err.string();
    const int st = std::system(cmd.c_str());
    const int code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    CHECK(code == 1);
    CHECK(slurp(err).find("LZFORGE_THREADS") != std::string::npos);
}
