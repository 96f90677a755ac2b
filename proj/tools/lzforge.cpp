#include <CLI11.hpp>
#include <json.hpp>

#include <lzforge/lzforge.hpp>

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lzforge;

namespace {

struct CliError : std::runtime_error {
    int code;
    CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

// ---- config access helpers; errors name the offending field ----

const json* child(const json& o, const char* key) {
    if (!o.is_object()) return nullptr;
    const auto it = o.find(key);
    return it == o.end() ? nullptr : &*it;
}

json obj_at(const json& o, const char* key) {
    const json* c = child(o, key);
    if (!c) return json::object();
    if (!c->is_object()) throw CliError(1, std::string("field must be an object: ") + key);
    return *c;
}

double req_num(const json& o, const char* key, const std::string& ctx) {
    const json* c = child(o, key);
    if (!c) throw CliError(1, "missing field: " + ctx + "." + key);
    if (!c->is_number()) throw CliError(1, "field must be a number: " + ctx + "." + key);
    return c->get<double>();
}

double opt_num(const json& o, const char* key, const std::string& ctx, double def) {
    const json* c = child(o, key);
    if (!c) return def;
    if (!c->is_number()) throw CliError(1, "field must be a number: " + ctx + "." + key);
    return c->get<double>();
}

bool opt_bool(const json& o, const char* key, const std::string& ctx, bool def) {
    const json* c = child(o, key);
    if (!c) return def;
    if (!c->is_boolean()) throw CliError(1, "field must be a boolean: " + ctx + "." + key);
    return c->get<bool>();
}

std::string opt_str(const json& o, const char* key, const std::string& ctx,
                    const std::string& def) {
    const json* c = child(o, key);
    if (!c) return def;
    if (!c->is_string()) throw CliError(1, "field must be a string: " + ctx + "." + key);
    return c->get<std::string>();
}

// ---- run-wide settings resolved from config + flags ----

struct RunContext {
    std::string command;
    fs::path dir = ".";
    bool csv = true;
    bool svg = false;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string energy_unit = "delta";
    json resolved;  // embedded in every output file

    std::string time_unit() const { return energy_unit == "GHz" ? "ns" : "1/delta"; }

    std::vector<std::string> comments() const {
        return {"lzforge " + command, "config: " + resolved.dump(),
                "seed: " + std::to_string(seed)};
    }

    void write_table(const std::string& name, CsvTable t) const {
        if (!csv) return;
        t.comments = comments();
        write_csv((dir / name).string(), t);
    }

    void write_figure(const std::string& name, const std::string& content) const {
        if (!svg) return;
        std::string head = "<!--\n";
        for (const auto& c : comments()) head += "# " + c + "\n";
        head += "-->\n";
        write_svg((dir / name).string(), head + content);
    }
};

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string formats;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError(1, "cannot open config: " + path);
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw CliError(1, "config parse error in " + path + ": " + e.what());
    }
}

RunContext make_context(const std::string& command, const json& cfg, const CommonFlags& flags) {
    RunContext ctx;
    ctx.command = command;

    const json units = obj_at(cfg, "units");
    ctx.energy_unit = opt_str(units, "energy_unit", "units", "delta");
    if (ctx.energy_unit != "delta" && ctx.energy_unit != "GHz")
        throw CliError(1, "units.energy_unit must be \"delta\" or \"GHz\"");

    const json output = obj_at(cfg, "output");
    std::string dir = opt_str(output, "directory", "output", ".");
    if (!flags.out_dir.empty()) dir = flags.out_dir;
    ctx.dir = dir;

    std::vector<std::string> formats;
    if (!flags.formats.empty()) {
        std::string cur;
        for (char ch : flags.formats + ",") {
            if (ch == ',') {
                if (!cur.empty()) formats.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
    } else if (const json* f = child(output, "formats")) {
        if (!f->is_array()) throw CliError(1, "field must be an array: output.formats");
        for (const auto& e : *f) {
            if (!e.is_string()) throw CliError(1, "output.formats entries must be strings");
            formats.push_back(e.get<std::string>());
        }
    } else {
        formats = {"csv"};
    }
    ctx.csv = ctx.svg = false;
    for (const auto& f : formats) {
        if (f == "csv")
            ctx.csv = true;
        else if (f == "svg")
            ctx.svg = true;
        else
            throw CliError(1, "output.formats entries must be \"csv\" or \"svg\", got \"" + f +
                                  "\"");
    }

    const double cfg_seed = opt_num(output, "seed", "output", 0.0);
    ctx.seed = flags.seed_set ? flags.seed : static_cast<std::uint64_t>(cfg_seed);

    ctx.threads = 1;
    if (const char* env = std::getenv("LZFORGE_THREADS")) {
        try {
            ctx.threads = std::max(1, std::stoi(env));
        } catch (const std::exception&) {
            throw CliError(1, "LZFORGE_THREADS is not an integer");
        }
    }
    if (flags.threads > 0) ctx.threads = flags.threads;

    std::error_code ec;
    fs::create_directories(ctx.dir, ec);
    if (ec) throw CliError(1, "cannot create output directory: " + ctx.dir.string());

    ctx.resolved["units"]["energy_unit"] = ctx.energy_unit;
    ctx.resolved["output"]["directory"] = ctx.dir.string();
    json fmts = json::array();
    if (ctx.csv) fmts.push_back("csv");
    if (ctx.svg) fmts.push_back("svg");
    ctx.resolved["output"]["formats"] = fmts;
    ctx.resolved["output"]["seed"] = ctx.seed;
    ctx.resolved["threads"] = ctx.threads;
    return ctx;
}

TwoLevelSystem parse_system(const json& cfg, RunContext& ctx) {
    const json sys = obj_at(cfg, "system");
    TwoLevelSystem out{opt_num(sys, "delta", "system", 1.0)};
    try {
        out.validate();
    } catch (const std::exception& e) {
        throw CliError(1, std::string("system.delta: ") + e.what());
    }
    ctx.resolved["system"]["delta"] = out.delta;
    return out;
}

// ---- pulse block parsing (simulate and grape seeds) ----

struct ParsedPulse {
    PulseWaveform wf;
    double t0 = 0.0, t1 = 0.0;   // propagation domain
    double sweep_T = 0.0;        // linear sweep duration (jump-model window)
    bool is_linear = false;
    LinearOscillating lin;
};

ParsedPulse parse_pulse(const json& cfg, const TwoLevelSystem& sys, RunContext& ctx) {
    const json* pb = child(cfg, "pulse");
    if (!pb || !pb->is_object() || pb->empty())
        throw CliError(1, "missing or empty block: pulse");
    const json& p = *pb;
    const std::string type = opt_str(p, "type", "pulse", "");
    if (type.empty()) throw CliError(1, "missing field: pulse.type");
    const json time = obj_at(cfg, "time");

    ParsedPulse out;
    json rp{{"type", type}};
    if (type == "linear_oscillating") {
        LinearOscillating lin;
        lin.v = req_num(p, "v", "pulse");
        if (!(lin.v > 0.0)) throw CliError(1, "pulse.v must be > 0");
        lin.lambda_r = opt_num(p, "lambda_r", "pulse", 0.0);
        lin.omega = req_num(p, "omega", "pulse");
        if (!(lin.omega > 0.0)) throw CliError(1, "pulse.omega must be > 0");
        lin.phi = opt_num(p, "phi", "pulse", 0.0);
        if (const json* w = child(p, "window")) {
            if (!w->is_object()) throw CliError(1, "field must be an object: pulse.window");
            lin.window = Window{req_num(*w, "T", "pulse.window"), req_num(*w, "Ts", "pulse.window")};
            rp["window"] = {{"T", lin.window->T}, {"Ts", lin.window->Ts}};
        }
        try {
            validate(lin);
        } catch (const std::exception& e) {
            throw CliError(1, std::string("pulse.window: ") + e.what());
        }
        out.sweep_T = lin.window ? lin.window->T : req_num(time, "T", "time");
        double half = opt_num(time, "span_half", "time", 0.0);
        if (!(half > 0.0))
            half = lin.window ? settle_span_half(sys, lin, 50.0) : 0.5 * out.sweep_T;
        out.t0 = -half;
        out.t1 = half;
        out.is_linear = true;
        out.lin = lin;
        out.wf = lin;
        rp["v"] = lin.v;
        rp["lambda_r"] = lin.lambda_r;
        rp["omega"] = lin.omega;
        rp["phi"] = lin.phi;
        ctx.resolved["time"]["T"] = out.sweep_T;
        ctx.resolved["time"]["span_half"] = half;
    } else if (type == "erf_tan") {
        ErfTan et;
        et.T = req_num(p, "T", "pulse");
        et.eps0 = req_num(p, "eps0", "pulse");
        et.lambda_erf = opt_num(p, "lambda_erf", "pulse", et.T > 0.0 ? 4.0 / et.T : 0.0);
        et.delta = opt_num(p, "delta", "pulse", sys.delta);
        try {
            validate(et);
        } catch (const std::exception& e) {
            throw CliError(1, std::string("pulse: ") + e.what());
        }
        out.t0 = -0.5 * et.T;
        out.t1 = 0.5 * et.T;
        out.sweep_T = et.T;
        out.wf = et;
        rp["eps0"] = et.eps0;
        rp["lambda_erf"] = et.lambda_erf;
        rp["T"] = et.T;
        rp["delta"] = et.delta;
    } else if (type == "pixelated") {
        Pixelated px;
        if (const json* f = child(p, "file")) {
            if (!f->is_string()) throw CliError(1, "field must be a string: pulse.file");
            CsvTable t;
            try {
                t = read_csv(f->get<std::string>());
            } catch (const std::exception& e) {
                throw CliError(1, std::string("pulse.file: ") + e.what());
            }
            const auto tcol = csv_column(t, "t");
            const auto ecol = csv_column(t, "epsilon");
            if (t.rows.size() < 2) throw CliError(1, "pulse.file needs at least two rows");
            px.dt = t.rows[1][tcol] - t.rows[0][tcol];
            for (const auto& row : t.rows) px.values.push_back(row[ecol]);
        } else if (const json* vals = child(p, "values")) {
            if (!vals->is_array()) throw CliError(1, "field must be an array: pulse.values");
            for (const auto& e : *vals) {
                if (!e.is_number()) throw CliError(1, "pulse.values entries must be numbers");
                px.values.push_back(e.get<double>());
            }
            px.dt = req_num(p, "dt", "pulse");
        } else {
            throw CliError(1, "pixelated pulse needs pulse.file or pulse.values");
        }
        try {
            validate(px);
        } catch (const std::exception& e) {
            throw CliError(1, std::string("pulse: ") + e.what());
        }
        out.t0 = 0.0;
        out.t1 = px.dt * static_cast<double>(px.values.size());
        out.sweep_T = out.t1;
        rp["dt"] = px.dt;
        rp["pixel_count"] = px.values.size();
        out.wf = std::move(px);
    } else {
        throw CliError(1, "pulse.type must be linear_oscillating, erf_tan, or pixelated");
    }
    ctx.resolved["pulse"] = rp;
    return out;
}

std::array<cplx, 2> parse_initial(const json& cfg, RunContext& ctx) {
    std::array<cplx, 2> init{cplx(0.0), cplx(1.0)};
    const json* is = child(cfg, "initial_state");
    if (!is) {
        ctx.resolved["initial_state"] = {{0.0, 0.0}, {1.0, 0.0}};
        return init;
    }
    if (!is->is_array() || is->size() != 2)
        throw CliError(1, "initial_state must be an array of two entries");
    for (std::size_t k = 0; k < 2; ++k) {
        const json& e = (*is)[k];
        if (e.is_number()) {
            init[k] = cplx(e.get<double>(), 0.0);
        } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
            init[k] = cplx(e[0].get<double>(), e[1].get<double>());
        } else {
            throw CliError(1, "initial_state entries must be numbers or [re, im] pairs");
        }
    }
    if (!(std::norm(init[0]) + std::norm(init[1]) > 0.0))
        throw CliError(1, "initial_state must be nonzero");
    ctx.resolved["initial_state"] = {{init[0].real(), init[0].imag()},
                                     {init[1].real(), init[1].imag()}};
    return init;
}

double pulse_value_clamped(const PulseWaveform& wf, double t, double t0, double t1) {
    const double eps_t = std::min(std::max(t, t0), t1 - 1e-12 * (t1 - t0));
    return evaluate_pulse(wf, eps_t);
}

// dense (t, epsilon) record of an analog waveform
CsvTable waveform_table(const PulseWaveform& wf, double t0, double t1, std::size_t rows) {
    CsvTable t;
    t.columns = {"t", "epsilon"};
    t.rows.reserve(rows);
    const double dt = (t1 - t0) / static_cast<double>(rows);
    for (std::size_t j = 0; j < rows; ++j) {
        const double tj = t0 + (static_cast<double>(j) + 0.5) * dt;
        t.rows.push_back({tj, evaluate_pulse(wf, tj)});
    }
    return t;
}

std::string pulse_svg_from_table(const CsvTable& t, const std::string& title,
                                 const RunContext& ctx) {
    SvgSeries s;
    for (const auto& row : t.rows) {
        s.x.push_back(row[0]);
        s.y.push_back(row[1]);
    }
    return svg_line_plot({s}, title, "t [" + ctx.time_unit() + "]",
                         "epsilon [" + ctx.energy_unit + "]");
}

// ---- subcommands ----

int cmd_simulate(const json& cfg, const CommonFlags& flags) {
    RunContext ctx = make_context("simulate", cfg, flags);
    const TwoLevelSystem sys = parse_system(cfg, ctx);
    ParsedPulse pp = parse_pulse(cfg, sys, ctx);
    const auto initial = parse_initial(cfg, ctx);

    const json time = obj_at(cfg, "time");
    const auto steps_cfg = static_cast<std::size_t>(opt_num(time, "steps", "time", 0.0));
    const auto samples = static_cast<std::size_t>(opt_num(time, "samples", "time", 2000.0));
    const json model = obj_at(cfg, "model");
    const int m0 = static_cast<int>(opt_num(model, "m0", "model", -1.0));
    ctx.resolved["time"]["steps"] = steps_cfg;
    ctx.resolved["time"]["samples"] = samples;
    ctx.resolved["model"]["m0"] = m0;

    Trajectory traj;
    std::vector<JumpEvent> jumps;
    std::vector<double> plateaus;
    if (pp.is_linear) {
        TraceConfig tc;
        tc.steps = steps_cfg;
        tc.trajectory_samples = samples;
        tc.m0 = m0;
        tc.span_half = -pp.t0;
        tc.initial = initial;
        auto trace = trace_trajectory(sys, pp.lin, pp.sweep_T, tc);
        traj = std::move(trace.trajectory);
        jumps = std::move(trace.jumps);
        plateaus = std::move(trace.plateau_populations);
    } else {
        const std::size_t steps =
            steps_cfg ? steps_cfg : recommended_steps(sys, pp.wf, pp.t0, pp.t1);
        traj = propagate(sys, pp.wf, pp.t0, pp.t1, steps, initial, samples).trajectory;
    }

    CsvTable t;
    t.columns = {"t", "population_0", "population_1", "epsilon"};
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const double ti = traj.times[i];
        t.rows.push_back({ti, traj.populations[i], std::norm(traj.states[i][1]),
                          pulse_value_clamped(pp.wf, ti, pp.t0, pp.t1)});
    }
    ctx.write_table("trajectory.csv", t);

    if (ctx.svg) {
        SvgSeries pop;
        pop.color = "#1f77b4";
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            pop.x.push_back(traj.times[i]);
            pop.y.push_back(traj.populations[i]);
        }
        std::vector<SvgSeries> series{pop};
        if (!jumps.empty()) {
            SvgSeries overlay;
            overlay.color = "#d62728";
            const double nan = std::numeric_limits<double>::quiet_NaN();
            for (std::size_t k = 0; k < jumps.size(); ++k) {
                const double a = jumps[k].time;
                const double b = k + 1 < jumps.size() ? jumps[k + 1].time : traj.times.back();
                overlay.x.insert(overlay.x.end(), {a, b, nan});
                overlay.y.insert(overlay.y.end(), {plateaus[k], plateaus[k], nan});
            }
            series.push_back(overlay);
        }
        ctx.write_figure("trajectory.svg",
                         svg_line_plot(series, "population transfer",
                                       "t [" + ctx.time_unit() + "]", "population_0"));
    }
    return 0;
}

int cmd_design(const json& cfg, const CommonFlags& flags) {
    RunContext ctx = make_context("design", cfg, flags);
    const TwoLevelSystem sys = parse_system(cfg, ctx);
    const json d = obj_at(cfg, "design");
    const double v = req_num(d, "v", "design");
    const double omega = req_num(d, "omega", "design");
    const double Ts = req_num(d, "Ts", "design");
    DesignResult res;
    try {
        res = design_diabatic_pulse(v, omega, Ts, sys.delta);
    } catch (const std::exception& e) {
        throw CliError(1, std::string("design: ") + e.what());
    }
    ctx.resolved["design"] = {{"v", v}, {"omega", omega}, {"Ts", Ts}};

    const double half = settle_span_half(sys, res.pulse, 50.0);
    TraceConfig tc;
    tc.trajectory_samples = 0;
    tc.span_half = half;
    const auto trace = trace_trajectory(sys, res.pulse, res.T, tc);
    const double err = survival_error(trace.unitary);

    CsvTable r;
    r.columns = {"delta", "v", "omega", "Ts", "T", "lambda_r", "phi", "extent_half",
                 "span_half", "survival_error", "converged"};
    r.rows.push_back({sys.delta, v, omega, Ts, res.T, res.pulse.lambda_r, res.pulse.phi,
                      res.extent_half, half, err, 1.0});
    ctx.write_table("result.csv", r);

    // sampled densely enough that the file itself propagates faithfully
    const double rate =
        res.pulse.v * res.extent_half + res.pulse.lambda_r + res.pulse.omega + sys.delta;
    auto rows = static_cast<std::size_t>(std::ceil(2.0 * half * rate / 0.2));
    rows = std::min<std::size_t>(
        std::max<std::size_t>(
            static_cast<std::size_t>(opt_num(d, "pulse_rows", "design", 0.0)), rows),
        1500000);
    const auto pt = waveform_table(res.pulse, -half, half, rows);
    ctx.write_table("pulse.csv", pt);
    if (ctx.svg) {
        const auto zoom = waveform_table(res.pulse, -res.extent_half - 3.0,
                                         res.extent_half + 3.0, 4000);
        ctx.write_figure("pulse.svg", pulse_svg_from_table(zoom, "designed pulse", ctx));
    }
    std::cout << "design: T=" << format_g17(res.T) << " survival_error=" << format_g17(err)
              << "\n";
    return 0;
}

SimplexConfig parse_simplex(const json& cfg, RunContext& ctx) {
    const json o = obj_at(cfg, "optimizer");
    SimplexConfig sc;
    sc.initial_simplex_scale =
        opt_num(o, "initial_simplex_scale", "optimizer", sc.initial_simplex_scale);
    sc.max_iterations = static_cast<std::size_t>(
        opt_num(o, "max_iterations", "optimizer", static_cast<double>(sc.max_iterations)));
    sc.target_value = opt_num(o, "target_value", "optimizer", sc.target_value);
    sc.restarts = static_cast<std::size_t>(
        opt_num(o, "restarts", "optimizer", static_cast<double>(sc.restarts)));
    try {
        sc.validate();
    } catch (const std::exception& e) {
        throw CliError(1, std::string("optimizer: ") + e.what());
    }
    ctx.resolved["optimizer"] = {{"initial_simplex_scale", sc.initial_simplex_scale},
                                 {"max_iterations", sc.max_iterations},
                                 {"target_value", sc.target_value},
                                 {"restarts", sc.restarts}};
    return sc;
}

int cmd_optimize_nm(const json& cfg, const CommonFlags& flags) {
    RunContext ctx = make_context("optimize-nm", cfg, flags);
    const TwoLevelSystem sys = parse_system(cfg, ctx);
    const json time = obj_at(cfg, "time");
    const double T = req_num(time, "T", "time");
    if (!(T > 0.0)) throw CliError(1, "time.T must be > 0");
    ctx.resolved["time"]["T"] = T;

    const json ib = obj_at(cfg, "initial");
    const double omega0 = opt_num(ib, "omega", "initial", 50.0 * std::max(sys.delta, 1e-12));
    const double v0 = opt_num(ib, "v", "initial", 3.0 * omega0 / T);
    const double lambda0 = opt_num(ib, "lambda", "initial", kBesselJ0Zero * omega0);
    const double phi0 = opt_num(ib, "phi", "initial", 0.0);
    ctx.resolved["initial"] = {{"v", v0}, {"lambda", lambda0}, {"omega", omega0}, {"phi", phi0}};

    const SimplexConfig sc = parse_simplex(cfg, ctx);
    OptimizationResult res;
    try {
        res = optimize_oscillation_params(sys, T, {v0, lambda0, omega0, phi0}, sc);
    } catch (const std::exception& e) {
        throw CliError(1, std::string("optimize-nm: ") + e.what());
    }

    CsvTable r;
    r.columns = {"delta", "T", "v", "lambda", "omega", "phi", "best_value", "iterations",
                 "converged"};
    r.rows.push_back({sys.delta, T, res.best_parameters[0], res.best_parameters[1],
                      res.best_parameters[2], res.best_parameters[3], res.best_value,
                      static_cast<double>(res.iterations_used), res.converged ? 1.0 : 0.0});
    ctx.write_table("result.csv", r);

    CsvTable h;
    h.columns = {"iteration", "best_value"};
    for (std::size_t i = 0; i < res.value_history.size(); ++i)
        h.rows.push_back({static_cast<double>(i), res.value_history[i]});
    ctx.write_table("history.csv", h);

    LinearOscillating best{res.best_parameters[0], res.best_parameters[1],
                           res.best_parameters[2], res.best_parameters[3], std::nullopt};
    ctx.write_table("pulse.csv", waveform_table(best, -0.5 * T, 0.5 * T, 20000));
    if (ctx.svg) {
        SvgSeries s;
        for (std::size_t i = 0; i < res.value_history.size(); ++i) {
            s.x.push_back(static_cast<double>(i));
            s.y.push_back(std::log10(std::max(res.value_history[i], 1e-300)));
        }
        ctx.write_figure("result.svg", svg_line_plot({s}, "simplex convergence", "iteration",
                                                     "log10(survival error)"));
    }
    std::cout << "optimize-nm: best_value=" << format_g17(res.best_value)
              << " iterations=" << res.iterations_used
              << (res.converged ? " converged" : " NOT converged") << "\n";
    return res.converged ? 0 : 2;
}

GrapeConfig parse_grape(const json& cfg, RunContext& ctx, std::size_t default_pixels = 256) {
    const json g = obj_at(cfg, "grape");
    GrapeConfig gc;
    gc.pixel_count = static_cast<std::size_t>(
        opt_num(g, "pixel_count", "grape", static_cast<double>(default_pixels)));
    gc.learning_rate = opt_num(g, "learning_rate", "grape", gc.learning_rate);
    gc.max_iterations = static_cast<std::size_t>(
        opt_num(g, "max_iterations", "grape", static_cast<double>(gc.max_iterations)));
    gc.target_error = opt_num(g, "target_error", "grape", gc.target_error);
    gc.buffer_pixels = static_cast<std::size_t>(
        opt_num(g, "buffer_pixels", "grape", static_cast<double>(gc.buffer_pixels)));
    if (const json* s = child(g, "smoothing_sigma")) {
        if (!s->is_number()) throw CliError(1, "field must be a number: grape.smoothing_sigma");
        gc.smoothing_sigma = s->get<double>();
    }
    gc.record_history = opt_bool(g, "record_history", "grape", true);
    try {
        gc.validate();
    } catch (const std::exception& e) {
        throw CliError(1, std::string("grape: ") + e.what());
    }
    json rg{{"pixel_count", gc.pixel_count},
            {"learning_rate", gc.learning_rate},
            {"max_iterations", gc.max_iterations},
            {"target_error", gc.target_error},
            {"buffer_pixels", gc.buffer_pixels},
            {"record_history", gc.record_history}};
    if (gc.smoothing_sigma) rg["smoothing_sigma"] = *gc.smoothing_sigma;
    ctx.resolved["grape"] = rg;
    return gc;
}

int cmd_grape(const json& cfg, const CommonFlags& flags) {
    RunContext ctx = make_context("grape", cfg, flags);
    const TwoLevelSystem sys = parse_system(cfg, ctx);
    ParsedPulse pp = parse_pulse(cfg, sys, ctx);

    const std::string target_name = opt_str(cfg, "target", "", "identity");
    Unitary2 target;
    if (target_name == "identity")
        target = Unitary2::identity();
    else if (target_name == "sigma_x")
        target = Unitary2::sigma_x();
    else
        throw CliError(1, "target must be \"identity\" or \"sigma_x\"");
    ctx.resolved["target"] = target_name;

    std::size_t seed_pixels = 256;
    if (const auto* px = std::get_if<Pixelated>(&pp.wf)) seed_pixels = px->values.size();
    GrapeConfig gc = parse_grape(cfg, ctx, seed_pixels);

    Pixelated seed;
    double t_offset;
    if (const auto* px = std::get_if<Pixelated>(&pp.wf)) {
        if (px->values.size() != gc.pixel_count)
            throw CliError(1, "grape.pixel_count does not match the pixelated seed length");
        seed = *px;
        t_offset = 0.0;
    } else {
        seed = pixelate(pp.wf, gc.pixel_count, pp.t0, pp.t1);
        t_offset = pp.t0;
    }

    GrapeResult res;
    try {
        res = grape_optimize(sys, seed, target, gc);
    } catch (const std::exception& e) {
        throw CliError(1, std::string("grape: ") + e.what());
    }

    CsvTable r;
    r.columns = {"delta", "target_sigma_x", "pixel_count", "dt", "best_fidelity", "best_error",
                 "iterations", "converged"};
    r.rows.push_back({sys.delta, target_name == "sigma_x" ? 1.0 : 0.0,
                      static_cast<double>(gc.pixel_count), res.best_pulse.dt, res.best_fidelity,
                      res.best_error, static_cast<double>(res.iterations_used),
                      res.converged ? 1.0 : 0.0});
    ctx.write_table("result.csv", r);

    CsvTable pt;
    pt.columns = {"t", "epsilon"};
    for (std::size_t j = 0; j < res.best_pulse.values.size(); ++j)
        pt.rows.push_back({t_offset + (static_cast<double>(j) + 0.5) * res.best_pulse.dt,
                           res.best_pulse.values[j]});
    ctx.write_table("pulse.csv", pt);

    if (gc.record_history) {
        CsvTable h;
        h.columns = {"iteration", "fidelity"};
        for (std::size_t i = 0; i < res.fidelity_history.size(); ++i)
            h.rows.push_back({static_cast<double>(i), res.fidelity_history[i]});
        ctx.write_table("history.csv", h);
    }
    if (ctx.svg) {
        ctx.write_figure("pulse.svg", pulse_svg_from_table(pt, "grape pulse", ctx));
        if (gc.record_history) {
            SvgSeries s;
            for (std::size_t i = 0; i < res.fidelity_history.size(); ++i) {
                s.x.push_back(static_cast<double>(i));
                s.y.push_back(std::log10(std::max(1.0 - res.fidelity_history[i], 1e-300)));
            }
            ctx.write_figure("result.svg", svg_line_plot({s}, "grape convergence", "iteration",
                                                         "log10(error)"));
        }
    }
    std::cout << "grape: best_error=" << format_g17(res.best_error)
              << " iterations=" << res.iterations_used
              << (res.converged ? " converged" : " NOT converged") << "\n";
    return res.converged ? 0 : 2;
}

std::vector<double> parse_grid(const json& o, const char* key, const std::string& ctx_name,
                               double center, std::size_t def_count, double def_rel) {
    const json g = obj_at(o, key);
    const auto count = static_cast<std::size_t>(
        opt_num(g, "count", ctx_name, static_cast<double>(def_count)));
    if (count == 0) throw CliError(1, ctx_name + ".count must be >= 1");
    if (child(g, "min") || child(g, "max")) {
        const double lo = req_num(g, "min", ctx_name);
        const double hi = req_num(g, "max", ctx_name);
        if (!(hi >= lo)) throw CliError(1, ctx_name + ": max must be >= min");
        return linear_spaced(lo, hi, count);
    }
    const double rel = opt_num(g, "rel_span", ctx_name, def_rel);
    return linear_spaced(center * (1.0 - rel), center * (1.0 + rel), count);
}

void write_scan_outputs(const RunContext& ctx, const ScanResult& scan) {
    scan.validate();
    CsvTable t;
    const bool twod = scan.axis2.has_value();
    t.columns = twod ? std::vector<std::string>{scan.axis1.name, scan.axis2->name,
                                                scan.metric_name}
                     : std::vector<std::string>{scan.axis1.name, scan.metric_name};
    const bool flags = !scan.cell_failed.empty();
    if (flags) t.columns.push_back("failed");
    for (std::size_t i = 0; i < scan.rows(); ++i) {
        for (std::size_t j = 0; j < scan.cols(); ++j) {
            std::vector<double> row{scan.axis1.values[i]};
            if (twod) row.push_back(scan.axis2->values[j]);
            row.push_back(scan.at(i, j));
            if (flags) row.push_back(static_cast<double>(scan.cell_failed[i * scan.cols() + j]));
            t.rows.push_back(std::move(row));
        }
    }
    std::string meta = "columns: axis1=" + scan.axis1.name;
    if (twod) meta += ", axis2=" + scan.axis2->name;
    meta += ", metric=" + scan.metric_name;
    CsvTable with_meta = std::move(t);
    if (ctx.csv) {
        with_meta.comments = ctx.comments();
        with_meta.comments.push_back(meta);
        for (const auto& [k, v] : scan.metadata) with_meta.comments.push_back(k + ": " + v);
        write_csv((ctx.dir / "scan.csv").string(), with_meta);
    }
    if (ctx.svg) {
        if (twod) {
            ctx.write_figure("scan.svg",
                             svg_heatmap(scan.axis1.values, scan.axis2->values, scan.values,
                                         scan.metric_name,
                                         scan.axis1.name + " [" + scan.axis1.unit + "]",
                                         scan.axis2->name + " [" + scan.axis2->unit + "]"));
        } else {
            SvgSeries s;
            s.x = scan.axis1.values;
            s.y = scan.values;
            ctx.write_figure("scan.svg",
                             svg_line_plot({s}, scan.metric_name,
                                           scan.axis1.name + " [" + scan.axis1.unit + "]",
                                           scan.metric_name));
        }
    }
}

int cmd_scan(const json& cfg, const CommonFlags& flags) {
    RunContext pre = make_context("scan", cfg, flags);
    const json sb = obj_at(cfg, "scan");
    const std::string kind = opt_str(sb, "kind", "scan", "");
    if (kind.empty()) throw CliError(1, "missing field: scan.kind");
    RunContext ctx = pre;
    ctx.resolved["scan"]["kind"] = kind;
    const TwoLevelSystem sys = parse_system(cfg, ctx);

    ScanResult scan;
    if (kind == "phase_sensitivity") {
        LinearOscillating pulse;
        if (const json* d = child(cfg, "design")) {
            DesignResult dr;
            try {
                dr = design_diabatic_pulse(req_num(*d, "v", "design"),
                                           req_num(*d, "omega", "design"),
                                           req_num(*d, "Ts", "design"), sys.delta);
            } catch (const std::exception& e) {
                throw CliError(1, std::string("design: ") + e.what());
            }
            pulse = dr.pulse;
            ctx.resolved["design"] = {{"v", pulse.v},
                                      {"omega", pulse.omega},
                                      {"Ts", dr.Ts},
                                      {"T", dr.T}};
        } else {
            ParsedPulse pp = parse_pulse(cfg, sys, ctx);
            if (!pp.is_linear || !pp.lin.window)
                throw CliError(1, "phase_sensitivity needs a windowed linear_oscillating pulse");
            pulse = pp.lin;
        }
        const auto n_phases = static_cast<std::size_t>(
            opt_num(sb, "n_phases", "scan", 64.0));
        ctx.resolved["scan"]["n_phases"] = n_phases;
        try {
            scan = scan_phase_sensitivity(sys, pulse, n_phases, ctx.threads);
        } catch (const std::exception& e) {
            throw CliError(1, std::string("scan: ") + e.what());
        }
    } else if (kind == "robustness") {
        const json ob = obj_at(cfg, "optimal");
        LinearOscillating opt;
        opt.v = req_num(ob, "v", "optimal");
        opt.lambda_r = req_num(ob, "lambda", "optimal");
        opt.omega = req_num(ob, "omega", "optimal");
        opt.phi = opt_num(ob, "phi", "optimal", 0.0);
        const double T = req_num(obj_at(cfg, "time"), "T", "time");
        ctx.resolved["optimal"] = {{"v", opt.v},
                                   {"lambda", opt.lambda_r},
                                   {"omega", opt.omega},
                                   {"phi", opt.phi}};
        ctx.resolved["time"]["T"] = T;
        const auto v_grid = parse_grid(sb, "v_grid", "scan.v_grid", opt.v, 21, 0.02);
        const auto o_grid = parse_grid(sb, "omega_grid", "scan.omega_grid", opt.omega, 21, 0.02);
        try {
            scan = scan_robustness(sys, opt, T, v_grid, o_grid, ctx.threads);
        } catch (const std::exception& e) {
            throw CliError(1, std::string("scan: ") + e.what());
        }
    } else if (kind == "adiabatic_fidelity") {
        const bool optimize = opt_bool(sb, "optimize", "scan", false);
        ctx.resolved["scan"]["optimize"] = optimize;
        const json eg = obj_at(sb, "eps0_grid");
        const auto ecnt = static_cast<std::size_t>(opt_num(eg, "count", "scan.eps0_grid", 20.0));
        const double elo = opt_num(eg, "min", "scan.eps0_grid", 2.0 * sys.delta);
        const double ehi = opt_num(eg, "max", "scan.eps0_grid", 50.0 * sys.delta);
        const bool elog = opt_bool(eg, "log", "scan.eps0_grid", true);
        const std::vector<double> eps0_grid =
            elog ? log_spaced(elo, ehi, ecnt) : linear_spaced(elo, ehi, ecnt);
        const json tg = obj_at(sb, "t_grid");
        const auto tcnt = static_cast<std::size_t>(opt_num(tg, "count", "scan.t_grid", 20.0));
        const double t_ad = adiabatic_time_estimate(sys.delta);
        const double tlo = opt_num(tg, "min", "scan.t_grid", 0.5 * t_ad);
        const double thi = opt_num(tg, "max", "scan.t_grid", 4.0 * t_ad);
        const std::vector<double> t_grid = linear_spaced(tlo, thi, tcnt);
        ctx.resolved["scan"]["eps0_grid"] = {{"min", elo}, {"max", ehi}, {"count", ecnt},
                                             {"log", elog}};
        ctx.resolved["scan"]["t_grid"] = {{"min", tlo}, {"max", thi}, {"count", tcnt}};
        const GrapeConfig gc = parse_grape(cfg, ctx);
        try {
            scan = scan_adiabatic_fidelity(sys, eps0_grid, t_grid, optimize, gc, ctx.threads);
        } catch (const std::exception& e) {
            throw CliError(1, std::string("scan: ") + e.what());
        }
    } else {
        throw CliError(1,
                       "scan.kind must be phase_sensitivity, robustness, or adiabatic_fidelity");
    }
    write_scan_outputs(ctx, scan);
    double worst = -HUGE_VAL, best = HUGE_VAL;
    for (double v : scan.values) {
        worst = std::max(worst, v);
        best = std::min(best, v);
    }
    std::cout << "scan " << kind << ": cells=" << scan.values.size() << " min="
              << format_g17(best) << " max=" << format_g17(worst) << "\n";
    return 0;
}

int cmd_fit_qsl(const json& cfg, const CommonFlags& flags) {
    RunContext ctx = make_context("fit-qsl", cfg, flags);

    std::vector<std::pair<double, double>> data;
    std::size_t unresolved = 0;
    if (const json* est = child(cfg, "estimate")) {
        const json& e = *est;
        QslConfig qc;
        qc.fidelity_threshold =
            opt_num(e, "fidelity_threshold", "estimate", qc.fidelity_threshold);
        qc.coverage = opt_num(e, "coverage", "estimate", qc.coverage);
        qc.resolution = opt_num(e, "resolution", "estimate", qc.resolution);
        const json eg = obj_at(e, "eps0");
        qc.eps0_lo_factor = opt_num(eg, "lo_factor", "estimate.eps0", qc.eps0_lo_factor);
        qc.eps0_hi_factor = opt_num(eg, "hi_factor", "estimate.eps0", qc.eps0_hi_factor);
        qc.eps0_count = static_cast<std::size_t>(
            opt_num(eg, "count", "estimate.eps0", static_cast<double>(qc.eps0_count)));
        const json tg = obj_at(e, "time");
        qc.t_lo_factor = opt_num(tg, "lo_factor", "estimate.time", qc.t_lo_factor);
        qc.t_hi_factor = opt_num(tg, "hi_factor", "estimate.time", qc.t_hi_factor);
        qc.grape = parse_grape(e, ctx);
        qc.threads = ctx.threads;
        const json* dl = child(e, "deltas");
        if (!dl || !dl->is_array() || dl->empty())
            throw CliError(1, "missing field: estimate.deltas");
        std::vector<double> deltas;
        for (const auto& x : *dl) {
            if (!x.is_number()) throw CliError(1, "estimate.deltas entries must be numbers");
            deltas.push_back(x.get<double>());
        }
        ctx.resolved["estimate"] = {{"deltas", deltas},
                                    {"fidelity_threshold", qc.fidelity_threshold},
                                    {"coverage", qc.coverage},
                                    {"resolution", qc.resolution},
                                    {"eps0",
                                     {{"lo_factor", qc.eps0_lo_factor},
                                      {"hi_factor", qc.eps0_hi_factor},
                                      {"count", qc.eps0_count}}},
                                    {"time",
                                     {{"lo_factor", qc.t_lo_factor},
                                      {"hi_factor", qc.t_hi_factor}}}};
        std::vector<QslPoint> pts;
        try {
            pts = estimate_qsl(deltas, qc);
        } catch (const std::exception& e2) {
            throw CliError(1, std::string("estimate: ") + e2.what());
        }
        for (const auto& p : pts) {
            if (p.resolved)
                data.emplace_back(p.delta, p.t_qsl);
            else
                ++unresolved;
        }
    } else if (const json* db = child(cfg, "data")) {
        if (const json* f = child(*db, "file")) {
            if (!f->is_string()) throw CliError(1, "field must be a string: data.file");
            CsvTable t;
            try {
                t = read_csv(f->get<std::string>());
            } catch (const std::exception& e) {
                throw CliError(1, std::string("data.file: ") + e.what());
            }
            std::size_t dcol, tcol;
            try {
                dcol = csv_column(t, "delta");
            } catch (const std::exception&) {
                throw CliError(1, "data.file needs a 'delta' column");
            }
            try {
                tcol = csv_column(t, "T_QSL");
            } catch (const std::exception&) {
                try {
                    tcol = csv_column(t, "t_qsl");
                } catch (const std::exception&) {
                    throw CliError(1, "data.file needs a 'T_QSL' column");
                }
            }
            for (const auto& row : t.rows) data.emplace_back(row[dcol], row[tcol]);
            ctx.resolved["data"]["file"] = f->get<std::string>();
        } else if (const json* pts = child(*db, "points")) {
            if (!pts->is_array()) throw CliError(1, "field must be an array: data.points");
            for (const auto& p : *pts) {
                if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                    throw CliError(1, "data.points entries must be [delta, T_QSL] pairs");
                data.emplace_back(p[0].get<double>(), p[1].get<double>());
            }
            ctx.resolved["data"]["points"] = *pts;
        } else {
            throw CliError(1, "data needs data.file or data.points");
        }
    } else {
        throw CliError(1, "missing block: data or estimate");
    }

    std::optional<double> fix_t0;
    if (const json* f = child(cfg, "fix_t0")) {
        if (!f->is_number()) throw CliError(1, "field must be a number: fix_t0");
        fix_t0 = f->get<double>();
        ctx.resolved["fix_t0"] = *fix_t0;
    }

    QslFit fit;
    bool fitted = true;
    std::string fit_error;
    try {
        fit = fit_qsl(data, fix_t0);
    } catch (const std::invalid_argument& e) {
        throw CliError(1, std::string("fit-qsl: ") + e.what());
    } catch (const std::exception& e) {
        fitted = false;
        fit_error = e.what();
    }

    CsvTable ft;
    ft.columns = {"delta", "T_QSL", "fitted", "residual"};
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double fv = fitted ? fit.evaluate(data[i].first)
                                 : std::numeric_limits<double>::quiet_NaN();
        ft.rows.push_back({data[i].first, data[i].second, fv,
                           fitted ? fit.residuals[i] : std::numeric_limits<double>::quiet_NaN()});
    }
    if (ctx.csv) {
        ft.comments = ctx.comments();
        if (unresolved)
            ft.comments.push_back("unresolved_deltas: " + std::to_string(unresolved));
        if (fitted) {
            ft.comments.push_back("t0: " + format_g17(fit.t0));
            ft.comments.push_back("c: " + format_g17(fit.c));
            ft.comments.push_back("delta0: " + format_g17(fit.delta0));
        } else {
            ft.comments.push_back("fit_error: " + fit_error);
        }
        write_csv((ctx.dir / "fit.csv").string(), ft);
    }

    CsvTable r;
    r.columns = {"t0", "c", "delta0", "t0_fixed", "residual_rms", "n_points", "converged"};
    r.rows.push_back({fitted ? fit.t0 : std::numeric_limits<double>::quiet_NaN(),
                      fitted ? fit.c : std::numeric_limits<double>::quiet_NaN(),
                      fitted ? fit.delta0 : std::numeric_limits<double>::quiet_NaN(),
                      fix_t0 ? 1.0 : 0.0, fitted ? fit.residual_rms() : 0.0,
                      static_cast<double>(data.size()), fitted ? 1.0 : 0.0});
    ctx.write_table("result.csv", r);

    if (ctx.svg && fitted && !data.empty()) {
        SvgSeries pts;
        pts.markers = true;
        pts.color = "#d62728";
        for (const auto& [d, t] : data) {
            pts.x.push_back(d);
            pts.y.push_back(t);
        }
        SvgSeries curve;
        double dlo = data.front().first, dhi = dlo;
        for (const auto& [d, t] : data) {
            dlo = std::min(dlo, d);
            dhi = std::max(dhi, d);
        }
        for (std::size_t k = 0; k < 400; ++k) {
            const double d = dlo + (dhi - dlo) * static_cast<double>(k) / 399.0;
            curve.x.push_back(d);
            curve.y.push_back(fit.evaluate(d));
        }
        ctx.write_figure("fit.svg", svg_line_plot({curve, pts}, "quantum speed limit fit",
                                                  "delta [" + ctx.energy_unit + "]",
                                                  "T_QSL [" + ctx.time_unit() + "]"));
    }
    if (fitted)
        std::cout << "fit-qsl: t0=" << format_g17(fit.t0) << " c=" << format_g17(fit.c)
                  << " delta0=" << format_g17(fit.delta0)
                  << " rms=" << format_g17(fit.residual_rms()) << "\n";
    else
        std::cout << "fit-qsl: fit failed: " << fit_error << "\n";
    return fitted ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-level avoided-crossing dynamics, pulse design, and optimal control"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> names = {
        {"simulate", "propagate a pulse and write the trajectory"},
        {"design", "build the windowed zero-transfer pulse from (v, omega, Ts)"},
        {"optimize-nm", "simplex search over (v, lambda, omega, phi)"},
        {"grape", "gradient-ascent pixel optimization toward a target gate"},
        {"scan", "parameter scans: phase_sensitivity | robustness | adiabatic_fidelity"},
        {"fit-qsl", "fit T_QSL(delta) = t0 + c/(delta + delta0)"},
    };
    std::map<std::string, CommonFlags> flag_map;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, desc] : names) {
        auto* sub = app.add_subcommand(name, desc);
        auto& fl = flag_map[name];
        sub->add_option("--config", fl.config_path, "JSON config file")->required();
        sub->add_option("--out", fl.out_dir, "output directory (overrides config)");
        sub->add_option("--format", fl.formats, "comma-separated subset of csv,svg");
        sub->add_option("--seed", fl.seed, "seed recorded in outputs")
            ->each([&fl](const std::string&) { fl.seed_set = true; });
        sub->add_option("--threads", fl.threads, "worker threads (or LZFORGE_THREADS)");
        subs[name] = sub;
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed()) continue;
            const CommonFlags& fl = flag_map[name];
            const json cfg = load_config(fl.config_path);
            if (name == "simulate") return cmd_simulate(cfg, fl);
            if (name == "design") return cmd_design(cfg, fl);
            if (name == "optimize-nm") return cmd_optimize_nm(cfg, fl);
            if (name == "grape") return cmd_grape(cfg, fl);
            if (name == "scan") return cmd_scan(cfg, fl);
            if (name == "fit-qsl") return cmd_fit_qsl(cfg, fl);
        }
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
