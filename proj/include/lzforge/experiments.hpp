#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "grape.hpp"
#include "jump_model.hpp"
#include "propagate.hpp"
#include "pulse.hpp"
#include "two_level.hpp"

namespace lzforge {

struct ScanAxis {
    std::string name;
    std::string unit;
    std::vector<double> values;
};

// grid study output; values are axis1-major (values[i * cols + j])
struct ScanResult {
    ScanAxis axis1;
    std::optional<ScanAxis> axis2;
    std::string metric_name;
    std::vector<double> values;
    std::vector<char> cell_failed;  // empty when no cell can fail
    std::map<std::string, std::string> metadata;

    std::size_t rows() const { return axis1.values.size(); }
    std::size_t cols() const { return axis2 ? axis2->values.size() : 1; }
    double at(std::size_t i, std::size_t j = 0) const { return values[i * cols() + j]; }

    void validate() const {
        if (values.size() != rows() * cols())
            throw std::logic_error("ScanResult: values size does not match axes");
        if (!cell_failed.empty() && cell_failed.size() != values.size())
            throw std::logic_error("ScanResult: flag size does not match values");
        for (double x : values)
            if (!std::isfinite(x)) throw std::logic_error("ScanResult: non-finite value");
    }
};

inline std::vector<double> linear_spaced(double lo, double hi, std::size_t n) {
    if (n == 0) throw std::invalid_argument("linear_spaced: n must be >= 1");
    std::vector<double> g(n);
    if (n == 1) {
        g[0] = lo;
        return g;
    }
    for (std::size_t k = 0; k < n; ++k)
        g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    return g;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > 0.0))
        throw std::invalid_argument("log_spaced: bounds must be > 0");
    auto g = linear_spaced(std::log(lo), std::log(hi), n);
    for (double& x : g) x = std::exp(x);
    return g;
}

namespace detail {

inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const auto nworkers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::atomic<bool> has_error{false};
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                if (!has_error.exchange(true)) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nworkers);
    for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (has_error) std::rethrow_exception(first_error);
}

// population_0 linearly interpolated between trajectory samples
inline double interp_population(const Trajectory& traj, double t) {
    const auto& ts = traj.times;
    if (ts.empty()) throw std::invalid_argument("trajectory is empty");
    if (t <= ts.front()) return traj.populations.front();
    if (t >= ts.back()) return traj.populations.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const auto k = static_cast<std::size_t>(it - ts.begin());
    const double t0 = ts[k - 1], t1 = ts[k];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * traj.populations[k - 1] + w * traj.populations[k];
}

inline double integrate_population(const Trajectory& traj, double t_lo, double t_hi) {
    if (!(t_hi > t_lo)) return 0.0;
    const auto& ts = traj.times;
    double acc = 0.0;
    double tp = t_lo, pp = interp_population(traj, t_lo);
    const auto it = std::upper_bound(ts.begin(), ts.end(), t_lo);
    for (auto k = static_cast<std::size_t>(it - ts.begin()); k < ts.size() && ts[k] < t_hi; ++k) {
        acc += 0.5 * (pp + traj.populations[k]) * (ts[k] - tp);
        tp = ts[k];
        pp = traj.populations[k];
    }
    const double pe = interp_population(traj, t_hi);
    acc += 0.5 * (pp + pe) * (t_hi - tp);
    return acc;
}

inline double survival_of(const TwoLevelSystem& sys, const LinearOscillating& p, double t0,
                          double t1) {
    const PulseWaveform wf = p;
    const auto steps = recommended_steps(sys, wf, t0, t1);
    return survival_error(propagate(sys, wf, t0, t1, steps, {cplx(0.0), cplx(1.0)}, 0).unitary);
}

}  // namespace detail

inline double mean_population(const Trajectory& traj, double t_lo, double t_hi) {
    if (!(t_hi > t_lo)) throw std::invalid_argument("mean_population: empty interval");
    return detail::integrate_population(traj, t_lo, t_hi) / (t_hi - t_lo);
}

struct TraceConfig {
    std::size_t steps = 0;  // 0: recommended_steps
    std::size_t trajectory_samples = 2000;
    int m0 = -1;            // < 0: model default
    double span_half = 0.0; // <= 0: auto from window / sweep duration
    std::array<cplx, 2> initial{cplx(0.0), cplx(1.0)};
};

struct TrajectoryTrace {
    Trajectory trajectory;
    Unitary2 unitary;
    std::vector<JumpEvent> jumps;
    std::vector<double> plateau_populations;  // model population_0 after each jump
    JumpModelParams model;
    double t_start = 0.0;
    double t_end = 0.0;
};

// windowed pulses need room past the ramp for the survival error to settle;
// the residual ringing decays as (delta / 2vt)^2, so `settle` sets how many
// 1/delta units of extra tail to keep
inline double settle_span_half(const TwoLevelSystem& sys, const LinearOscillating& pulse,
                               double settle = 10.0) {
    if (!pulse.window) throw std::invalid_argument("settle_span_half: pulse.window required");
    return 0.5 * (pulse.window->T + pulse.window->Ts) + 4.0 * pulse.omega / pulse.v +
           (sys.delta > 0.0 ? settle / sys.delta : 0.0);
}

inline TrajectoryTrace trace_trajectory(const TwoLevelSystem& sys, const LinearOscillating& pulse,
                                        double sweep_T, const TraceConfig& cfg = {}) {
    sys.validate();
    validate(pulse);
    if (!(sweep_T > 0.0)) throw std::invalid_argument("trace_trajectory: sweep_T must be > 0");
    if (!(pulse.v > 0.0)) throw std::invalid_argument("trace_trajectory: pulse.v must be > 0");
    if (!(pulse.omega > 0.0))
        throw std::invalid_argument("trace_trajectory: pulse.omega must be > 0");

    TrajectoryTrace out;
    out.model.delta = sys.delta;
    out.model.v = pulse.v;
    out.model.lambda = pulse.lambda_r;
    out.model.omega = pulse.omega;
    out.model.phi = pulse.phi;
    out.model.T = pulse.window ? pulse.window->T : sweep_T;
    out.model.m0 = cfg.m0;

    double half = cfg.span_half;
    if (!(half > 0.0)) half = pulse.window ? settle_span_half(sys, pulse, 50.0) : 0.5 * sweep_T;
    out.t_start = -half;
    out.t_end = half;

    const PulseWaveform wf = pulse;
    const std::size_t steps =
        cfg.steps ? cfg.steps : recommended_steps(sys, wf, out.t_start, out.t_end);
    auto prop = propagate(sys, wf, out.t_start, out.t_end, steps, cfg.initial,
                          cfg.trajectory_samples);
    out.trajectory = std::move(prop.trajectory);
    out.unitary = prop.unitary;

    out.jumps = jump_events(out.model);
    const double nrm =
        std::sqrt(std::norm(cfg.initial[0]) + std::norm(cfg.initial[1]));
    const cplx c0 = cfg.initial[0] / nrm, c1 = cfg.initial[1] / nrm;
    const auto parts = multi_jump_partials(out.model);
    out.plateau_populations.reserve(parts.size());
    for (const auto& u : parts)
        out.plateau_populations.push_back(std::norm(u.u00 * c0 + u.u01 * c1));
    return out;
}

struct JumpEstimate {
    int m = 0;
    double expected_time = 0.0;
    double estimated_time = 0.0;  // NaN when not detectable
    double plateau_before = 0.0;
    double plateau_after = 0.0;
    bool detectable = false;
};

// locate each population step as the derivative-weighted centroid
// t_c = (t2 P2 - t1 P1 - \int P dt) / (P2 - P1) over a window around the
// expected time, with the endpoint values averaged over short plateaus
inline std::vector<JumpEstimate> detect_jump_times(const Trajectory& traj,
                                                   const std::vector<JumpEvent>& events,
                                                   double window_half = 2.0,
                                                   double plateau_width = 0.5,
                                                   double detect_threshold = 3e-3) {
    if (traj.times.size() < 4) throw std::invalid_argument("detect_jump_times: trajectory too short");
    if (!(window_half > plateau_width) || !(plateau_width > 0.0))
        throw std::invalid_argument("detect_jump_times: need window_half > plateau_width > 0");
    std::vector<JumpEstimate> out;
    out.reserve(events.size());
    const double lo = traj.times.front(), hi = traj.times.back();
    for (const auto& ev : events) {
        JumpEstimate je;
        je.m = ev.m;
        je.expected_time = ev.time;
        je.estimated_time = std::numeric_limits<double>::quiet_NaN();
        const double t1 = std::max(lo, ev.time - window_half);
        const double t2 = std::min(hi, ev.time + window_half);
        if (t2 - t1 > 2.0 * plateau_width) {
            je.plateau_before = mean_population(traj, t1, t1 + plateau_width);
            je.plateau_after = mean_population(traj, t2 - plateau_width, t2);
            const double dp = je.plateau_after - je.plateau_before;
            if (std::fabs(dp) >= detect_threshold) {
                const double integral = detail::integrate_population(traj, t1, t2);
                je.estimated_time =
                    (t2 * je.plateau_after - t1 * je.plateau_before - integral) / dp;
                je.detectable = true;
            }
        }
        out.push_back(je);
    }
    return out;
}

inline ScanResult scan_phase_sensitivity(const TwoLevelSystem& sys,
                                         const LinearOscillating& base_pulse,
                                         std::size_t n_phases = 64, int threads = 1) {
    sys.validate();
    validate(base_pulse);
    if (!base_pulse.window)
        throw std::invalid_argument("scan_phase_sensitivity: pulse.window required");
    if (n_phases < 32)
        throw std::invalid_argument("scan_phase_sensitivity: need at least 32 phases");
    if (!(base_pulse.v > 0.0))
        throw std::invalid_argument("scan_phase_sensitivity: pulse.v must be > 0");

    const double half = settle_span_half(sys, base_pulse);
    ScanResult r;
    r.axis1.name = "phi";
    r.axis1.unit = "rad";
    r.axis1.values.resize(n_phases);
    for (std::size_t k = 0; k < n_phases; ++k)
        r.axis1.values[k] = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n_phases);
    r.metric_name = "survival_error";
    r.values.resize(n_phases);
    detail::parallel_for(n_phases, threads, [&](std::size_t k) {
        LinearOscillating p = base_pulse;
        p.phi = r.axis1.values[k];
        r.values[k] = detail::survival_of(sys, p, -half, half);
    });
    r.metadata["span_half"] = std::to_string(half);
    r.metadata["n_phases"] = std::to_string(n_phases);
    return r;
}

inline ScanResult scan_robustness(const TwoLevelSystem& sys, const LinearOscillating& optimal,
                                  double T, const std::vector<double>& v_grid,
                                  const std::vector<double>& omega_grid, int threads = 1) {
    sys.validate();
    validate(optimal);
    if (!(T > 0.0)) throw std::invalid_argument("scan_robustness: T must be > 0");
    if (v_grid.empty() || omega_grid.empty())
        throw std::invalid_argument("scan_robustness: grids must be non-empty");
    auto bracket = [](const std::vector<double>& g, double x) {
        const auto [mn, mx] = std::minmax_element(g.begin(), g.end());
        return *mn <= x && x <= *mx;
    };
    if (!bracket(v_grid, optimal.v) || !bracket(omega_grid, optimal.omega))
        throw std::invalid_argument("scan_robustness: grids must bracket the optimum");

    ScanResult r;
    r.axis1 = {"v", "delta^2", v_grid};
    r.axis2 = ScanAxis{"omega", "delta", omega_grid};
    r.metric_name = "log10_survival_error";
    const std::size_t n1 = v_grid.size(), n2 = omega_grid.size();
    r.values.resize(n1 * n2);
    detail::parallel_for(n1 * n2, threads, [&](std::size_t idx) {
        LinearOscillating p = optimal;
        p.v = v_grid[idx / n2];
        p.omega = omega_grid[idx % n2];
        const double err = detail::survival_of(sys, p, -0.5 * T, 0.5 * T);
        r.values[idx] = std::log10(std::max(err, 1e-30));
    });
    r.metadata["T"] = std::to_string(T);
    return r;
}

inline double adiabatic_time_estimate(double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("adiabatic_time_estimate: delta must be > 0");
    return 20.0 / delta;
}

inline std::vector<double> default_eps0_grid(double delta, std::size_t n = 20) {
    return log_spaced(2.0 * delta, 50.0 * delta, n);
}

inline std::vector<double> default_time_grid(double delta, std::size_t n = 20) {
    const double t_ad = adiabatic_time_estimate(delta);
    return linear_spaced(0.5 * t_ad, 4.0 * t_ad, n);
}

inline GrapeConfig default_scan_grape() {
    GrapeConfig g;
    g.pixel_count = 256;
    g.max_iterations = 30000;
    g.target_error = 1e-4;
    g.record_history = false;
    return g;
}

namespace detail {

struct AdiabaticCell {
    double fidelity = 0.0;
    bool failed = false;
};

// one (eps0, T) cell of the Figs. 8-9 scans: erf-tan seed pixelated onto the
// GRAPE grid, optionally optimized toward sigma_x
inline AdiabaticCell adiabatic_cell(const TwoLevelSystem& sys, double eps0, double T,
                                    bool optimize, const GrapeConfig& gc) {
    AdiabaticCell cell;
    try {
        ErfTan shape{eps0, 4.0 / T, T, sys.delta};
        validate(shape);
        const Pixelated seed = pixelate(shape, gc.pixel_count, -0.5 * T, 0.5 * T);
        if (optimize) {
            const auto res = grape_optimize(sys, seed, Unitary2::sigma_x(), gc);
            cell.fidelity = res.best_fidelity;
        } else {
            const double dom = seed.dt * static_cast<double>(seed.values.size());
            const auto u =
                propagate(sys, seed, 0.0, dom, seed.values.size(), {cplx(0.0), cplx(1.0)}, 0)
                    .unitary;
            cell.fidelity = phase_insensitive_fidelity(u);
        }
        if (!std::isfinite(cell.fidelity)) throw std::runtime_error("non-finite fidelity");
    } catch (...) {
        cell.fidelity = 0.0;
        cell.failed = true;
    }
    return cell;
}

}  // namespace detail

inline ScanResult scan_adiabatic_fidelity(const TwoLevelSystem& sys,
                                          std::vector<double> eps0_grid,
                                          std::vector<double> t_grid, bool optimize,
                                          const GrapeConfig& grape = default_scan_grape(),
                                          int threads = 1) {
    sys.validate();
    if (!(sys.delta > 0.0))
        throw std::invalid_argument("scan_adiabatic_fidelity: delta must be > 0");
    if (eps0_grid.empty()) eps0_grid = default_eps0_grid(sys.delta);
    if (t_grid.empty()) t_grid = default_time_grid(sys.delta);
    grape.validate();

    ScanResult r;
    r.axis1 = {"eps0", "delta", eps0_grid};
    r.axis2 = ScanAxis{"T", "1/delta", t_grid};
    r.metric_name = optimize ? "gate_fidelity" : "phase_insensitive_fidelity";
    const std::size_t n1 = eps0_grid.size(), n2 = t_grid.size();
    r.values.resize(n1 * n2);
    r.cell_failed.assign(n1 * n2, 0);
    detail::parallel_for(n1 * n2, threads, [&](std::size_t idx) {
        const auto cell = detail::adiabatic_cell(sys, eps0_grid[idx / n2], t_grid[idx % n2],
                                                 optimize, grape);
        r.values[idx] = cell.fidelity;
        r.cell_failed[idx] = cell.failed ? 1 : 0;
    });
    r.metadata["delta"] = std::to_string(sys.delta);
    r.metadata["optimize"] = optimize ? "true" : "false";
    r.metadata["pixel_count"] = std::to_string(grape.pixel_count);
    r.metadata["target_error"] = std::to_string(grape.target_error);
    return r;
}

struct QslPoint {
    double delta = 0.0;
    double t_qsl = 0.0;
    bool resolved = false;
    double resolution = 0.0;  // absolute bisection resolution used
};

struct QslConfig {
    double fidelity_threshold = 0.9999;
    double coverage = 0.95;   // fraction of eps0 cells that must reach the threshold
    std::size_t eps0_count = 20;
    double eps0_lo_factor = 2.0;   // x delta
    double eps0_hi_factor = 50.0;  // x delta
    double t_lo_factor = 0.02;     // x adiabatic estimate
    double t_hi_factor = 4.0;      // x adiabatic estimate
    double resolution = 0.01;      // relative to the upper bisection bound
    GrapeConfig grape = default_scan_grape();
    int threads = 1;
    // returns whether the (delta, eps0, T) cell reaches the threshold;
    // empty means the real GRAPE cell
    std::function<bool(double, double, double)> evaluator;

    void validate() const {
        if (!(fidelity_threshold > 0.0) || !(fidelity_threshold < 1.0))
            throw std::invalid_argument("QslConfig: fidelity_threshold must be in (0, 1)");
        if (!(coverage > 0.0) || !(coverage <= 1.0))
            throw std::invalid_argument("QslConfig: coverage must be in (0, 1]");
        if (eps0_count == 0) throw std::invalid_argument("QslConfig: eps0_count must be >= 1");
        if (!(t_lo_factor > 0.0) || !(t_hi_factor > t_lo_factor))
            throw std::invalid_argument("QslConfig: need 0 < t_lo_factor < t_hi_factor");
        if (!(resolution > 0.0)) throw std::invalid_argument("QslConfig: resolution must be > 0");
        grape.validate();
    }
};

// smallest pulse duration at which `coverage` of the eps0 grid reaches the
// fidelity threshold, found by bisection per delta
inline std::vector<QslPoint> estimate_qsl(const std::vector<double>& delta_list,
                                          const QslConfig& cfg = {}) {
    cfg.validate();
    if (delta_list.empty()) throw std::invalid_argument("estimate_qsl: delta_list is empty");
    for (double d : delta_list)
        if (!(d > 0.0)) throw std::invalid_argument("estimate_qsl: delta must be > 0");

    auto cell_ok = cfg.evaluator;
    if (!cell_ok) {
        GrapeConfig gc = cfg.grape;
        gc.target_error = std::min(gc.target_error, 1.0 - cfg.fidelity_threshold);
        cell_ok = [gc, th = cfg.fidelity_threshold](double d, double e0, double T) {
            TwoLevelSystem sys{d};
            const auto cell = detail::adiabatic_cell(sys, e0, T, true, gc);
            return !cell.failed && cell.fidelity >= th;
        };
    }

    auto coverage_met = [&](double d, double T, const std::vector<double>& eps0s) {
        const auto n = eps0s.size();
        const auto needed = static_cast<std::size_t>(
            std::ceil(cfg.coverage * static_cast<double>(n) - 1e-9));
        if (cfg.threads > 1) {
            std::atomic<std::size_t> ok{0};
            detail::parallel_for(n, cfg.threads, [&](std::size_t i) {
                if (cell_ok(d, eps0s[i], T)) ok.fetch_add(1);
            });
            return ok.load() >= needed;
        }
        std::size_t ok = 0, failed = 0;
        const std::size_t allowed_fail = n - needed;
        for (std::size_t i = 0; i < n; ++i) {
            if (cell_ok(d, eps0s[i], T))
                ++ok;
            else if (++failed > allowed_fail)
                return false;
            if (ok >= needed) return true;
        }
        return ok >= needed;
    };

    std::vector<QslPoint> out;
    out.reserve(delta_list.size());
    for (double d : delta_list) {
        const double t_ad = adiabatic_time_estimate(d);
        double lo = cfg.t_lo_factor * t_ad;
        double hi = cfg.t_hi_factor * t_ad;
        const auto eps0s =
            log_spaced(cfg.eps0_lo_factor * d, cfg.eps0_hi_factor * d, cfg.eps0_count);
        QslPoint pt;
        pt.delta = d;
        pt.resolution = cfg.resolution * hi;
        if (!coverage_met(d, hi, eps0s)) {
            pt.t_qsl = hi;
            pt.resolved = false;
        } else if (coverage_met(d, lo, eps0s)) {
            pt.t_qsl = lo;
            pt.resolved = true;
        } else {
            while (hi - lo > pt.resolution) {
                const double mid = 0.5 * (lo + hi);
                (coverage_met(d, mid, eps0s) ? hi : lo) = mid;
            }
            pt.t_qsl = hi;
            pt.resolved = true;
        }
        out.push_back(pt);
    }
    return out;
}

}  // namespace lzforge
