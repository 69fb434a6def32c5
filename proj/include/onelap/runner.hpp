#pragma once

// Experiment runner behind the onelap tool.  Parses a JSON config,
// executes one of the four modes (solve, continue, certify, compare),
// writes the artifacts (fields.csv, diagnostics.json, report.json,
// comparison.json), and maps failures onto the exit-code contract:
// 0 success, 1 config error, 2 certificate FAIL, 3 solver non-convergence.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "onelap/certificate.hpp"
#include "onelap/continuation.hpp"
#include "onelap/grid.hpp"
#include "onelap/oracle.hpp"
#include "onelap/psolver.hpp"

namespace onelap {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(std::string f, const std::string& msg)
        : std::runtime_error(f.empty() ? msg : f + ": " + msg), field(std::move(f)) {}
};

/// Non-convergence that the exit-code contract maps to 3 (as opposed to
/// AllSolvesFailed, which already carries that meaning).
struct SolverFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Shortest round-trip decimal form; the CSV determinism contract rests
/// on this being locale-free.
inline std::string fmt_double(double v) {
    std::array<char, 32> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline int thread_cap() {
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const char* s = std::getenv("ONELAP_THREADS");
    if (s == nullptr || *s == '\0') return hw;
    int v = 0;
    const auto res = std::from_chars(s, s + std::strlen(s), v);
    if (res.ec != std::errc() || *res.ptr != '\0' || v < 1) return hw;
    return std::min(v, 64);
}

inline const json& require_field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(where + "." + key, "missing required field");
    return *it;
}

inline double require_number(const json& j, const char* key, const std::string& where) {
    const json& v = require_field(j, key, where);
    if (!v.is_number()) throw ConfigError(where + "." + key, "expected a number");
    return v.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
}

inline std::string string_or(const json& j, const char* key, const std::string& fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_string()) throw ConfigError(key, "expected a string");
    return v.get<std::string>();
}

inline bool bool_or(const json& j, const char* key, bool fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(key, "expected a boolean");
    return v.get<bool>();
}

}  // namespace detail

// -------- config -> domain objects --------

inline Grid grid_from_config(const json& prob) {
    const json& nj = detail::require_field(prob, "n", "problem");
    std::array<int, 2> n{0, 1};
    int dim = 1;
    if (nj.is_number_integer()) {
        n[0] = nj.get<int>();
    } else if (nj.is_array() && (nj.size() == 1 || nj.size() == 2)) {
        n[0] = nj.at(0).get<int>();
        if (nj.size() == 2) {
            dim = 2;
            n[1] = nj.at(1).get<int>();
        }
    } else {
        throw ConfigError("problem.n", "expected an integer or [nx, ny]");
    }
    std::array<double, 2> a{-1.0, -1.0}, b{1.0, 1.0};
    if (prob.contains("domain")) {
        const json& dj = prob.at("domain");
        const bool axis_pairs = dj.is_array() && !dj.empty() && dj.at(0).is_array();
        if (axis_pairs) {
            if (static_cast<int>(dj.size()) != dim)
                throw ConfigError("problem.domain", "axis count does not match n");
            for (int d = 0; d < dim; ++d) {
                a[d] = dj.at(d).at(0).get<double>();
                b[d] = dj.at(d).at(1).get<double>();
            }
        } else if (dj.is_array() && dj.size() == 2) {
            a[0] = dj.at(0).get<double>();
            b[0] = dj.at(1).get<double>();
            a[1] = a[0];
            b[1] = b[0];
        } else {
            throw ConfigError("problem.domain", "expected [a, b] or [[ax,bx],[ay,by]]");
        }
    }
    try {
        return dim == 1 ? build_grid(a[0], b[0], n[0])
                        : build_grid(a[0], b[0], n[0], a[1], b[1], n[1]);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("problem", e.what());
    }
}

/// Named data presets.  Scaled coordinates map each axis onto [-1, 1], so
/// the presets reduce to the classical 1D data on the standard interval.
inline NodeField f_from_config(const json& fj, const Grid& g, std::string& name_out) {
    const int nx = g.n[0], ny = g.n[1];
    NodeField f(g.node_count(), 0.0);
    if (fj.is_array()) {
        name_out = "inline";
        if (static_cast<int>(fj.size()) != g.node_count())
            throw ConfigError("problem.f", "inline array length must equal the node count");
        for (std::size_t k = 0; k < fj.size(); ++k) {
            if (!fj.at(k).is_number()) throw ConfigError("problem.f", "expected numbers");
            f[k] = fj.at(k).get<double>();
        }
        return f;
    }
    if (!fj.is_string()) throw ConfigError("problem.f", "expected a preset name or an array");
    const std::string name = fj.get<std::string>();
    name_out = name;
    auto scaled = [&](int d, double x) { return (2.0 * x - (g.a[d] + g.b[d])) / (g.b[d] - g.a[d]); };
    auto fill = [&](auto&& fn) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                f[g.node_index(i, j)] = fn(scaled(0, g.node_x(i)), g.dim == 2 ? scaled(1, g.node_y(j)) : 0.0);
    };
    if (name == "zero") {
        fill([](double, double) { return 0.0; });
    } else if (name == "one") {
        fill([](double, double) { return 1.0; });
    } else if (name == "chi") {
        // indicator of the centered half-box, half-open like the 1D datum
        fill([](double x, double y) {
            return (x >= -0.5 && x < 0.5 && y >= -0.5 && y < 0.5) ? 1.0 : 0.0;
        });
    } else if (name == "tent") {
        if (g.dim != 1) throw ConfigError("problem.f", "preset \"tent\" is 1D only");
        fill([](double x, double) { return std::max(std::abs(x) - 0.5, 0.0); });
    } else if (name == "one_plus_x2") {
        if (g.dim != 1) throw ConfigError("problem.f", "preset \"one_plus_x2\" is 1D only");
        fill([](double x, double) { return 1.0 + x * x; });
    } else {
        throw ConfigError("problem.f", "unknown preset \"" + name + "\"");
    }
    return f;
}

inline ProblemSpec problem_from_config(const json& cfg) {
    const json& prob = detail::require_field(cfg, "problem", "config");
    ProblemSpec spec;
    spec.grid = grid_from_config(prob);
    spec.gamma = detail::require_number(prob, "gamma", "problem");
    spec.f = f_from_config(detail::require_field(prob, "f", "problem"), spec.grid, spec.f_name);
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("problem", e.what());
    }
    return spec;
}

inline PSolveConfig solver_from_config(const json& cfg) {
    PSolveConfig sc;
    if (!cfg.contains("solver")) return sc;
    const json& sj = cfg.at("solver");
    sc.p = detail::number_or(sj, "p", sc.p);
    sc.eps = detail::number_or(sj, "eps", sc.eps);
    sc.delta = detail::number_or(sj, "delta", sc.delta);
    sc.tol = detail::number_or(sj, "tol", sc.tol);
    sc.max_iter = static_cast<int>(detail::number_or(sj, "max_iter", sc.max_iter));
    sc.damping = detail::number_or(sj, "damping", sc.damping);
    sc.init_value = detail::number_or(sj, "init_value", sc.init_value);
    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("solver", e.what());
    }
    return sc;
}

inline Schedule schedule_from_config(const json& cfg) {
    Schedule sched = Schedule::standard();
    if (cfg.contains("schedule")) {
        const json& sj = cfg.at("schedule");
        if (sj.contains("p_values")) {
            if (!sj.at("p_values").is_array())
                throw ConfigError("schedule.p_values", "expected an array");
            sched.p_values = sj.at("p_values").get<std::vector<double>>();
        }
        if (sj.contains("eps_values") && !(sj.at("eps_values").is_string() &&
                                           sj.at("eps_values").get<std::string>() == "auto")) {
            if (!sj.at("eps_values").is_array())
                throw ConfigError("schedule.eps_values", "expected an array or \"auto\"");
            sched.eps_values = sj.at("eps_values").get<std::vector<double>>();
        }
        sched.warm_start = detail::bool_or(sj, "warm_start", sched.warm_start);
        sched.k_diag = detail::number_or(sj, "k_diag", sched.k_diag);
    }
    try {
        sched.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("schedule", e.what());
    }
    return sched;
}

inline std::string limit_mode_from_config(const json& cfg) {
    std::string mode = "last";
    if (cfg.contains("schedule")) mode = detail::string_or(cfg.at("schedule"), "limit", mode);
    if (mode != "last" && mode != "richardson")
        throw ConfigError("schedule.limit", "expected \"last\" or \"richardson\"");
    return mode;
}

inline Thresholds thresholds_from_config(const json& cfg, const Grid& g, double eps_last) {
    Thresholds th = Thresholds::automatic(g, eps_last);
    if (cfg.contains("certificate")) {
        const json& cj = cfg.at("certificate");
        th.theta = detail::number_or(cj, "theta", th.theta);
        th.theta_f = detail::number_or(cj, "theta_f", th.theta_f);
        th.tol = detail::number_or(cj, "tol", th.tol);
    }
    try {
        th.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("certificate", e.what());
    }
    return th;
}

// -------- domain objects -> JSON --------

inline json grid_json(const Grid& g) {
    json gj;
    gj["dim"] = g.dim;
    gj["a"] = g.dim == 2 ? json::array({g.a[0], g.a[1]}) : json::array({g.a[0]});
    gj["b"] = g.dim == 2 ? json::array({g.b[0], g.b[1]}) : json::array({g.b[0]});
    gj["n"] = g.dim == 2 ? json::array({g.n[0], g.n[1]}) : json::array({g.n[0]});
    gj["h"] = g.dim == 2 ? json::array({g.h[0], g.h[1]}) : json::array({g.h[0]});
    return gj;
}

inline json fields_json(const NodeField& u, const FaceField& z, const Grid& g) {
    json fj;
    fj["u"] = u;
    json zc = json::array();
    zc.push_back(z.comp[0]);
    if (g.dim == 2) zc.push_back(z.comp[1]);
    fj["z"] = zc;
    return fj;
}

inline json record_json(const ContinuationRecord& rec) {
    json rj;
    rj["p"] = rec.p;
    rj["eps"] = rec.eps;
    rj["delta"] = rec.delta;
    rj["iterations"] = rec.sol.iterations;
    rj["converged"] = rec.sol.converged;
    rj["residual"] =
        rec.sol.residual_history.empty() ? 0.0 : rec.sol.residual_history.back();
    rj["tv"] = rec.tv;
    rj["linf_u"] = rec.linf_u;
    rj["max_z"] = rec.max_z;
    rj["gk_norm"] = rec.gk_norm;
    rj["seconds"] = rec.seconds;
    return rj;
}

inline json report_json(const CertificateReport& rep) {
    json rj;
    rj["defects"] = {
        {"a_singular_l1", rep.defect_a},
        {"c_pde_residual", rep.defect_c},
        {"d_pairing", rep.defect_d_u},
        {"d_interface", rep.defect_d_chi},
        {"e_boundary", rep.defect_e},
        {"support", rep.defect_support},
        {"variational", rep.defect_var},
    };
    rj["interface"] = {{"count", rep.interface_count}, {"perimeter", rep.perimeter}};
    rj["context"] = {{"tv_interior", rep.tv_interior},
                     {"pairing", rep.pairing_value},
                     {"max_z", rep.max_z}};
    rj["strengthened"] = rep.strengthened;
    if (rep.strengthened) {
        rj["defects"]["b_global_l1"] = rep.defect_b;
        rj["defects"]["boundary_sign"] = rep.defect_sign;
    }
    rj["thresholds"] = {
        {"theta", rep.thresholds.theta},
        {"theta_f", rep.thresholds.theta_f},
        {"tol", rep.thresholds.tol},
    };
    rj["verdicts"] = {
        {"a", rep.ok_a},
        {"c", rep.ok_c},
        {"d_pairing", rep.ok_d_u},
        {"d_interface", rep.ok_d_chi},
        {"e", rep.ok_e},
        {"support", rep.ok_support},
        {"variational", rep.ok_var},
        {"b_global_l1", rep.ok_b},
        {"boundary_sign", rep.ok_sign},
    };
    rj["pass"] = rep.pass;
    return rj;
}

// -------- artifact writers --------

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

/// Node-row CSV; z is averaged from the adjacent faces onto nodes for
/// plotting (diagnostics.json keeps the exact face values).
inline void write_fields_csv(const std::filesystem::path& path, const Grid& g, const NodeField& u,
                             const FaceField& z) {
    std::string text;
    const int nx = g.n[0], ny = g.n[1];
    if (g.dim == 1) {
        text += "x,u,z\n";
        for (int i = 0; i < nx; ++i) {
            const double zn = 0.5 * (z.comp[0][i] + z.comp[0][i + 1]);
            text += detail::fmt_double(g.node_x(i)) + "," + detail::fmt_double(u[i]) + "," +
                    detail::fmt_double(zn) + "\n";
        }
    } else {
        text += "x,y,u,zx,zy\n";
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double zx =
                    0.5 * (z.comp[0][g.xface_index(i, j)] + z.comp[0][g.xface_index(i + 1, j)]);
                const double zy =
                    0.5 * (z.comp[1][g.yface_index(i, j)] + z.comp[1][g.yface_index(i, j + 1)]);
                text += detail::fmt_double(g.node_x(i)) + "," + detail::fmt_double(g.node_y(j)) +
                        "," + detail::fmt_double(u[g.node_index(i, j)]) + "," +
                        detail::fmt_double(zx) + "," + detail::fmt_double(zy) + "\n";
            }
    }
    write_text_file(path, text);
}

// -------- mode execution --------

/// What a run produces in memory; artifact writing happens at top level so
/// that nested runs (compare) stay file-free.
struct RunProducts {
    ProblemSpec spec;
    NodeField u;
    FaceField z;
    double eps_last = 0.0;
    bool converged = true;
    json diagnostics;
};

inline RunProducts execute_solve(const json& cfg) {
    RunProducts out;
    out.spec = problem_from_config(cfg);
    const PSolveConfig sc = solver_from_config(cfg);
    const PSolution sol = solve_p_problem(out.spec, sc);
    out.u = sol.u;
    out.z = sol.z;
    out.eps_last = sc.eps;
    out.converged = sol.converged;
    out.diagnostics["solve"] = {
        {"p", sc.p},
        {"eps", sc.eps},
        {"delta", sc.effective_delta(out.spec.grid)},
        {"iterations", sol.iterations},
        {"converged", sol.converged},
        {"residual", sol.residual_history.empty() ? 0.0 : sol.residual_history.back()},
        {"tv", total_variation(sol.u, out.spec.grid)},
        {"linf_u", norm_linf(sol.u)},
        {"max_z", max_abs(sol.z, out.spec.grid)},
    };
    return out;
}

inline RunProducts execute_continue(const json& cfg) {
    RunProducts out;
    out.spec = problem_from_config(cfg);
    const PSolveConfig sc = solver_from_config(cfg);
    const Schedule sched = schedule_from_config(cfg);
    const std::string lmode = limit_mode_from_config(cfg);

    const ContinuationResult res = run_schedule(out.spec, sched, sc);
    if (res.converged_stages < 2)
        throw SolverFailure("continuation: fewer than two stages converged");
    const LimitEstimate est = limit_estimate(res, lmode);

    out.u = est.u;
    out.z = est.z;
    out.eps_last = res.records.back().eps;
    out.converged = res.records.back().sol.converged;

    json records = json::array();
    for (const ContinuationRecord& rec : res.records) records.push_back(record_json(rec));
    out.diagnostics["records"] = records;
    out.diagnostics["limit"] = {{"mode", est.mode},
                                {"clip_excess", est.clip_excess},
                                {"z_tolerance", res.z_tolerance},
                                {"converged_stages", res.converged_stages}};

    json bv = json::array();
    for (const BvEntry& e : bv_uniform_check(res))
        bv.push_back({{"p", e.p}, {"tv", e.tv}, {"bound", e.bound}, {"within", e.within}});
    out.diagnostics["bv_check"] = bv;

    json decay = json::array();
    for (const DecayEntry& e : linf_decay_check(res, sched.k_diag))
        decay.push_back({{"p", e.p}, {"excess", e.excess}, {"ratio", e.ratio}});
    out.diagnostics["decay_check"] = {{"k", sched.k_diag}, {"entries", decay}};

    // distance to the constant candidate (1D): c^gamma = half the mass of f
    if (out.spec.grid.dim == 1) {
        const double mass = integral(out.spec.f, out.spec.grid);
        if (mass > 0.0) {
            const double c = std::pow(0.5 * mass, 1.0 / out.spec.gamma);
            NodeField diff = out.u;
            for (double& v : diff) v -= c;
            out.diagnostics["const_candidate"] = {{"value", c},
                                                  {"l1_distance", norm_l1(diff, out.spec.grid)}};
        }
    }
    return out;
}

/// Reload a candidate from a diagnostics.json written by a previous run.
inline RunProducts load_products(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("candidate.diagnostics", "cannot open " + path.string());
    json j = json::parse(in);
    RunProducts out;
    const json& gj = detail::require_field(j, "grid", "diagnostics");
    const int dim = detail::require_field(gj, "dim", "diagnostics.grid").get<int>();
    if (dim == 1)
        out.spec.grid = build_grid(gj.at("a").at(0), gj.at("b").at(0), gj.at("n").at(0));
    else
        out.spec.grid = build_grid(gj.at("a").at(0), gj.at("b").at(0), gj.at("n").at(0),
                                   gj.at("a").at(1), gj.at("b").at(1), gj.at("n").at(1));
    const json& pj = detail::require_field(j, "problem", "diagnostics");
    out.spec.gamma = detail::require_number(pj, "gamma", "diagnostics.problem");
    out.spec.f = detail::require_field(pj, "f", "diagnostics.problem").get<NodeField>();
    out.spec.f_name = detail::string_or(pj, "f_name", "inline");
    const json& fj = detail::require_field(j, "fields", "diagnostics");
    out.u = detail::require_field(fj, "u", "diagnostics.fields").get<NodeField>();
    const json& zj = detail::require_field(fj, "z", "diagnostics.fields");
    out.z.comp[0] = zj.at(0).get<std::vector<double>>();
    if (dim == 2) out.z.comp[1] = zj.at(1).get<std::vector<double>>();
    out.eps_last = detail::number_or(j, "eps_last", 0.0);
    try {
        out.spec.validate();
        check_node_shape(out.u, out.spec.grid, "diagnostics.fields.u");
        check_face_shape(out.z, out.spec.grid, "diagnostics.fields.z");
    } catch (const std::invalid_argument& e) {
        throw ConfigError("candidate.diagnostics", e.what());
    }
    return out;
}

inline RunProducts oracle_products(const std::string& name, int pair_index, const json& cfg) {
    std::vector<ClosedFormPair> pairs;
    if (name == "example1")
        pairs = example1_pairs();
    else if (name == "example2")
        pairs = example2_pairs();
    else
        throw ConfigError("candidate.oracle", "unknown oracle \"" + name + "\"");
    if (pair_index < 0 || pair_index >= static_cast<int>(pairs.size()))
        throw ConfigError("candidate.pair", "pair index out of range");
    const ClosedFormPair& pair = pairs[pair_index];

    const json& prob = detail::require_field(cfg, "problem", "config");
    const json& nj = detail::require_field(prob, "n", "problem");
    if (!nj.is_number_integer()) throw ConfigError("problem.n", "oracle candidates are 1D");
    Grid g;
    try {
        g = build_grid(pair.domain[0], pair.domain[1], nj.get<int>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("problem.n", e.what());
    }
    const SampledPair sp = sample_pair(pair, g);
    RunProducts out;
    out.spec.grid = g;
    out.spec.f = sp.f;
    out.spec.gamma = pair.gamma;
    out.spec.f_name = pair.name;
    out.u = sp.u;
    out.z = sp.z;
    out.diagnostics["oracle"] = {{"name", pair.name}, {"pair", pair_index}};
    return out;
}

/// Candidate source for certify/compare: an oracle pair, a stored run, or
/// a nested config executed in memory.
inline RunProducts products_from_source(const json& src, const json& top_cfg) {
    if (src.is_string() && src.get<std::string>() == "continuation")
        return execute_continue(top_cfg);
    if (!src.is_object()) throw ConfigError("candidate", "expected an object or \"continuation\"");
    if (src.contains("oracle")) {
        const std::string name = src.at("oracle").get<std::string>();
        const int pair_index =
            src.contains("pair") ? src.at("pair").get<int>() : 0;
        return oracle_products(name, pair_index, top_cfg);
    }
    if (src.contains("diagnostics"))
        return load_products(src.at("diagnostics").get<std::string>());
    if (src.contains("config")) {
        const json& sub = src.at("config");
        const std::string mode = detail::string_or(sub, "mode", "solve");
        if (mode == "solve") {
            RunProducts p = execute_solve(sub);
            if (!p.converged) throw SolverFailure("nested solve did not converge");
            return p;
        }
        if (mode == "continue") return execute_continue(sub);
        throw ConfigError("candidate.config.mode", "nested runs support solve and continue only");
    }
    throw ConfigError("candidate", "expected oracle, diagnostics, or config");
}

inline json diagnostics_envelope(const std::string& mode, const RunProducts& p) {
    json j;
    j["mode"] = mode;
    j["grid"] = grid_json(p.spec.grid);
    j["problem"] = {{"gamma", p.spec.gamma}, {"f_name", p.spec.f_name}, {"f", p.spec.f}};
    j["fields"] = fields_json(p.u, p.z, p.spec.grid);
    j["eps_last"] = p.eps_last;
    for (const auto& [key, value] : p.diagnostics.items()) j[key] = value;
    return j;
}

struct OutputOptions {
    std::filesystem::path dir = "out";
    bool csv = true;
    bool json_fmt = true;
};

inline OutputOptions outputs_from_config(const json& cfg, const std::string& override_dir) {
    OutputOptions opts;
    if (cfg.contains("outputs")) {
        const json& oj = cfg.at("outputs");
        opts.dir = detail::string_or(oj, "directory", opts.dir.string());
        if (oj.contains("formats")) {
            if (!oj.at("formats").is_array())
                throw ConfigError("outputs.formats", "expected an array");
            opts.csv = false;
            opts.json_fmt = false;
            for (const json& f : oj.at("formats")) {
                const std::string s = f.get<std::string>();
                if (s == "csv")
                    opts.csv = true;
                else if (s == "json")
                    opts.json_fmt = true;
                else
                    throw ConfigError("outputs.formats", "unknown format \"" + s + "\"");
            }
        }
    }
    if (!override_dir.empty()) opts.dir = override_dir;
    return opts;
}

inline void emit_error(int code, const std::string& message, const std::string& field = "") {
    json e;
    e["error"] = {{"exit", code}, {"message", message}};
    if (!field.empty()) e["error"]["field"] = field;
    std::cerr << e.dump() << "\n";
}

inline void write_run_artifacts(const OutputOptions& opts, const std::string& mode,
                                const RunProducts& p) {
    if (opts.csv) write_fields_csv(opts.dir / "fields.csv", p.spec.grid, p.u, p.z);
    if (opts.json_fmt) write_json_file(opts.dir / "diagnostics.json", diagnostics_envelope(mode, p));
}

inline int run_compare(const json& cfg, const OutputOptions& opts) {
    const json& cj = detail::require_field(cfg, "compare", "config");
    const json& runs = detail::require_field(cj, "runs", "compare");
    if (!runs.is_array() || runs.size() != 2)
        throw ConfigError("compare.runs", "expected exactly two run sources");
    const double tol = detail::number_or(cj, "tolerance", 1e-2);

    RunProducts pa, pb;
    std::exception_ptr ea, eb;
    if (detail::thread_cap() >= 2) {
        std::thread ta([&] {
            try {
                pa = products_from_source(runs.at(0), cfg);
            } catch (...) {
                ea = std::current_exception();
            }
        });
        std::thread tb([&] {
            try {
                pb = products_from_source(runs.at(1), cfg);
            } catch (...) {
                eb = std::current_exception();
            }
        });
        ta.join();
        tb.join();
        if (ea) std::rethrow_exception(ea);
        if (eb) std::rethrow_exception(eb);
    } else {
        pa = products_from_source(runs.at(0), cfg);
        pb = products_from_source(runs.at(1), cfg);
    }

    const Grid& ga = pa.spec.grid;
    const Grid& gb = pb.spec.grid;
    if (ga.dim != gb.dim || ga.n != gb.n || ga.a != gb.a || ga.b != gb.b)
        throw ConfigError("compare", "grid mismatch between the two runs");

    NodeField diff = pa.u;
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] -= pb.u[k];
    double zmax = 0.0;
    for (int d = 0; d < ga.dim; ++d)
        for (std::size_t k = 0; k < pa.z.comp[d].size(); ++k)
            zmax = std::max(zmax, std::abs(pa.z.comp[d][k] - pb.z.comp[d][k]));

    json comparison;
    comparison["grid"] = grid_json(ga);
    comparison["u_distance"] = {{"l1", norm_l1(diff, ga)},
                                {"l2", norm_l2(diff, ga)},
                                {"linf", norm_linf(diff)}};
    comparison["z_max_face_distance"] = zmax;
    comparison["tolerance"] = tol;
    comparison["coincide"] = norm_linf(diff) <= tol;
    write_json_file(opts.dir / "comparison.json", comparison);
    return 0;
}

inline int run_config(const json& cfg, const OutputOptions& opts) {
    const std::string mode = detail::require_field(cfg, "mode", "config").get<std::string>();
    if (mode == "solve") {
        const RunProducts p = execute_solve(cfg);
        write_run_artifacts(opts, mode, p);
        if (!p.converged) {
            emit_error(3, "p-solver did not converge");
            return 3;
        }
        return 0;
    }
    if (mode == "continue") {
        const RunProducts p = execute_continue(cfg);
        write_run_artifacts(opts, mode, p);
        return 0;
    }
    if (mode == "certify") {
        const json& src = detail::require_field(cfg, "candidate", "config");
        RunProducts p = products_from_source(src, cfg);
        const Thresholds th = thresholds_from_config(cfg, p.spec.grid, p.eps_last);
        const CertificateReport rep = certify(p.u, p.z, p.spec, th);
        p.diagnostics["report"] = report_json(rep);
        write_run_artifacts(opts, mode, p);
        write_json_file(opts.dir / "report.json", report_json(rep));
        if (!rep.pass) {
            emit_error(2, "certificate FAIL");
            return 2;
        }
        return 0;
    }
    if (mode == "compare") return run_compare(cfg, opts);
    throw ConfigError("mode", "expected solve, continue, certify, or compare");
}

/// Entry point shared by the tool and the tests: full exit-code contract,
/// machine-readable error JSON on stderr.  A nonempty mode_override (the
/// tool's subcommand) fills a missing "mode" field and must agree with an
/// explicit one.
inline int run(const std::string& config_path, const std::string& out_override = "",
               const std::string& mode_override = "") {
    try {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("config", "cannot open " + config_path);
        json cfg;
        try {
            cfg = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config", std::string("parse: ") + e.what());
        }
        if (!mode_override.empty()) {
            if (!cfg.contains("mode"))
                cfg["mode"] = mode_override;
            else if (cfg.at("mode") != json(mode_override))
                throw ConfigError("mode", "config mode disagrees with the subcommand");
        }
        const OutputOptions opts = outputs_from_config(cfg, out_override);
        std::filesystem::create_directories(opts.dir);
        return run_config(cfg, opts);
    } catch (const ConfigError& e) {
        emit_error(1, e.what(), e.field);
        return 1;
    } catch (const InvalidCandidate& e) {
        emit_error(2, e.what());
        return 2;
    } catch (const AllSolvesFailed& e) {
        emit_error(3, e.what());
        return 3;
    } catch (const SolverFailure& e) {
        emit_error(3, e.what());
        return 3;
    } catch (const json::exception& e) {
        emit_error(1, std::string("config: ") + e.what());
        return 1;
    } catch (const std::exception& e) {
        emit_error(1, e.what());
        return 1;
    }
}

}  // namespace onelap
