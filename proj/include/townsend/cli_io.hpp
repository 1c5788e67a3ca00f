#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "townsend/errors.hpp"
#include "townsend/evolve.hpp"
#include "townsend/model.hpp"
#include "townsend/radial_geometry.hpp"
#include "townsend/spectral.hpp"
#include "townsend/steady_branch.hpp"
#include "townsend/transport.hpp"

namespace townsend {

/// Number format of every CSV cell: 17 significant digits.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Resolved settings of one run. Every field is reachable as `section.key`
/// from a config file or from `--set`.
struct RunConfig {
    // geometry
    int d = 3;
    double r_inner = 1.0;
    double r_outer = 2.0;
    std::size_t n = 200;
    Electrode anode_at = Electrode::inner;
    // model
    ModelParams model{50.0, 0.01, 1.0, 1.0};
    // solver
    double tol_root = 1e-8;
    double tol_eig = 1e-12;
    double tol_newton = 1e-10;
    double eps_trivial = 1e-6;
    double cap = 1e6;
    double cfl = 0.5;
    double s0 = 1e-3;
    std::size_t max_steps = 2000;
    double ds_max = 0.0;
    double lambda_weight = 1.0;
    bool negative_direction = false;
    // scan
    double lambda_min = 0.0;  ///< 0 with lambda_max = 0 selects the default scan
    double lambda_max = 0.0;
    std::size_t samples = 200;
    bool log_spaced = true;
    // branch / null triple
    double lambda_star = 0.0;  ///< 0: computed by the sparking search
    // evolve
    double lambda = 0.0;         ///< 0: use lambda_factor * lambda*
    double lambda_factor = 0.0;
    double T_final = 2.0;
    double amplitude = 1e-6;
    double dt_max = 0.0;
    std::size_t stride = 10;
    std::string initial = "ground";  ///< ground | ions
    // transport check
    std::size_t transport_n = 50;
    std::size_t transport_levels = 3;
    double transport_lambda = 1.0;
    double transport_b = 1.0;

    RadialMesh mesh() const { return RadialMesh(d, r_inner, r_outer, n); }
    ElectrodeOrientation orientation() const { return {anode_at}; }

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError(m); };
        try {
            (void)mesh();
            model.validate();
        } catch (const DomainError& e) {
            fail(e.what());
        }
        auto positive = [&](double v, const char* k) {
            if (!(v > 0.0) || !std::isfinite(v)) fail(std::string(k) + " must be a finite number > 0");
        };
        auto nonnegative = [&](double v, const char* k) {
            if (!(v >= 0.0) || !std::isfinite(v)) fail(std::string(k) + " must be a finite number >= 0");
        };
        positive(tol_root, "solver.tol_root");
        positive(tol_eig, "solver.tol_eig");
        positive(tol_newton, "solver.tol_newton");
        positive(eps_trivial, "solver.eps_trivial");
        positive(cap, "solver.cap");
        positive(cfl, "solver.cfl");
        if (cfl > 1.0) fail("solver.cfl must be <= 1");
        positive(s0, "solver.s0");
        if (max_steps < 1) fail("solver.max_steps must be >= 1");
        nonnegative(ds_max, "solver.ds_max");
        positive(lambda_weight, "solver.lambda_weight");
        nonnegative(lambda_min, "scan.lambda_min");
        nonnegative(lambda_max, "scan.lambda_max");
        if (lambda_max > 0.0 && !(lambda_max > lambda_min)) fail("scan.lambda_max must exceed scan.lambda_min");
        if (lambda_max > 0.0 && log_spaced && !(lambda_min > 0.0))
            fail("scan.lambda_min must be > 0 for a log-spaced scan");
        if (samples < 2) fail("scan.samples must be >= 2");
        nonnegative(lambda_star, "branch.lambda_star");
        nonnegative(lambda, "evolve.lambda");
        nonnegative(lambda_factor, "evolve.lambda_factor");
        positive(T_final, "evolve.T_final");
        nonnegative(amplitude, "evolve.amplitude");
        nonnegative(dt_max, "evolve.dt_max");
        if (stride < 1) fail("evolve.stride must be >= 1");
        if (initial != "ground" && initial != "ions") fail("evolve.initial must be 'ground' or 'ions'");
        if (transport_n < 3) fail("transport.n must be >= 3");
        if (transport_levels < 2) fail("transport.levels must be >= 2");
        positive(transport_lambda, "transport.lambda");
        nonnegative(transport_b, "transport.b");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out))
        throw ConfigError("'" + v + "' is not a finite number");
    return out;
}

inline std::size_t parse_count(const std::string& v) {
    unsigned long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError("'" + v + "' is not a nonnegative integer");
    return static_cast<std::size_t>(out);
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("'" + v + "' is not a boolean (true/false)");
}

struct ConfigKey {
    const char* section;
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
ConfigKey real_key(const char* section, const char* key, T RunConfig::*field) {
    return {section, key, [field](RunConfig& c, const std::string& v) { c.*field = parse_double(v); },
            [field](const RunConfig& c) { return format_number(c.*field); }};
}

inline ConfigKey count_key(const char* section, const char* key, std::size_t RunConfig::*field) {
    return {section, key, [field](RunConfig& c, const std::string& v) { c.*field = parse_count(v); },
            [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

inline ConfigKey bool_key(const char* section, const char* key, bool RunConfig::*field) {
    return {section, key, [field](RunConfig& c, const std::string& v) { c.*field = parse_bool(v); },
            [field](const RunConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

inline ConfigKey model_key(const char* key, double ModelParams::*field) {
    return {"model", key, [field](RunConfig& c, const std::string& v) { c.model.*field = parse_double(v); },
            [field](const RunConfig& c) { return format_number(c.model.*field); }};
}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        k.push_back({"geometry", "d",
                     [](RunConfig& c, const std::string& v) {
                         const auto d = parse_count(v);
                         if (d != 2 && d != 3) throw ConfigError("dimension must be 2 or 3");
                         c.d = static_cast<int>(d);
                     },
                     [](const RunConfig& c) { return std::to_string(c.d); }});
        k.push_back(real_key("geometry", "r_inner", &RunConfig::r_inner));
        k.push_back(real_key("geometry", "r_outer", &RunConfig::r_outer));
        k.push_back(count_key("geometry", "n", &RunConfig::n));
        k.push_back({"geometry", "anode_at",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "inner") c.anode_at = Electrode::inner;
                         else if (v == "outer") c.anode_at = Electrode::outer;
                         else throw ConfigError("anode_at must be 'inner' or 'outer'");
                     },
                     [](const RunConfig& c) { return std::string(to_string(c.anode_at)); }});
        k.push_back(model_key("a", &ModelParams::a));
        k.push_back(model_key("b", &ModelParams::b));
        k.push_back(model_key("k_i", &ModelParams::k_i));
        k.push_back(model_key("k_e", &ModelParams::k_e));
        k.push_back(real_key("solver", "tol_root", &RunConfig::tol_root));
        k.push_back(real_key("solver", "tol_eig", &RunConfig::tol_eig));
        k.push_back(real_key("solver", "tol_newton", &RunConfig::tol_newton));
        k.push_back(real_key("solver", "eps_trivial", &RunConfig::eps_trivial));
        k.push_back(real_key("solver", "cap", &RunConfig::cap));
        k.push_back(real_key("solver", "cfl", &RunConfig::cfl));
        k.push_back(real_key("solver", "s0", &RunConfig::s0));
        k.push_back(count_key("solver", "max_steps", &RunConfig::max_steps));
        k.push_back(real_key("solver", "ds_max", &RunConfig::ds_max));
        k.push_back(real_key("solver", "lambda_weight", &RunConfig::lambda_weight));
        k.push_back(bool_key("solver", "negative_direction", &RunConfig::negative_direction));
        k.push_back(real_key("scan", "lambda_min", &RunConfig::lambda_min));
        k.push_back(real_key("scan", "lambda_max", &RunConfig::lambda_max));
        k.push_back(count_key("scan", "samples", &RunConfig::samples));
        k.push_back(bool_key("scan", "log_spaced", &RunConfig::log_spaced));
        k.push_back(real_key("branch", "lambda_star", &RunConfig::lambda_star));
        k.push_back(real_key("evolve", "lambda", &RunConfig::lambda));
        k.push_back(real_key("evolve", "lambda_factor", &RunConfig::lambda_factor));
        k.push_back(real_key("evolve", "T_final", &RunConfig::T_final));
        k.push_back(real_key("evolve", "amplitude", &RunConfig::amplitude));
        k.push_back(real_key("evolve", "dt_max", &RunConfig::dt_max));
        k.push_back(count_key("evolve", "stride", &RunConfig::stride));
        k.push_back({"evolve", "initial", [](RunConfig& c, const std::string& v) { c.initial = v; },
                     [](const RunConfig& c) { return c.initial; }});
        k.push_back(count_key("transport", "n", &RunConfig::transport_n));
        k.push_back(count_key("transport", "levels", &RunConfig::transport_levels));
        k.push_back(real_key("transport", "lambda", &RunConfig::transport_lambda));
        k.push_back(real_key("transport", "b", &RunConfig::transport_b));
        return k;
    }();
    return keys;
}

inline const ConfigKey* find_key(const std::string& section, const std::string& key) {
    for (const auto& k : config_keys())
        if (section == k.section && key == k.key) return &k;
    return nullptr;
}

}  // namespace detail

/// Applies `section.key=value`.
inline void apply_setting(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected section.key=value, got '" + assignment + "'");
    const std::string name = detail::trim(std::string_view(assignment).substr(0, eq));
    const std::string value = detail::trim(std::string_view(assignment).substr(eq + 1));
    const auto dot = name.find('.');
    if (dot == std::string::npos) throw ConfigError("setting '" + name + "' must be written section.key");
    const auto* k = detail::find_key(name.substr(0, dot), name.substr(dot + 1));
    if (!k) throw ConfigError("unknown setting '" + name + "'");
    try {
        k->set(cfg, value);
    } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    }
}

/// Parses INI-like text: `[section]` headers, `key = value` lines, `#` or `;` comments.
/// A CSV produced by this tool is accepted too: only the echoed block between
/// `# config begin` and `# config end` is read.
inline void parse_config(RunConfig& cfg, const std::string& text, const std::string& source = "<config>") {
    std::istringstream in(text);
    std::string raw;
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::size_t lineno = 0;
    const bool echoed = text.find("# config begin") != std::string::npos;
    bool inside = !echoed;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = detail::trim(raw);
        if (echoed) {
            if (line == "# config begin") {
                inside = true;
                continue;
            }
            if (line == "# config end") {
                inside = false;
                continue;
            }
            if (!inside) continue;
            if (line.rfind("# ", 0) != 0) continue;
            line = detail::trim(std::string_view(line).substr(2));
        }
        if (!inside) continue;
        lines.emplace_back(lineno, line);
    }
    std::string section;
    for (const auto& [no, line] : lines) {
        const std::string where = source + ":" + std::to_string(no) + ": ";
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            bool known = false;
            for (const auto& k : detail::config_keys()) known = known || section == k.section;
            if (!known) throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + line + "'");
        if (section.empty()) throw ConfigError(where + "key outside of any [section]");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        const auto* k = detail::find_key(section, key);
        if (!k) throw ConfigError(where + "unknown key '" + key + "' in section [" + section + "]");
        try {
            k->set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + section + "." + key + ": " + e.what());
        }
    }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    parse_config(cfg, ss.str(), path);
}

/// Canonical `[section]` / `key=value` rendering of the resolved config.
inline std::vector<std::string> config_lines(const RunConfig& cfg) {
    std::vector<std::string> out;
    std::string section;
    for (const auto& k : detail::config_keys()) {
        if (section != k.section) {
            section = k.section;
            out.push_back("[" + section + "]");
        }
        out.push_back(std::string(k.key) + "=" + k.get(cfg));
    }
    return out;
}

/// Comment-prefixed metadata, one header row, numeric rows, comment footer.
struct CsvTable {
    std::vector<std::string> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> footer;

    void add_row(std::vector<std::string> cells) { rows.push_back(std::move(cells)); }

    std::string str() const {
        std::string out;
        for (const auto& m : meta) out += "# " + m + "\n";
        auto join = [&](const std::vector<std::string>& cells) {
            for (std::size_t k = 0; k < cells.size(); ++k) {
                if (k) out += ',';
                out += cells[k];
            }
            out += '\n';
        };
        join(columns);
        for (const auto& r : rows) join(r);
        for (const auto& f : footer) out += "# " + f + "\n";
        return out;
    }
};

inline CsvTable table_for(const std::string& command, const RunConfig& cfg) {
    CsvTable t;
    t.meta.push_back("townsend " + command);
    t.meta.push_back("config begin");
    for (auto& l : config_lines(cfg)) t.meta.push_back(l);
    t.meta.push_back("config end");
    return t;
}

/// Table plus the solver failure that cut the run short, if any.
struct CommandResult {
    CsvTable table;
    std::optional<std::string> solver_error;
};

struct Problem {
    RadialMesh mesh;
    HarmonicField field;
    ModelParams params;
};

inline Problem make_problem(const RunConfig& cfg) {
    cfg.validate();
    auto mesh = cfg.mesh();
    auto field = harmonic_potential(mesh, cfg.orientation());
    return {std::move(mesh), std::move(field), cfg.model};
}

inline SparkingOptions sparking_options(const RunConfig& cfg, std::size_t threads) {
    SparkingOptions o;
    o.tol_root = cfg.tol_root;
    o.threads = static_cast<unsigned>(threads);
    o.eig.tol_eig = cfg.tol_eig;
    return o;
}

inline ScanSpec scan_spec(const RunConfig& cfg, const Problem& pb) {
    if (cfg.lambda_max > 0.0) return {cfg.lambda_min, cfg.lambda_max, cfg.samples, cfg.log_spaced};
    auto s = default_scan(pb.field, pb.params);
    s.samples = cfg.samples;
    return s;
}

inline SparkingResult run_sparking(const RunConfig& cfg, const Problem& pb, std::size_t threads) {
    return find_sparking(pb.field, pb.params, pb.mesh, scan_spec(cfg, pb), sparking_options(cfg, threads));
}

inline void sparking_footer(CsvTable& t, const SparkingResult& r) {
    if (r.lambda_star) t.footer.push_back("lambda_star=" + format_number(*r.lambda_star));
    else t.footer.push_back("no sparking voltage");
    if (r.lambda_sharp) t.footer.push_back("lambda_sharp=" + format_number(*r.lambda_sharp));
    t.footer.push_back("roots=" + std::to_string(r.roots.size()));
    if (!r.diagnostic.empty()) t.footer.push_back("diagnostic=" + r.diagnostic);
}

inline CommandResult cmd_kappa_scan(const RunConfig& cfg, std::size_t threads = 1) {
    const auto pb = make_problem(cfg);
    const auto r = run_sparking(cfg, pb, threads);
    CommandResult out{table_for("kappa-scan", cfg), std::nullopt};
    out.table.columns = {"lambda", "kappa", "kappa_prime"};
    for (const auto& s : r.kappa_profile)
        out.table.add_row({format_number(s.lambda), format_number(s.kappa), format_number(s.kappa_prime)});
    sparking_footer(out.table, r);
    return out;
}

inline CommandResult cmd_sparking(const RunConfig& cfg, std::size_t threads = 1) {
    const auto pb = make_problem(cfg);
    const auto r = run_sparking(cfg, pb, threads);
    CommandResult out{table_for("sparking", cfg), std::nullopt};
    out.table.columns = {"lambda", "kappa", "kappa_prime", "kind"};
    for (const auto& root : r.roots) {
        std::string kind = "other";
        if (r.lambda_star && root.lambda == *r.lambda_star) kind = "sparking";
        if (r.lambda_sharp && root.lambda == *r.lambda_sharp) kind = "anti-sparking";
        out.table.add_row({format_number(root.lambda), format_number(root.kappa), format_number(root.kappa_prime), kind});
    }
    sparking_footer(out.table, r);
    return out;
}

/// lambda* from the config, or from the sparking search when unset.
inline double resolve_lambda_star(const RunConfig& cfg, const Problem& pb, std::size_t threads) {
    if (cfg.lambda_star > 0.0) return cfg.lambda_star;
    const auto r = run_sparking(cfg, pb, threads);
    if (!r.lambda_star) throw SolverError("no sparking voltage in the scanned range");
    return *r.lambda_star;
}

inline CommandResult cmd_null_triple(const RunConfig& cfg, std::size_t threads = 1) {
    const auto pb = make_problem(cfg);
    const double ls = resolve_lambda_star(cfg, pb, threads);
    const auto t = null_triple(ls, pb.field, pb.params, pb.mesh, cfg.tol_root);
    CommandResult out{table_for("null-triple", cfg), std::nullopt};
    out.table.columns = {"r", "phi_i", "phi_e", "phi_v"};
    for (std::size_t j = 0; j < pb.mesh.size(); ++j)
        out.table.add_row({format_number(pb.mesh.r(j)), format_number(t.phi_i[j]), format_number(t.phi_e[j]),
                           format_number(t.phi_v[j])});
    out.table.footer = {"lambda_star=" + format_number(ls), "kappa=" + format_number(t.kappa),
                        "norm_phi_i=" + format_number(t.norm_i), "norm_phi_e=" + format_number(t.norm_e),
                        "norm_phi_v=" + format_number(t.norm_v)};
    return out;
}

inline ContinuationOptions continuation_options(const RunConfig& cfg) {
    ContinuationOptions o;
    o.s0 = cfg.s0;
    o.tol_newton = cfg.tol_newton;
    o.cap_factor = cfg.cap;
    o.eps_trivial = cfg.eps_trivial;
    o.max_steps = cfg.max_steps;
    o.ds_max = cfg.ds_max;
    o.lambda_weight = cfg.lambda_weight;
    o.negative_direction = cfg.negative_direction;
    return o;
}

inline CommandResult cmd_branch(const RunConfig& cfg, std::size_t threads = 1) {
    const auto pb = make_problem(cfg);
    const double ls = resolve_lambda_star(cfg, pb, threads);
    const auto start = null_triple(ls, pb.field, pb.params, pb.mesh, cfg.tol_root);
    CommandResult out{table_for("branch", cfg), std::nullopt};
    out.table.columns = {"s",     "lambda",    "max_rho_i",      "max_rho_e",
                         "max_V", "min_field", "rho_i_positive", "rho_e_positive"};
    std::vector<BranchPoint> points;
    std::optional<BranchOutcome> outcome;
    try {
        auto run = continue_branch(start, pb.field, pb.params, pb.mesh, continuation_options(cfg));
        points = std::move(run.points);
        outcome = run.outcome;
    } catch (const BranchError& e) {
        points = e.points;
        out.solver_error = e.what();
    }
    for (const auto& r : branch_diagnostics(points))
        out.table.add_row({format_number(r.s), format_number(r.lambda), format_number(r.max_rho_i),
                           format_number(r.max_rho_e), format_number(r.max_V), format_number(r.min_field),
                           r.rho_i_positive ? "1" : "0", r.rho_e_positive ? "1" : "0"});
    out.table.footer.push_back("lambda_star=" + format_number(ls));
    if (outcome) {
        out.table.footer.push_back(std::string("outcome=") + to_string(outcome->kind));
        if (outcome->lambda_sharp_observed)
            out.table.footer.push_back("lambda_sharp_observed=" + format_number(*outcome->lambda_sharp_observed));
    } else {
        out.table.footer.push_back("outcome=error");
        out.table.footer.push_back("error=" + *out.solver_error);
    }
    return out;
}

/// Smooth ion bump vanishing with its slope on both electrodes.
inline Grid ion_bump(const RadialMesh& mesh, double amplitude) {
    Grid g = mesh.zeros();
    const double L = mesh.r_outer() - mesh.r_inner();
    const double pi = std::acos(-1.0);
    for (std::size_t j = 1; j <= mesh.interior(); ++j) {
        const double s = std::sin(pi * (mesh.r(j) - mesh.r_inner()) / L);
        g[j] = amplitude * s * s;
    }
    return g;
}

inline CommandResult cmd_evolve(const RunConfig& cfg, std::size_t threads = 1) {
    const auto pb = make_problem(cfg);
    double lambda = cfg.lambda;
    if (lambda == 0.0 && cfg.lambda_factor > 0.0) lambda = cfg.lambda_factor * resolve_lambda_star(cfg, pb, threads);
    const auto pair = stability_index(lambda, pb.field, pb.params, pb.mesh);
    EvolState init = EvolState::zero(pb.mesh);
    if (cfg.initial == "ground") {
        for (std::size_t j = 0; j < pb.mesh.size(); ++j) init.rho_e[j] = cfg.amplitude * pair.phi[j];
    } else {
        init.rho_i = ion_bump(pb.mesh, cfg.amplitude);
    }
    EvolveOptions eo;
    eo.T_final = cfg.T_final;
    eo.cfl = cfg.cfl;
    eo.dt_max = cfg.dt_max;
    eo.stride = cfg.stride;
    CommandResult out{table_for("evolve", cfg), std::nullopt};
    out.table.columns = {"t", "norm_rho_i", "norm_rho_e", "max_rho_i", "max_rho_e", "max_V"};
    const auto tr = run(init, lambda, pb.field, pb.params, pb.mesh, eo);
    for (const auto& s : tr.samples)
        out.table.add_row({format_number(s.t), format_number(s.norm_rho_i), format_number(s.norm_rho_e),
                           format_number(s.max_rho_i), format_number(s.max_rho_e), format_number(s.max_V)});
    auto& f = out.table.footer;
    f.push_back("lambda=" + format_number(lambda));
    f.push_back("dt=" + format_number(tr.dt));
    f.push_back("steps=" + std::to_string(tr.steps));
    f.push_back("fitted_rate=" + format_number(tr.rate.fitted_rate));
    f.push_back("predicted_rate=" + format_number(-pb.params.k_e * pair.kappa));
    f.push_back("fit_residual=" + format_number(tr.rate.fit_residual));
    f.push_back(std::string("linear_regime=") + (tr.rate.in_linear_regime ? "true" : "false"));
    f.push_back("extinction_time=" + (tr.extinction_time ? format_number(*tr.extinction_time) : std::string("none")));
    return out;
}

/// Max-norm error of the transport solver on rho = |r - r_a| with Phi = lambda H.
inline double transport_error(const RunConfig& cfg, std::size_t n, double f_scale) {
    RadialMesh mesh(cfg.d, cfg.r_inner, cfg.r_outer, n);
    const auto field = harmonic_potential(mesh, cfg.orientation());
    const double r_a = mesh.radius_of(cfg.anode_at);
    const int sign = cfg.orientation().outward_sign();
    TransportProblem prob{mesh.zeros(), Grid(mesh.size(), cfg.transport_b), mesh.zeros(), cfg.orientation()};
    Grid exact = mesh.zeros();
    for (std::size_t j = 0; j < mesh.size(); ++j) {
        prob.Phi[j] = cfg.transport_lambda * field.H[j];
        exact[j] = f_scale * sign * (mesh.r(j) - r_a);
        prob.f[j] = f_scale * (cfg.transport_lambda * field.dH[j] * sign + cfg.transport_b * sign * (mesh.r(j) - r_a));
    }
    const auto rho = solve_transport(prob, mesh);
    double err = 0.0;
    for (std::size_t j = 0; j < mesh.size(); ++j) err = std::max(err, std::abs(rho[j] - exact[j]));
    return err;
}

inline CommandResult cmd_transport_check(const RunConfig& cfg, std::size_t = 1) {
    cfg.validate();
    CommandResult out{table_for("transport-check", cfg), std::nullopt};
    out.table.columns = {"case", "n", "error", "order"};
    double prev = 0.0;
    std::size_t n = cfg.transport_n;
    for (std::size_t level = 0; level < cfg.transport_levels; ++level) {
        const double e = transport_error(cfg, n, 1.0);
        const std::string order = level == 0 ? "" : format_number(std::log2(prev / e));
        out.table.add_row({"manufactured", std::to_string(n), format_number(e), order});
        prev = e;
        n = 2 * n + 1;  // halves dr exactly
    }
    out.table.add_row({"homogeneous", std::to_string(cfg.transport_n), format_number(transport_error(cfg, cfg.transport_n, 0.0)), ""});
    return out;
}

}  // namespace townsend
