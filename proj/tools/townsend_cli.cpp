#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "townsend/cli_io.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kSolverError = 3;

using Command = std::function<townsend::CommandResult(const townsend::RunConfig&, std::size_t)>;

int write_output(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::fwrite(text.data(), 1, text.size(), stdout);
        return 0;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        std::cerr << "error: cannot write '" << path << "'\n";
        return kConfigError;
    }
    f << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Radial Townsend discharge laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    std::vector<std::string> sets;
    std::size_t threads = 1;

    const std::map<std::string, std::pair<std::string, Command>> commands = {
        {"kappa-scan", {"stability index kappa(lambda) on a voltage grid", townsend::cmd_kappa_scan}},
        {"sparking", {"sparking and anti-sparking voltages", townsend::cmd_sparking}},
        {"null-triple", {"kernel of the linearized stationary problem at lambda*", townsend::cmd_null_triple}},
        {"branch", {"continuation of the stationary branch from lambda*", townsend::cmd_branch}},
        {"evolve", {"time integration and growth-rate fit", townsend::cmd_evolve}},
        {"transport-check", {"manufactured-solution convergence of the transport solver", townsend::cmd_transport_check}},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", config_path, "config file (INI sections, or a CSV produced by this tool)");
        sub->add_option("--out", out_path, "output CSV path (default: standard output)");
        sub->add_option("--set", sets, "override section.key=value (repeatable)")->take_all();
        sub->add_option("--threads", threads, "worker threads for voltage scans")->check(CLI::PositiveNumber);
        subs[name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    std::string chosen;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) chosen = name;

    townsend::RunConfig cfg;
    try {
        if (!config_path.empty()) townsend::load_config_file(cfg, config_path);
        for (const auto& s : sets) townsend::apply_setting(cfg, s);
        cfg.validate();
    } catch (const townsend::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }

    try {
        const auto result = commands.at(chosen).second(cfg, threads);
        const int rc = write_output(result.table.str(), out_path);
        if (rc != 0) return rc;
        if (result.solver_error) {
            std::cerr << "solver error: " << *result.solver_error << "\n";
            return kSolverError;
        }
        return 0;
    } catch (const townsend::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const townsend::DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const townsend::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kSolverError;
    }
}
