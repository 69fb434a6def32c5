// onelap: solve, continue, certify, and compare runs of the singular
// 1-Laplacian problem  -div(Du/|Du|) = f/u^gamma,  u = 0 on the boundary,
// approximated through p -> 1 continuation of regularized p-problems.

#include <array>
#include <cstddef>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "onelap/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"singular 1-Laplacian solver and certificate runner"};
    app.require_subcommand(1);

    struct ModeArgs {
        std::string config;
        std::string out;
    };
    std::array<ModeArgs, 4> args;
    const std::array<std::pair<const char*, const char*>, 4> modes{{
        {"solve", "solve one regularized p-problem"},
        {"continue", "drive p -> 1 along a schedule and extract a limit candidate"},
        {"certify", "evaluate the solution certificate for a candidate pair"},
        {"compare", "compare the fields of two runs"},
    }};
    for (std::size_t m = 0; m < modes.size(); ++m) {
        CLI::App* sub = app.add_subcommand(modes[m].first, modes[m].second);
        sub->add_option("--config", args[m].config, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", args[m].out, "output directory (overrides the config)");
    }

    CLI11_PARSE(app, argc, argv);

    for (std::size_t m = 0; m < modes.size(); ++m)
        if (app.get_subcommand(modes[m].first)->parsed())
            return onelap::run(args[m].config, args[m].out, modes[m].first);
    return 1;  // unreachable: a subcommand is required
}
