#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "deferlab/deferlab.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

int dispatch(deferlab::Mode mode, const CliArgs& args) {
    deferlab::RunConfig cfg = deferlab::parse_config(args.config_path);
    cfg.mode = mode;
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.train.seed = *args.seed;
    }
    if (args.out_dir) cfg.out_dir = *args.out_dir;
    return deferlab::run(cfg, std::cout);
}

void add_common_options(CLI::App* sub, CliArgs& args) {
    sub->add_option("--config", args.config_path, "Path to a JSON run configuration")
        ->required();
    sub->add_option("--seed", args.seed, "Override the config seed");
    sub->add_option("--out", args.out_dir, "Override the config output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"defer-lab: learning-to-defer surrogates, estimators and oracles"};
    app.require_subcommand(1);

    CliArgs args;
    deferlab::Mode mode = deferlab::Mode::verify;
    for (const auto& [name, m, help] :
         {std::tuple{"train", deferlab::Mode::train, "Train a scorer on a dataset"},
          std::tuple{"evaluate", deferlab::Mode::evaluate,
                     "Evaluate a checkpoint and emit a report"},
          std::tuple{"simulate", deferlab::Mode::simulate,
                     "Sample a synthetic dataset with ground truth"},
          std::tuple{"verify", deferlab::Mode::verify,
                     "Run the consistency/recovery/regret property sweeps"}}) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_common_options(sub, args);
        sub->callback([&mode, m] { mode = m; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return dispatch(mode, args);
    } catch (const deferlab::Error& e) {
        deferlab::json err;
        err["error"] = {{"type", "deferlab"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        deferlab::json err;
        err["error"] = {{"type", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    }
}
