// conserve: dataset generation, training, evaluation, benchmarks and lambda sweeps.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "conserve/commands.hpp"
#include "conserve/error.hpp"
#include "conserve/log.hpp"

namespace {

using namespace conserve;

struct Sub {
    CLI::App* app;
    void (*run)(RunConfig, std::ostream&);
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural PDE surrogates with exact conservation correction"};
    app.require_subcommand(1);

    std::string config_path;
    std::map<std::string, std::string> overrides;
    std::vector<std::string> sets;

    auto option = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        sub->add_option_function<std::string>(
            "--" + flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
    };
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--set", sets, "extra key=value override (repeatable)");
        option(sub, "out", "out", "output directory");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate train and test datasets");
    common(gen);
    option(gen, "pde", "pde", "te2d | cac2d | lse1d | nls1d");
    option(gen, "law", "law", "mass | norm");
    option(gen, "n-train", "n_train", "training samples");
    option(gen, "n-test", "n_test", "test samples");
    option(gen, "res", "resolution", "grid points per axis");
    option(gen, "seed", "seed", "dataset seed");
    gen->add_flag_callback("--paper-dt", [&] { overrides["paper_dt"] = "true"; }, "use the 1e-5 Allen-Cahn Euler step");

    CLI::App* trn = app.add_subcommand("train", "train a model on <data>/train.nods");
    common(trn);
    option(trn, "data", "data", "dataset directory or file");
    option(trn, "method", "method", "raw | adaptive | penalty | projection | ablation");
    option(trn, "lambda", "lambda", "penalty weight");
    option(trn, "epochs", "epochs", "training epochs");
    option(trn, "seed", "seed", "model and shuffle seed");

    CLI::App* evl = app.add_subcommand("eval", "evaluate a checkpoint on <data>/test.nods");
    common(evl);
    option(evl, "checkpoint", "checkpoint", "checkpoint file or training output directory");
    option(evl, "data", "data", "dataset directory or file");
    option(evl, "steps", "steps", "rollout steps (1..10)");

    CLI::App* bench = app.add_subcommand("bench", "compare all methods on one suite");
    common(bench);
    option(bench, "suite", "suite", "te-mass | te-norm | cac-mass | lse-norm | nls-norm");
    option(bench, "seeds", "seeds", "replicas per method");
    option(bench, "epochs", "epochs", "training epochs");
    option(bench, "n-train", "n_train", "training samples");
    option(bench, "n-test", "n_test", "test samples");
    option(bench, "seed", "seed", "base seed");

    CLI::App* sweep = app.add_subcommand("sweep", "penalty weight sweep");
    common(sweep);
    option(sweep, "data", "data", "dataset directory");
    option(sweep, "lambdas", "lambdas", "comma separated penalty weights");
    option(sweep, "epochs", "epochs", "training epochs");
    option(sweep, "seed", "seed", "model and shuffle seed");

    const Sub subs[] = {{gen, cmd_gen}, {trn, cmd_train}, {evl, cmd_eval}, {bench, cmd_bench}, {sweep, cmd_sweep}};

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.merge_file(config_path);
        for (const std::string& kv : sets) cfg.merge_text(kv, "--set");
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        for (const Sub& s : subs) {
            if (s.app->parsed()) s.run(cfg, std::cout);
        }
        return 0;
    } catch (const UsageError& e) {
        log::error(e.what());
        return 2;
    } catch (const DataError& e) {
        log::error(e.what());
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        log::error(e.what());
        return 3;
    } catch (const NumericalError& e) {
        log::error(e.what());
        return 4;
    } catch (const DomainError& e) {
        log::error(e.what());
        return 4;
    } catch (const ShapeError& e) {
        log::error(e.what());
        return 2;
    } catch (const std::exception& e) {
        log::error(std::string("internal error: ") + e.what());
        return 4;
    }
}
