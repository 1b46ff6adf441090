#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "conserve/config.hpp"

namespace conserve {

struct BenchSuite {
    std::string name;
    PdeKind pde;
    LawKind law;
};

/// te-mass | te-norm | cac-mass | lse-norm | nls-norm
BenchSuite parse_suite(const std::string& name);

/// One line of the benchmark CSV.
struct BenchRow {
    std::string method;
    std::string pde;
    std::string law;
    std::string seed;
    double rel_l2_mean = 0.0;
    double rel_l2_std = 0.0;
    double cons_err_abs = 0.0;
    double cons_err_rel = 0.0;
    double wall_s = 0.0;
};

extern const char* const kBenchHeader;
void write_bench_csv(const std::filesystem::path& path, std::vector<BenchRow> rows);

// Each command writes its outputs under cfg "out", echoes the resolved
// configuration to <out>/resolved.cfg and prints a short summary to `out`.

/// <out>/train.nods, <out>/test.nods and their .meta sidecars.
void cmd_gen(RunConfig cfg, std::ostream& out);
/// <out>/model.nopc and <out>/loss.csv from <data>/train.nods.
void cmd_train(RunConfig cfg, std::ostream& out);
/// <out>/eval.csv and <out>/rollout.csv for a checkpoint on <data>/test.nods.
void cmd_eval(RunConfig cfg, std::ostream& out);
/// <out>/bench.csv (one row per method), <out>/bench_runs.csv (one per
/// method and seed) and <out>/bench_lambda.csv (Penalty inner sweep).
void cmd_bench(RunConfig cfg, std::ostream& out);
/// <out>/sweep.csv for the Penalty method over cfg "lambdas".
void cmd_sweep(RunConfig cfg, std::ostream& out);

}  // namespace conserve
