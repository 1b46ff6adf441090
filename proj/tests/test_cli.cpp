#include <cstdlib>
#include <sstream>

#include "doctest.h"

#include "conserve/checkpoint.hpp"
#include "conserve/commands.hpp"
#include "conserve/error.hpp"
#include "conserve/log.hpp"
#include "test_util.hpp"

using namespace conserve;
using conserve::testing::slurp;
using conserve::testing::slurp_text;
using conserve::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp_text(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

RunConfig gen_cfg(const fs::path& out, const char* pde = "te2d", const char* law = "mass") {
    RunConfig c;
    c.set("pde", pde);
    c.set("law", law);
    c.set("n_train", "8");
    c.set("n_test", "3");
    c.set("resolution", "16");
    c.set("out", out.string());
    return c;
}

RunConfig train_cfg(const fs::path& data, const fs::path& out, const char* method) {
    RunConfig c;
    c.set("data", data.string());
    c.set("out", out.string());
    c.set("method", method);
    c.set("width", "4");
    c.set("layers", "1");
    c.set("epochs", "2");
    c.set("batch_size", "4");
    c.set("seed", "5");
    return c;
}

}  // namespace

TEST_CASE("run config keys") {
    RunConfig c;
    CHECK_THROWS_AS(c.set("colour", "blue"), UsageError);
    CHECK_THROWS_AS(c.merge_text("epochs=3\nwhatever=1\n", "t"), UsageError);
    c.merge_text("epochs=3\nepochs=7 # later wins\n", "t");
    CHECK(c.count("epochs") == 7);
    c.set("epochs", "x");
    CHECK_THROWS_AS(c.count("epochs"), UsageError);
    c.set("paper_dt", "maybe");
    CHECK_THROWS_AS(c.flag("paper_dt"), UsageError);
    CHECK_THROWS_AS(c.pde(), UsageError);
}

TEST_CASE("run config resolution") {
    RunConfig c;
    c.resolve(PdeKind::Lse1d, LawKind::Quadratic);
    CHECK(c.get("arch") == "fno1d");
    CHECK(c.get("resolution") == "128");
    CHECK(c.get("modes") == "16");
    CHECK(c.real("lr0") == 1.5e-3);
    CHECK(c.reals("lambdas") == default_lambdas(LawKind::Quadratic));
    CHECK(c.model_config(0).in_channels == 3);
    CHECK(c.head().law.channels == std::vector<std::size_t>{0, 1});

    RunConfig t;
    t.resolve(PdeKind::Cac2d, LawKind::Linear);
    CHECK(t.get("arch") == "cnn2d");
    CHECK(t.get("activation") == "tanh");
    CHECK(t.real("lr0") == 1e-4);
    CHECK(t.real("dt_solver") == 1e-4);
    t.set("paper_dt", "true");
    t.set("dt_solver", "auto");
    t.resolve();
    CHECK(t.real("dt_solver") == 1e-5);

    // Resolved text reproduces itself.
    RunConfig back;
    back.merge_text(c.to_text(), "echo");
    CHECK(back.to_text() == c.to_text());

    RunConfig explicit_law;
    explicit_law.set("law", "mass");
    CHECK_THROWS_AS(explicit_law.resolve(PdeKind::Lse1d, LawKind::Quadratic), DataError);
    RunConfig bad_pair;
    CHECK_THROWS_AS(bad_pair.resolve(PdeKind::Cac2d, LawKind::Quadratic), UsageError);
    RunConfig bad_arch;
    bad_arch.set("arch", "cnn2d");
    CHECK_THROWS_AS(bad_arch.resolve(PdeKind::Nls1d, LawKind::Quadratic), UsageError);
    RunConfig bad_method;
    bad_method.set("method", "sgd");
    CHECK_THROWS_AS(bad_method.resolve(PdeKind::Nls1d, LawKind::Quadratic), UsageError);
}

TEST_CASE("log formatting honours colour settings") {
    CHECK(log::format(log::Level::Warn, "careful", false) == "conserve: warning: careful");
    CHECK(log::format(log::Level::Error, "x", true).find("\033[31m") != std::string::npos);
    ::setenv("NO_COLOR", "1", 1);
    CHECK_FALSE(log::color_enabled());
    ::unsetenv("NO_COLOR");
}

TEST_CASE("gen writes readable deterministic datasets") {
    TempDir dir("conserve_cli");
    std::ostringstream out;
    cmd_gen(gen_cfg(dir.path / "a"), out);
    const std::string summary = out.str();
    CHECK(summary.find("train: 8 samples") != std::string::npos);

    DatasetSplit train = read_dataset(dir.path / "a" / "train.nods");
    DatasetSplit test = read_dataset(dir.path / "a" / "test.nods");
    CHECK(train.size() == 8);
    CHECK(test.size() == 3);
    CHECK(target_residual(train) < 1e-8);
    CHECK(target_residual(test) < 1e-8);

    // Rerun from the echoed config into a second directory.
    RunConfig again = RunConfig::from_file(dir.path / "a" / "resolved.cfg");
    again.set("out", (dir.path / "b").string());
    std::ostringstream sink;
    cmd_gen(again, sink);
    for (const char* f : {"train.nods", "test.nods", "train.nods.meta", "test.nods.meta"}) {
        CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));
    }

    CHECK_THROWS_AS(cmd_gen(gen_cfg(dir.path / "c", "cac2d", "norm"), sink), UsageError);
    RunConfig no_pde;
    CHECK_THROWS_AS(cmd_gen(no_pde, sink), UsageError);
}

TEST_CASE("train and eval through the command layer") {
    TempDir dir("conserve_cli");
    std::ostringstream sink;
    cmd_gen(gen_cfg(dir.path / "data", "te2d", "norm"), sink);

    RunConfig tc = train_cfg(dir.path / "data", dir.path / "run", "adaptive");
    cmd_train(tc, sink);
    const fs::path ckpt = dir.path / "run" / "model.nopc";
    REQUIRE(fs::exists(ckpt));
    CHECK(slurp_text(ckpt).rfind("NOPC1", 0) == 0);
    auto loss = read_csv(dir.path / "run" / "loss.csv");
    REQUIRE(loss.size() == 3);
    CHECK(loss[0] == std::vector<std::string>{"epoch", "loss"});

    // Retraining from the echoed config gives a byte-identical checkpoint.
    RunConfig again = RunConfig::from_file(dir.path / "run" / "resolved.cfg");
    again.set("out", (dir.path / "run2").string());
    cmd_train(again, sink);
    CHECK(slurp(ckpt) == slurp(dir.path / "run2" / "model.nopc"));
    CHECK(slurp(dir.path / "run" / "loss.csv") == slurp(dir.path / "run2" / "loss.csv"));

    RunConfig ec;
    ec.set("checkpoint", (dir.path / "run").string());
    ec.set("data", (dir.path / "data").string());
    ec.set("out", (dir.path / "eval").string());
    ec.set("steps", "4");
    cmd_eval(ec, sink);
    auto rows = read_csv(dir.path / "eval" / "eval.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].size() == 9);
    CHECK(rows[1][0] == "adaptive");
    CHECK(rows[1][2] == "norm");
    auto roll = read_csv(dir.path / "eval" / "rollout.csv");
    REQUIRE(roll.size() == 5);
    CHECK(roll[0] == std::vector<std::string>{"step", "rel_l2", "cons_err_abs", "cons_err_rel"});
    for (std::size_t s = 1; s < roll.size(); ++s) CHECK(std::stod(roll[s][3]) <= 1e-12);

    // Reloaded checkpoint matches the in-memory model's metrics.
    RunConfig mem = RunConfig::from_file(dir.path / "run" / "resolved.cfg");
    Surrogate s = mem.make_surrogate(mem.u64("seed"));
    DatasetSplit train_data = read_dataset(dir.path / "data" / "train.nods");
    train(s, train_data, mem.train_config(mem.u64("seed")));
    DatasetSplit test_data = read_dataset(dir.path / "data" / "test.nods");
    EvalReport r = evaluate([&](const GridField& x, double c) { return s.predict(x, c); }, test_data, {}, 1);
    CHECK(rows[1][4] == format_double(r.rel_l2_mean));
    CHECK(rows[1][6] == format_double(r.cons_err_abs));

    ec.set("steps", "1");
    cmd_eval(ec, sink);
    CHECK(read_csv(dir.path / "eval" / "rollout.csv").size() == 2);
    ec.set("steps", "11");
    CHECK_THROWS_AS(cmd_eval(ec, sink), UsageError);

    SUBCASE("incompatible checkpoint") {
        ec.set("steps", "1");
        RunConfig cfg = RunConfig::from_file(dir.path / "run" / "resolved.cfg");
        cfg.set("width", "5");
        cfg.write(dir.path / "run" / "resolved.cfg");
        CHECK_THROWS_AS(cmd_eval(ec, sink), DataError);
    }
    SUBCASE("law mismatch") {
        RunConfig bad = train_cfg(dir.path / "data", dir.path / "bad", "raw");
        bad.set("law", "mass");
        CHECK_THROWS_AS(cmd_train(bad, sink), DataError);
    }
    SUBCASE("numerical blow-up") {
        RunConfig bad = train_cfg(dir.path / "data", dir.path / "bad", "raw");
        bad.set("lr0", "1e300");
        bad.set("epochs", "5");
        CHECK_THROWS_AS(cmd_train(bad, sink), NumericalError);
    }
    SUBCASE("missing data") {
        RunConfig bad = train_cfg(dir.path / "nothing", dir.path / "bad", "raw");
        CHECK_THROWS_AS(cmd_train(bad, sink), DataError);
    }
}

TEST_CASE("sweep rows and the zero-weight row") {
    TempDir dir("conserve_cli");
    std::ostringstream sink;
    cmd_gen(gen_cfg(dir.path / "data"), sink);

    RunConfig sc = train_cfg(dir.path / "data", dir.path / "sweep", "penalty");
    sc.set("lambdas", "0,1e-3,1e-2");
    cmd_sweep(sc, sink);
    auto rows = read_csv(dir.path / "sweep" / "sweep.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == std::vector<std::string>{"lambda", "rel_l2", "cons_err"});
    CHECK(rows[1][0] == "0");

    cmd_train(train_cfg(dir.path / "data", dir.path / "raw", "raw"), sink);
    RunConfig ec;
    ec.set("checkpoint", (dir.path / "raw").string());
    ec.set("data", (dir.path / "data").string());
    ec.set("out", (dir.path / "raw_eval").string());
    ec.set("steps", "1");
    cmd_eval(ec, sink);
    auto raw = read_csv(dir.path / "raw_eval" / "eval.csv");
    CHECK(rows[1][1] == raw[1][4]);
    CHECK(rows[1][2] == raw[1][6]);

    RunConfig d = train_cfg(dir.path / "data", dir.path / "sweep2", "penalty");
    cmd_sweep(d, sink);
    CHECK(read_csv(dir.path / "sweep2" / "sweep.csv").size() == 5);
    CHECK(RunConfig::from_file(dir.path / "sweep2" / "resolved.cfg").get("lambdas") == "0,1e-04,0.001,0.01");
}

TEST_CASE("bench emits one row per method") {
    TempDir dir("conserve_cli");
    RunConfig c;
    c.set("suite", "te-mass");
    c.set("seeds", "2");
    c.set("n_train", "8");
    c.set("n_test", "4");
    c.set("resolution", "16");
    c.set("width", "4");
    c.set("layers", "1");
    c.set("epochs", "1");
    c.set("out", dir.path.string());
    std::ostringstream sink;
    cmd_bench(c, sink);
    auto rows = read_csv(dir.path / "bench.csv");
    REQUIRE(rows.size() == 6);
    const std::vector<std::string> methods{"ablation", "adaptive", "penalty", "projection", "raw"};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(rows[i + 1][0] == methods[i]);
        CHECK(rows[i + 1][3] == "0;1");
    }
    CHECK(std::stod(rows[2][6]) <= 1e-10);  // adaptive
    CHECK(std::stod(rows[5][6]) > 1e-4);    // raw
    auto runs = read_csv(dir.path / "bench_runs.csv");
    REQUIRE(runs.size() == 11);
    CHECK(runs[1][0] == "ablation");
    CHECK(runs[1][3] == "0");
    CHECK(runs[2][3] == "1");
    CHECK(fs::exists(dir.path / "bench_lambda.csv"));

    c.set("suite", "heat");
    CHECK_THROWS_AS(cmd_bench(c, sink), UsageError);
}
