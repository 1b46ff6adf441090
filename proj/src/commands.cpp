#include "conserve/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "conserve/checkpoint.hpp"
#include "conserve/dataset.hpp"
#include "conserve/error.hpp"
#include "conserve/log.hpp"

namespace conserve {

namespace fs = std::filesystem;

const char* const kBenchHeader = "method,pde,law,seed,rel_l2_mean,rel_l2_std,cons_err_abs,cons_err_rel,wall_s";

namespace {

fs::path out_dir(const RunConfig& cfg) {
    fs::path dir = cfg.get("out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

fs::path data_file(const RunConfig& cfg, const char* name) {
    fs::path p = cfg.get("data");
    return fs::is_directory(p) ? p / name : p;
}

fs::path data_dir_file(const RunConfig& cfg, const char* name) {
    fs::path p = cfg.get("data");
    if (!fs::is_directory(p)) throw DataError("data directory " + p.string() + " does not exist");
    return p / name;
}

// Makes the config describe the dataset it is applied to.
void adopt_data(RunConfig& cfg, const DatasetSplit& d) {
    if (cfg.is_auto("resolution")) {
        cfg.set("resolution", std::to_string(d.spec.resolution));
    } else if (cfg.count("resolution") != d.spec.resolution) {
        throw DataError("config resolution " + cfg.get("resolution") + " does not match the data (" +
                        std::to_string(d.spec.resolution) + ")");
    }
    cfg.set("dt_solver", format_double(d.spec.dt_solver));
    cfg.set("horizon", format_double(d.spec.horizon));
    cfg.set("pde_epsilon", format_double(d.spec.epsilon));
    cfg.set("potential", format_double(d.spec.potential));
    cfg.set("coupling", format_double(d.spec.coupling));
    cfg.resolve(d.spec.pde, d.law);
}

void check_compatible(const DatasetSplit& a, const DatasetSplit& b) {
    if (a.spec.pde != b.spec.pde || a.law != b.law || a.spec.resolution != b.spec.resolution) {
        throw DataError("train and test splits describe different problems");
    }
}

Predictor predictor_of(Surrogate& s) {
    return [&s](const GridField& x, double c) { return s.predict(x, c); };
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
}

BenchRow row_of(const RunConfig& cfg, Method m, const std::string& seed, const EvalReport& r, double wall) {
    return {method_name(m), cfg.get("pde"), cfg.get("law"), seed, r.rel_l2_mean, r.rel_l2_std, r.cons_err_abs,
            r.cons_err_rel, wall};
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

double stdev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

TrainResult train_logged(Surrogate& s, const DatasetSplit& data, const TrainConfig& tc, const std::string& tag) {
    const std::size_t every = std::max<std::size_t>(1, tc.epochs / 10);
    return train(s, data, tc, [&](std::size_t epoch, double loss) {
        if ((epoch + 1) % every == 0 || epoch + 1 == tc.epochs) {
            log::info(tag + "epoch " + std::to_string(epoch + 1) + "/" + std::to_string(tc.epochs) + " loss " +
                      format_double(loss));
        }
    });
}

}  // namespace

BenchSuite parse_suite(const std::string& name) {
    static const BenchSuite suites[] = {
        {"te-mass", PdeKind::Te2d, LawKind::Linear},   {"te-norm", PdeKind::Te2d, LawKind::Quadratic},
        {"cac-mass", PdeKind::Cac2d, LawKind::Linear}, {"lse-norm", PdeKind::Lse1d, LawKind::Quadratic},
        {"nls-norm", PdeKind::Nls1d, LawKind::Quadratic},
    };
    for (const BenchSuite& s : suites) {
        if (s.name == name) return s;
    }
    throw UsageError("unknown suite '" + name + "' (expected te-mass, te-norm, cac-mass, lse-norm or nls-norm)");
}

void write_bench_csv(const fs::path& path, std::vector<BenchRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
        if (a.method != b.method) return a.method < b.method;
        return a.seed.size() != b.seed.size() ? a.seed.size() < b.seed.size() : a.seed < b.seed;
    });
    std::string text = std::string(kBenchHeader) + "\n";
    for (const BenchRow& r : rows) {
        text += r.method + ',' + r.pde + ',' + r.law + ',' + r.seed + ',' + format_double(r.rel_l2_mean) + ',' +
                format_double(r.rel_l2_std) + ',' + format_double(r.cons_err_abs) + ',' + format_double(r.cons_err_rel) +
                ',' + format_double(r.wall_s) + '\n';
    }
    write_text(path, text);
}

void cmd_gen(RunConfig cfg, std::ostream& out) {
    cfg.resolve();
    const fs::path dir = out_dir(cfg);
    const PdeSpec spec = cfg.pde_spec();
    const LawKind law = cfg.law();
    const std::pair<Split, const char*> parts[] = {{Split::Train, "n_train"}, {Split::Test, "n_test"}};
    for (const auto& [split, key] : parts) {
        const DatasetSplit data = generate_split(spec, law, split, cfg.count(key));
        const fs::path path = dir / (std::string(split_name(split)) + ".nods");
        write_dataset(data, path);
        out << split_name(split) << ": " << data.size() << " samples, max " << law_name(law)
            << " residual of targets " << format_double(target_residual(data)) << '\n';
        if (data.te_zero_samples > 0) {
            log::warn(std::to_string(data.te_zero_samples) + " " + split_name(split) +
                      " samples are identically zero and will be skipped by the relative metrics");
        }
    }
    cfg.write(dir / "resolved.cfg");
}

void cmd_train(RunConfig cfg, std::ostream& out) {
    const DatasetSplit data = read_dataset(data_file(cfg, "train.nods"));
    adopt_data(cfg, data);
    const fs::path dir = out_dir(cfg);
    const fs::path ckpt = dir / "model.nopc";
    cfg.set("checkpoint", ckpt.string());

    const std::uint64_t seed = cfg.u64("seed");
    Surrogate s = cfg.make_surrogate(seed);
    const TrainConfig tc = cfg.train_config(seed);
    const TrainResult result = train_logged(s, data, tc, "");
    if (result.skipped_samples > 0) {
        log::warn("skipped " + std::to_string(result.skipped_samples) + " samples with a zero target");
    }
    write_checkpoint(s.params, ckpt);
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
        csv += std::to_string(e) + ',' + format_double(result.loss_curve[e]) + '\n';
    }
    write_text(dir / "loss.csv", csv);
    cfg.write(dir / "resolved.cfg");
    out << "trained " << method_name(tc.method) << " for " << tc.epochs << " epochs; final loss "
        << (result.loss_curve.empty() ? std::string("n/a") : format_double(result.loss_curve.back())) << '\n';
}

void cmd_eval(RunConfig cfg, std::ostream& out) {
    fs::path ckpt = cfg.get("checkpoint");
    if (fs::is_directory(ckpt)) ckpt /= "model.nopc";
    const fs::path trained_cfg = ckpt.parent_path() / "resolved.cfg";
    if (!fs::exists(trained_cfg)) throw DataError("no resolved.cfg next to checkpoint " + ckpt.string());

    RunConfig eff = RunConfig::from_file(trained_cfg);
    for (const char* key : {"data", "steps", "out"}) eff.set(key, cfg.get(key));
    eff.set("checkpoint", ckpt.string());
    const DatasetSplit data = read_dataset(data_file(eff, "test.nods"));
    adopt_data(eff, data);

    Surrogate s = eff.make_surrogate(eff.u64("seed"));
    load_checkpoint(s.params, ckpt);
    const std::size_t steps = eff.count("steps");
    if (steps < 1 || steps > 10) throw UsageError("steps must be between 1 and 10");
    const Trajectories truth = steps > 1 ? reference_rollouts(data, steps) : Trajectories{};
    const EvalReport r = evaluate(predictor_of(s), data, truth, steps);

    const fs::path dir = out_dir(eff);
    write_bench_csv(dir / "eval.csv", {row_of(eff, s.method, eff.get("seed"), r, r.wall_time)});
    std::string csv = "step,rel_l2,cons_err_abs,cons_err_rel\n";
    for (std::size_t k = 0; k < steps; ++k) {
        csv += std::to_string(k + 1) + ',' + format_double(r.rollout_rel_l2[k]) + ',' +
               format_double(r.rollout_cons_abs[k]) + ',' + format_double(r.rollout_cons_rel[k]) + '\n';
    }
    write_text(dir / "rollout.csv", csv);
    eff.write(dir / "resolved.cfg");
    out << method_name(s.method) << ": rel_l2 " << format_double(r.rel_l2_mean) << ", cons_err "
        << format_double(r.cons_err_abs) << ", step " << steps << " rel_l2 " << format_double(r.rollout_rel_l2.back())
        << '\n';
}

void cmd_sweep(RunConfig cfg, std::ostream& out) {
    const DatasetSplit train_data = read_dataset(data_dir_file(cfg, "train.nods"));
    const DatasetSplit test_data = read_dataset(data_dir_file(cfg, "test.nods"));
    check_compatible(train_data, test_data);
    cfg.set("method", "penalty");
    adopt_data(cfg, train_data);
    const std::uint64_t seed = cfg.u64("seed");
    const std::vector<double> lambdas = cfg.reals("lambdas");
    const std::vector<SweepRow> rows =
        lambda_sweep([&] { return cfg.make_surrogate(seed); }, train_data, test_data, cfg.train_config(seed), lambdas);

    const fs::path dir = out_dir(cfg);
    std::ofstream csv(dir / "sweep.csv", std::ios::trunc);
    if (!csv) throw DataError("cannot write " + (dir / "sweep.csv").string());
    write_sweep_csv(csv, rows);
    cfg.write(dir / "resolved.cfg");

    auto lo = std::min_element(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.lambda < b.lambda; });
    auto hi = std::max_element(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.lambda < b.lambda; });
    if (hi->cons_err > lo->cons_err) {
        log::warn("largest lambda did not reduce the conservation error (" + format_double(hi->cons_err) + " vs " +
                  format_double(lo->cons_err) + ")");
    }
    out << "swept " << rows.size() << " lambda values\n";
}

void cmd_bench(RunConfig cfg, std::ostream& out) {
    const BenchSuite suite = parse_suite(cfg.get("suite"));
    cfg.set("pde", pde_name(suite.pde));
    cfg.set("law", law_name(suite.law));
    cfg.resolve();
    const fs::path dir = out_dir(cfg);
    const PdeSpec spec = cfg.pde_spec();
    const DatasetSplit train_data = generate_split(spec, suite.law, Split::Train, cfg.count("n_train"));
    const DatasetSplit test_data = generate_split(spec, suite.law, Split::Test, cfg.count("n_test"));
    const std::uint64_t seed0 = cfg.u64("seed");
    const std::size_t seeds = cfg.count("seeds");
    if (seeds == 0) throw UsageError("seeds must be positive");

    // Penalty weight: train on the first three quarters of the training
    // split, score on the rest, keep the lowest relative error.
    DatasetSplit fit = train_data, val = train_data;
    const std::size_t cut = train_data.size() - train_data.size() / 4;
    auto keep = [](DatasetSplit& d, std::size_t b, std::size_t e) {
        d.inputs = {d.inputs.begin() + b, d.inputs.begin() + e};
        d.targets = {d.targets.begin() + b, d.targets.begin() + e};
        d.cons_targets = {d.cons_targets.begin() + b, d.cons_targets.begin() + e};
    };
    keep(fit, 0, cut);
    keep(val, cut, train_data.size());
    RunConfig pen_cfg = cfg;
    pen_cfg.set("method", "penalty");
    double best_lambda = 0.0;
    if (val.size() > 0) {
        const std::vector<SweepRow> sweep = lambda_sweep([&] { return pen_cfg.make_surrogate(seed0); }, fit, val,
                                                         pen_cfg.train_config(seed0), cfg.reals("lambdas"));
        std::ofstream csv(dir / "bench_lambda.csv", std::ios::trunc);
        write_sweep_csv(csv, sweep);
        double best = std::numeric_limits<double>::infinity();
        for (const SweepRow& r : sweep) {
            if (r.rel_l2 < best) {
                best = r.rel_l2;
                best_lambda = r.lambda;
            }
        }
    }
    out << "penalty lambda from inner sweep: " << format_double(best_lambda) << '\n';

    std::vector<BenchRow> runs, summary;
    for (Method m : {Method::Raw, Method::Adaptive, Method::Penalty, Method::Projection, Method::AblationAppendMlp}) {
        RunConfig mc = cfg;
        mc.set("method", method_name(m));
        if (m == Method::Penalty) mc.set("lambda", format_double(best_lambda));
        std::vector<double> rel, cabs, crel, wall;
        std::string seed_list;
        double within_std = 0.0;
        for (std::size_t r = 0; r < seeds; ++r) {
            const std::uint64_t seed = seed0 + r;
            const auto t0 = std::chrono::steady_clock::now();
            Surrogate s = mc.make_surrogate(seed);
            train_logged(s, train_data, mc.train_config(seed),
                         std::string(method_name(m)) + " seed " + std::to_string(seed) + ": ");
            const EvalReport rep = evaluate(predictor_of(s), test_data, {}, 1);
            const double w = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            runs.push_back(row_of(mc, m, std::to_string(seed), rep, w));
            rel.push_back(rep.rel_l2_mean);
            cabs.push_back(rep.cons_err_abs);
            crel.push_back(rep.cons_err_rel);
            wall.push_back(w);
            within_std = rep.rel_l2_std;
            seed_list += (seed_list.empty() ? "" : ";") + std::to_string(seed);
        }
        summary.push_back({method_name(m), mc.get("pde"), mc.get("law"), seed_list, mean(rel),
                           seeds > 1 ? stdev(rel) : within_std, mean(cabs), mean(crel), mean(wall)});
        out << method_name(m) << ": rel_l2 " << format_double(mean(rel)) << ", cons_err " << format_double(mean(cabs))
            << '\n';
    }
    write_bench_csv(dir / "bench.csv", summary);
    write_bench_csv(dir / "bench_runs.csv", runs);
    cfg.write(dir / "resolved.cfg");
}

}  // namespace conserve
