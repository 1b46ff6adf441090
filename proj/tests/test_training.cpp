#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "doctest.h"

#include "conserve/error.hpp"
#include "conserve/pdegen.hpp"
#include "conserve/training.hpp"

using namespace conserve;

namespace {

PdeSpec nls_small() {
    PdeSpec s = PdeSpec::defaults(PdeKind::Nls1d);
    s.resolution = 32;
    s.seed = 3;
    return s;
}

ModelConfig fno_small(std::uint64_t seed = 1) {
    ModelConfig c;
    c.arch = Arch::Fno1d;
    c.in_channels = 3;
    c.out_channels = 2;
    c.hidden_width = 8;
    c.layers = 2;
    c.modes = 4;
    c.seed = seed;
    return c;
}

CorrectionHead norm_head(const ModelConfig& m) {
    CorrectionHead h;
    h.generator = GeneratorKind::PointwiseMlp;
    h.law.kind = LawKind::Quadratic;
    h.law.channels = {0, 1};
    h.grid = {32};
    (void)m;
    return h;
}

TrainConfig quick(Method m, std::size_t epochs) {
    TrainConfig t;
    t.method = m;
    t.epochs = epochs;
    t.batch_size = 4;
    t.seed = 7;
    return t;
}

bool same_params(const ParamStore& a, const ParamStore& b) {
    if (a.names() != b.names()) return false;
    for (const auto& [name, p] : a) {
        const auto& q = b.at(name).value;
        if (std::memcmp(p.value.values().data(), q.values().data(), p.value.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("method names round trip") {
    for (Method m : {Method::Raw, Method::Adaptive, Method::Penalty, Method::Projection, Method::AblationAppendMlp}) {
        CHECK(parse_method(method_name(m)) == m);
    }
    CHECK_THROWS_AS(parse_method("sgd"), UsageError);
}

TEST_CASE("adam update") {
    TrainConfig cfg;
    ParamStore ps;
    ps.add("w", Tensor(Shape{2}, std::vector<double>{0.0, 3.0}));
    auto& p = ps.at("w");
    p.grad[0] = 1.0;
    p.grad[1] = 0.0;
    adam_step(ps, 0.1, cfg);
    // m_hat = g and v_hat = g^2 after the first bias-corrected step.
    CHECK(p.value[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(p.value[1] == 3.0);
    CHECK(ps.step_count == 1);

    const double m0 = p.m[0], v0 = p.v[0];
    p.grad[0] = 0.0;
    const double before = p.value[0];
    adam_step(ps, 0.1, cfg);
    CHECK(p.m[0] == doctest::Approx(0.9 * m0).epsilon(1e-15));
    CHECK(p.v[0] == doctest::Approx(0.999 * v0).epsilon(1e-15));
    CHECK(p.value[0] < before);  // momentum keeps moving it
    CHECK(p.value[1] == 3.0);
}

TEST_CASE("learning rate halves every hundred epochs") {
    TrainConfig cfg;
    cfg.lr0 = 1.5e-3;
    CHECK(learning_rate(cfg, 0) == 1.5e-3);
    CHECK(learning_rate(cfg, 99) == 1.5e-3);
    CHECK(learning_rate(cfg, 100) == 0.75e-3);
    CHECK(learning_rate(cfg, 199) == 0.75e-3);
    CHECK(learning_rate(cfg, 250) == 0.375e-3);
}

TEST_CASE("relative l2 examples") {
    Tensor gt(Shape{3}, std::vector<double>{1.0, -2.0, 2.0});
    Tensor twice(Shape{3}, std::vector<double>{2.0, -4.0, 4.0});
    CHECK(relative_l2(gt, gt) == 0.0);
    CHECK(relative_l2(Tensor(Shape{3}), gt) == 1.0);
    CHECK(relative_l2(twice, gt) == 1.0);
    CHECK_THROWS_AS(relative_l2(gt, Tensor(Shape{3})), DomainError);
    CHECK_THROWS_AS(relative_l2(gt, Tensor(Shape{4})), ShapeError);
}

TEST_CASE("model input appends coordinates") {
    GridField u1(2, Shape{4}, 5.0);
    GridField in1 = model_input(u1);
    CHECK(in1.channels() == 3);
    CHECK(in1.channel(2)[1] == 0.25);
    CHECK(in1.channel(0)[3] == 5.0);

    GridField u2(1, Shape{4, 2}, 1.0);
    GridField in2 = model_input(u2);
    REQUIRE(in2.channels() == 3);
    // Row-major: point p = i * 2 + j, x along the first axis.
    CHECK(in2.channel(1)[2 * 3 + 1] == 0.75);
    CHECK(in2.channel(2)[2 * 3 + 1] == 0.5);
    CHECK(in2.channel(2)[2 * 3 + 0] == 0.0);
}

TEST_CASE("training is deterministic and zero epochs keeps the initialisation") {
    DatasetSplit data = generate_split(nls_small(), LawKind::Quadratic, Split::Train, 8);
    const ModelConfig m = fno_small();

    Surrogate untouched = Surrogate::create(m, norm_head(m), Method::Adaptive);
    Surrogate zero = Surrogate::create(m, norm_head(m), Method::Adaptive);
    TrainResult r0 = train(zero, data, quick(Method::Adaptive, 0));
    CHECK(r0.loss_curve.empty());
    CHECK(same_params(zero.params, untouched.params));

    Surrogate a = Surrogate::create(m, norm_head(m), Method::Adaptive);
    Surrogate b = Surrogate::create(m, norm_head(m), Method::Adaptive);
    TrainResult ra = train(a, data, quick(Method::Adaptive, 3));
    TrainResult rb = train(b, data, quick(Method::Adaptive, 3));
    CHECK(ra.loss_curve == rb.loss_curve);
    CHECK(same_params(a.params, b.params));
    CHECK_FALSE(same_params(a.params, untouched.params));
}

TEST_CASE("loss curve mostly decreases on a small set") {
    DatasetSplit data = generate_split(nls_small(), LawKind::Quadratic, Split::Train, 16);
    const ModelConfig m = fno_small();
    Surrogate s = Surrogate::create(m, norm_head(m), Method::Raw);
    TrainConfig cfg = quick(Method::Raw, 40);
    cfg.batch_size = 16;
    TrainResult r = train(s, data, cfg);
    REQUIRE(r.loss_curve.size() == 40);
    std::size_t down = 0;
    for (std::size_t e = 1; e < r.loss_curve.size(); ++e) down += r.loss_curve[e] <= r.loss_curve[e - 1];
    const std::string label = "non-increasing transitions: " + std::to_string(down);
    INFO(label);
    CHECK(down >= 32);  // 80% of 39, rounded up
    CHECK(r.loss_curve.back() < r.loss_curve.front());
}

TEST_CASE("adaptive and projected predictions conserve after training") {
    DatasetSplit data = generate_split(nls_small(), LawKind::Quadratic, Split::Train, 8);
    const ModelConfig m = fno_small();
    for (Method method : {Method::Adaptive, Method::Projection}) {
        Surrogate s = Surrogate::create(m, norm_head(m), method);
        train(s, data, quick(method, 2));
        for (std::size_t i = 0; i < data.size(); ++i) {
            const GridField y = s.predict(data.inputs[i], data.cons_targets[i]);
            const double c = data.cons_targets[i];
            CHECK(std::abs(quantity_quadratic(y) - c) <= 1e-10 * c);
        }
    }
}

TEST_CASE("penalty with zero weight reproduces raw training bitwise") {
    DatasetSplit data = generate_split(nls_small(), LawKind::Quadratic, Split::Train, 8);
    const ModelConfig m = fno_small();
    Surrogate raw = Surrogate::create(m, norm_head(m), Method::Raw);
    Surrogate pen = Surrogate::create(m, norm_head(m), Method::Penalty);
    TrainResult rr = train(raw, data, quick(Method::Raw, 3));
    TrainConfig pc = quick(Method::Penalty, 3);
    pc.lambda = 0.0;
    TrainResult rp = train(pen, data, pc);
    REQUIRE(rr.loss_curve.size() == rp.loss_curve.size());
    for (std::size_t e = 0; e < rr.loss_curve.size(); ++e) {
        CHECK(std::abs(rr.loss_curve[e] - rp.loss_curve[e]) <= 1e-15);
    }
    CHECK(same_params(raw.params, pen.params));

    Surrogate tiny = Surrogate::create(m, norm_head(m), Method::Penalty);
    pc.lambda = 1e-300;
    TrainResult rt = train(tiny, data, pc);
    for (std::size_t e = 0; e < rr.loss_curve.size(); ++e) {
        CHECK(std::abs(rr.loss_curve[e] - rt.loss_curve[e]) <= 1e-15);
    }
}

TEST_CASE("training guards") {
    DatasetSplit data = generate_split(nls_small(), LawKind::Quadratic, Split::Train, 4);
    const ModelConfig m = fno_small();

    SUBCASE("law mismatch") {
        CorrectionHead h = norm_head(m);
        h.law.kind = LawKind::Linear;
        Surrogate s = Surrogate::create(m, h, Method::Raw);
        CHECK_THROWS_AS(train(s, data, quick(Method::Raw, 1)), DataError);
    }
    SUBCASE("non-finite loss names the batch") {
        Surrogate s = Surrogate::create(m, norm_head(m), Method::Raw);
        s.params.at("model.proj.bias").value[0] = std::numeric_limits<double>::quiet_NaN();
        try {
            train(s, data, quick(Method::Raw, 1));
            FAIL("expected NumericalError");
        } catch (const NumericalError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("epoch 0") != std::string::npos);
            CHECK(msg.find("batch 0") != std::string::npos);
        }
    }
    SUBCASE("zero targets are skipped") {
        DatasetSplit d = data;
        d.inputs.push_back(GridField(2, Shape{32}));
        d.targets.push_back(GridField(2, Shape{32}));
        d.cons_targets.push_back(0.0);
        Surrogate s = Surrogate::create(m, norm_head(m), Method::Raw);
        TrainResult r = train(s, d, quick(Method::Raw, 1));
        CHECK(r.skipped_samples == 1);
        CHECK(std::isfinite(r.loss_curve[0]));
    }
}

TEST_CASE("a perfect predictor scores zero at every rollout step") {
    const PdeSpec spec = nls_small();
    DatasetSplit test = generate_split(spec, LawKind::Quadratic, Split::Test, 4);
    Trajectories truth = reference_rollouts(test, 5);
    EvalReport r = evaluate([&](const GridField& x, double) { return advance(x, spec); }, test, truth, 5);
    REQUIRE(r.rollout_rel_l2.size() == 5);
    for (std::size_t s = 0; s < 5; ++s) {
        CHECK(r.rollout_rel_l2[s] == 0.0);
        CHECK(r.rollout_cons_rel[s] < 1e-12);
    }
    CHECK(r.rel_l2_mean == 0.0);
    CHECK(r.rel_l2_std == 0.0);
    CHECK(r.skipped_samples == 0);
}

TEST_CASE("evaluation statistics") {
    const PdeSpec spec = nls_small();
    DatasetSplit test = generate_split(spec, LawKind::Quadratic, Split::Test, 3);
    // Predicting twice the truth gives relative error 1 and quadratic error 3 c0.
    EvalReport r = evaluate(
        [&](const GridField& x, double) {
            GridField y = advance(x, spec);
            for (double& v : y.values()) v *= 2.0;
            return y;
        },
        test, {}, 1);
    CHECK(r.rel_l2_mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.rel_l2_std == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.cons_err_rel == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("raw rollout error grows on the nonlinear problem") {
    PdeSpec spec = nls_small();
    DatasetSplit train_data = generate_split(spec, LawKind::Quadratic, Split::Train, 16);
    DatasetSplit test = generate_split(spec, LawKind::Quadratic, Split::Test, 4);
    const ModelConfig m = fno_small();
    Surrogate s = Surrogate::create(m, norm_head(m), Method::Raw);
    train(s, train_data, quick(Method::Raw, 10));
    EvalReport r = evaluate([&](const GridField& x, double c) { return s.predict(x, c); }, test, reference_rollouts(test, 10), 10);
    CHECK(r.rollout_rel_l2[9] >= r.rollout_rel_l2[0]);
    CHECK(r.rollout_rel_l2[0] == r.rel_l2_mean);
}

TEST_CASE("lambda sweep") {
    PdeSpec spec = nls_small();
    DatasetSplit train_data = generate_split(spec, LawKind::Quadratic, Split::Train, 4);
    DatasetSplit test = generate_split(spec, LawKind::Quadratic, Split::Test, 2);
    const ModelConfig m = fno_small();
    auto make = [&] { return Surrogate::create(m, norm_head(m), Method::Penalty); };
    std::vector<SweepRow> rows = lambda_sweep(make, train_data, test, quick(Method::Penalty, 1), {0.0, 1e-4, 1e-3});
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].lambda == 1e-4);

    // The zero row matches a raw model trained the same way.
    Surrogate raw = Surrogate::create(m, norm_head(m), Method::Raw);
    train(raw, train_data, quick(Method::Raw, 1));
    EvalReport r = evaluate([&](const GridField& x, double c) { return raw.predict(x, c); }, test, {}, 1);
    CHECK(std::memcmp(&rows[0].rel_l2, &r.rel_l2_mean, sizeof(double)) == 0);
    CHECK(std::memcmp(&rows[0].cons_err, &r.cons_err_abs, sizeof(double)) == 0);

    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    const std::string text = csv.str();
    CHECK(text.rfind("lambda,rel_l2,cons_err\n0,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(default_lambdas(LawKind::Linear) == std::vector<double>{0.0, 1e-4, 1e-3, 1e-2});
    CHECK(default_lambdas(LawKind::Quadratic) == std::vector<double>{0.0, 1e-5, 1e-4, 1e-3});
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(0.1) == "0.1");
}
