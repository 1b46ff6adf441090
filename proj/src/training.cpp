#include "conserve/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "conserve/error.hpp"
#include "conserve/ops.hpp"

namespace conserve {

const char* method_name(Method m) {
    switch (m) {
        case Method::Raw: return "raw";
        case Method::Adaptive: return "adaptive";
        case Method::Penalty: return "penalty";
        case Method::Projection: return "projection";
        case Method::AblationAppendMlp: return "ablation";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::Raw, Method::Adaptive, Method::Penalty, Method::Projection, Method::AblationAppendMlp}) {
        if (name == method_name(m)) return m;
    }
    throw UsageError("unknown method '" + name + "' (expected raw, adaptive, penalty, projection or ablation)");
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw UsageError("lambda must be >= 0");
    if (!(lr0 > 0.0)) throw UsageError("lr0 must be > 0");
    if (batch_size == 0) throw UsageError("batch_size must be positive");
    if (decay_every == 0) throw UsageError("decay_every must be positive");
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
    return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

void adam_step(ParamStore& params, double lr, const TrainConfig& cfg) {
    ++params.step_count;
    const double t = static_cast<double>(params.step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = p.m[i] / c1;
            const double v_hat = p.v[i] / c2;
            p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps_opt);
        }
    }
}

double relative_l2(const Tensor& pred, const Tensor& gt) {
    if (pred.shape() != gt.shape()) {
        throw ShapeError("relative_l2: " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
    }
    std::vector<double> diff(gt.size()), ref(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        diff[i] = (pred[i] - gt[i]) * (pred[i] - gt[i]);
        ref[i] = gt[i] * gt[i];
    }
    const double denom = pairwise_sum(ref);
    if (denom == 0.0) throw DomainError("relative_l2: ground truth is identically zero");
    return std::sqrt(pairwise_sum(diff) / denom);
}

GridField model_input(const GridField& state) {
    const Shape dims = state.dims();
    const std::size_t C = state.channels(), P = state.points();
    GridField out(C + dims.size(), dims);
    std::copy(state.data().begin(), state.data().end(), out.data().begin());
    std::size_t inner = P;
    for (std::size_t axis = 0; axis < dims.size(); ++axis) {
        inner /= dims[axis];
        const std::vector<double> x = grid_coordinates(dims[axis]);
        auto ch = out.channel(C + axis);
        for (std::size_t p = 0; p < P; ++p) ch[p] = x[(p / inner) % dims[axis]];
    }
    return out;
}

namespace {

bool is_identity_selection(const std::vector<std::size_t>& channels, std::size_t total) {
    if (channels.size() != total) return false;
    for (std::size_t i = 0; i < total; ++i) {
        if (channels[i] != i) return false;
    }
    return true;
}

bool all_zero(const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; });
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return pairwise_sum(v) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
    return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
}

double tensor_norm(const Tensor& t) {
    std::vector<double> sq(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) sq[i] = t[i] * t[i];
    return std::sqrt(pairwise_sum(sq));
}

}  // namespace

Surrogate Surrogate::create(const ModelConfig& model, const CorrectionHead& head, Method method) {
    Surrogate s;
    s.model = model;
    s.head = head;
    s.method = method;
    head.law.validate(model.out_channels);
    init_model_params(model, s.params);
    if (method == Method::Adaptive) init_head_params(head, model, s.params);
    if (method == Method::AblationAppendMlp) init_append_params(model, s.params);
    return s;
}

Var Surrogate::forward(Tape& tape, const GridField& state, double target) {
    Var x = tape.constant(model_input(state));
    switch (method) {
        case Method::Raw:
        case Method::Penalty: return model_forward(model, params, x).output;
        case Method::Adaptive: return corrected_forward(model, head, params, x, target);
        case Method::AblationAppendMlp: return append_mlp_forward(model, params, x);
        case Method::Projection: {
            Var y = model_forward(model, params, x).output;
            const auto& ch = head.law.channels;
            const bool all = is_identity_selection(ch, model.out_channels);
            Var U = all ? y : select_channels(y, ch);
            Var fixed = head.law.kind == LawKind::Linear ? project_linear(U, target) : project_quadratic(U, target);
            return all ? fixed : merge_channels(y, fixed, ch);
        }
    }
    throw UsageError("unknown method");
}

GridField Surrogate::predict(const GridField& state, double target) {
    Tape tape;
    return GridField(forward(tape, state, target).value());
}

TrainResult train(Surrogate& model, const DatasetSplit& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (model.method != cfg.method) throw UsageError("train: surrogate method does not match the training config");
    if (model.head.law.kind != data.law) {
        throw DataError(std::string("train: dataset conserves ") + law_name(data.law) + " but the model enforces " +
                        law_name(model.head.law.kind));
    }
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed ^ 0x7368756666ULL);
    std::vector<bool> usable(n);
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        usable[i] = !all_zero(data.targets[i]);
        if (!usable[i]) ++skipped;
    }

    TrainResult result;
    result.skipped_samples = skipped;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = learning_rate(cfg, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<double> sample_losses;
        sample_losses.reserve(n);
        for (std::size_t start = 0, batch = 0; start < n; start += cfg.batch_size, ++batch) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            model.params.zero_grad();
            Tape tape;
            Var total;
            std::size_t count = 0;
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                if (!usable[i]) continue;
                Var loss;
                try {
                    Var y = model.forward(tape, data.inputs[i], data.cons_targets[i]);
                    loss = relative_l2_loss(y, data.targets[i]);
                    if (cfg.method == Method::Penalty) {
                        const auto& ch = model.head.law.channels;
                        Var U = is_identity_selection(ch, model.model.out_channels) ? y : select_channels(y, ch);
                        loss = add(loss, scale(penalty_term(U, model.head.law.kind, data.cons_targets[i]), cfg.lambda));
                    }
                } catch (const DomainError& e) {
                    throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                                         ", sample " + std::to_string(i) + ": " + e.what());
                }
                sample_losses.push_back(loss.value().item());
                total = count == 0 ? loss : add(total, loss);
                ++count;
            }
            if (count == 0) continue;
            Var mean_loss = scale(total, 1.0 / static_cast<double>(count));
            if (!std::isfinite(mean_loss.value().item())) {
                double pnorm = 0.0;
                for (const auto& [name, p] : model.params) pnorm = std::hypot(pnorm, tensor_norm(p.value));
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch) + " (parameter norm " + format_double(pnorm) + ", lr " +
                                     format_double(lr) + ")");
            }
            tape.backward(mean_loss);
            double gnorm = 0.0;
            for (const auto& [name, p] : model.params) gnorm = std::hypot(gnorm, tensor_norm(p.grad));
            if (!std::isfinite(gnorm)) {
                throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch));
            }
            adam_step(model.params, lr, cfg);
        }
        const double epoch_loss = mean_of(sample_losses);
        result.loss_curve.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return result;
}

Trajectories reference_rollouts(const DatasetSplit& data, std::size_t steps) {
    Trajectories truth;
    truth.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        truth.push_back(reference_trajectory(data.spec, data.split, i, steps));
    }
    return truth;
}

EvalReport evaluate(const Predictor& predict, const DatasetSplit& data, const Trajectories& truth, std::size_t steps) {
    if (steps < 1) throw UsageError("evaluate: steps must be >= 1");
    if (steps > 1 && truth.size() != data.size()) throw UsageError("evaluate: rollout needs one trajectory per sample");
    const auto t0 = std::chrono::steady_clock::now();
    ConservationLaw law;
    law.kind = data.law;
    law.channels.resize(data.spec.channels());
    std::iota(law.channels.begin(), law.channels.end(), std::size_t{0});

    EvalReport report;
    std::vector<std::vector<double>> rel(steps), cabs(steps), crel(steps);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double c0 = data.cons_targets[i];
        GridField state = data.inputs[i];
        for (std::size_t s = 1; s <= steps; ++s) {
            state = predict(state, c0);
            const GridField& gt = s == 1 ? data.targets[i] : truth[i][s];
            if (gt.shape() != state.shape()) throw ShapeError("evaluate: prediction and truth shapes differ");
            if (all_zero(gt)) {
                if (s == 1) ++report.skipped_samples;
            } else {
                rel[s - 1].push_back(relative_l2(state, gt));
            }
            const double err = std::abs(quantity(law, state) - c0);
            cabs[s - 1].push_back(err);
            if (std::abs(c0) > 1e-8) crel[s - 1].push_back(err / std::abs(c0));
        }
    }
    report.rel_l2_mean = mean_of(rel[0]);
    report.rel_l2_std = std_of(rel[0]);
    report.cons_err_abs = mean_of(cabs[0]);
    report.cons_err_rel = mean_of(crel[0]);
    for (std::size_t s = 0; s < steps; ++s) {
        report.rollout_rel_l2.push_back(mean_of(rel[s]));
        report.rollout_cons_abs.push_back(mean_of(cabs[s]));
        report.rollout_cons_rel.push_back(mean_of(crel[s]));
    }
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<SweepRow> lambda_sweep(const std::function<Surrogate()>& make, const DatasetSplit& train_data,
                                   const DatasetSplit& test_data, TrainConfig cfg, const std::vector<double>& lambdas) {
    cfg.method = Method::Penalty;
    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        if (!(lambda >= 0.0)) throw UsageError("lambda values must be >= 0");
        cfg.lambda = lambda;
        Surrogate s = make();
        s.method = Method::Penalty;
        train(s, train_data, cfg);
        EvalReport r = evaluate([&](const GridField& x, double c) { return s.predict(x, c); }, test_data, {}, 1);
        rows.push_back({lambda, r.rel_l2_mean, r.cons_err_abs});
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "lambda,rel_l2,cons_err\n";
    for (const SweepRow& r : rows) {
        out << format_double(r.lambda) << ',' << format_double(r.rel_l2) << ',' << format_double(r.cons_err) << '\n';
    }
}

std::vector<double> default_lambdas(LawKind law) {
    if (law == LawKind::Linear) return {0.0, 1e-4, 1e-3, 1e-2};
    return {0.0, 1e-5, 1e-4, 1e-3};
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace conserve
