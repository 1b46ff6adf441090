#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "conserve/dataset.hpp"
#include "conserve/models.hpp"

namespace conserve {

enum class Method { Raw, Adaptive, Penalty, Projection, AblationAppendMlp };

const char* method_name(Method m);  // raw | adaptive | penalty | projection | ablation
Method parse_method(const std::string& name);

struct TrainConfig {
    Method method = Method::Raw;
    double lambda = 0.0;  // Penalty only
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    double lr0 = 1.5e-3;
    std::size_t decay_every = 100;
    double decay = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// lr0 * decay^floor(epoch / decay_every).
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

/// One bias-corrected Adam update from the gradients held in `params`.
void adam_step(ParamStore& params, double lr, const TrainConfig& cfg);

/// ||pred - gt|| / ||gt|| over every entry. Throws DomainError when gt == 0.
double relative_l2(const Tensor& pred, const Tensor& gt);

/// State channels followed by one coordinate channel per spatial axis.
GridField model_input(const GridField& state);

/// A model, its optional correction head and the method that wires them.
struct Surrogate {
    ModelConfig model;
    CorrectionHead head;
    Method method = Method::Raw;
    ParamStore params;

    /// Initialises every parameter the method needs.
    static Surrogate create(const ModelConfig& model, const CorrectionHead& head, Method method);

    /// Prediction for one state on the given tape. `target` is the conserved
    /// value the corrected and projected variants enforce.
    Var forward(Tape& tape, const GridField& state, double target);
    GridField predict(const GridField& state, double target);
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean per-sample loss of each epoch
    std::size_t skipped_samples = 0;  // zero targets, per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Mini-batch Adam on mean relative L2 (plus lambda * |q - q0| for Penalty).
/// Samples with an identically zero target are skipped. A non-finite loss
/// throws NumericalError naming the epoch and batch.
TrainResult train(Surrogate& model, const DatasetSplit& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

using Predictor = std::function<GridField(const GridField& state, double target)>;

struct EvalReport {
    double rel_l2_mean = 0.0;
    double rel_l2_std = 0.0;
    double cons_err_abs = 0.0;
    double cons_err_rel = 0.0;  // NaN when no sample has a nonzero conserved value
    std::vector<double> rollout_rel_l2;  // index s - 1 for step s
    std::vector<double> rollout_cons_abs;
    std::vector<double> rollout_cons_rel;
    std::size_t skipped_samples = 0;
    double wall_time = 0.0;
};

/// truth[i][s] is sample i at t = s * horizon, s = 0..steps.
using Trajectories = std::vector<std::vector<GridField>>;

/// Regenerates reference trajectories for a generated split.
Trajectories reference_rollouts(const DatasetSplit& data, std::size_t steps);

/// One-step metrics against the stored targets plus an autoregressive
/// rollout of `steps` steps against `truth`, conserved value held at the
/// initial state's.
EvalReport evaluate(const Predictor& predict, const DatasetSplit& data, const Trajectories& truth, std::size_t steps);

struct SweepRow {
    double lambda = 0.0;
    double rel_l2 = 0.0;
    double cons_err = 0.0;  // mean absolute conservation error
};

/// Trains one Penalty model per lambda from `make` (same seed each time) and
/// evaluates the one-step metrics on `test`.
std::vector<SweepRow> lambda_sweep(const std::function<Surrogate()>& make, const DatasetSplit& train_data,
                                   const DatasetSplit& test_data, TrainConfig cfg, const std::vector<double>& lambdas);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

std::vector<double> default_lambdas(LawKind law);

/// Shortest round-trip decimal form; NaN prints as "nan".
std::string format_double(double v);

}  // namespace conserve
