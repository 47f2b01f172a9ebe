#pragma once

// Optimization and evaluation: Adam, the mini-batch training loop with
// validation-based parameter selection and early stopping, gradient
// checking, forecast metrics, and naive reference predictors.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "traffic/data.hpp"
#include "traffic/graph.hpp"
#include "traffic/model.hpp"

namespace traffic {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t patience = 10;  // epochs without val improvement before stopping; 0 disables
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<std::int64_t> seconds;  // per-epoch wall time, floored to whole seconds
    std::size_t best_epoch = 0;         // first argmin of val_loss
};

struct AdamState {
    std::vector<Tensor> m, v;  // census order
    std::size_t step = 0;
};

AdamState make_adam_state(const ModelParams& params);

// One bias-corrected update over the census-ordered gradient list. lr == 0
// leaves every parameter bitwise unchanged.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg);

// Mini-batch descent on the weighted squared error of observed target
// entries; windows whose targets are entirely imputed are dropped. Returns
// the parameters of the best validation epoch.
std::pair<ModelParams, TrainHistory> train_model(const ModelConfig& mcfg, const RoadGraph& graph,
                                                 const std::vector<Window>& train_windows,
                                                 const std::vector<Window>& val_windows,
                                                 const TrainConfig& tcfg);

// Mean over windows of the per-window weighted squared error, forward only.
double dataset_loss(const ModelParams& params, const RoadGraph& graph,
                    const std::vector<Window>& windows);

struct MetricReport {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    std::optional<double> r2;  // empty when the truth is constant
};

MetricReport metrics(const std::vector<double>& pred, const std::vector<double>& truth);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;  // one per parameter tensor, census order
    double tol = 0.0;
    bool pass = false;
};

GradCheckReport compare_gradients(const std::vector<std::string>& names,
                                  const std::vector<Tensor>& analytic,
                                  const std::vector<Tensor>& numeric, double tol);

// Backward pass vs central finite differences of the forecast MSE on one
// window, with freshly initialized parameters.
GradCheckReport grad_check_model(const ModelConfig& mcfg, const RoadGraph& graph,
                                 const ObservationWindow& window, const Tensor& target,
                                 std::uint64_t seed, double eps, double tol);

// Evaluators pool the observed (weight 1) target entries of every window,
// de-normalized back to physical units, into a single report.
MetricReport evaluate_model(const ModelParams& params, const RoadGraph& graph,
                            const std::vector<Window>& windows, const NormStats& stats);

// Last observed step repeated across the horizon.
MetricReport evaluate_persistence(const std::vector<Window>& windows, const NormStats& stats);

// Per (node, minute-of-day) mean over [0, train_hi); unseen minutes fall
// back to the node's overall training mean. `ds` must be the dataset the
// windows were cut from.
MetricReport evaluate_historical_average(const Dataset& ds, std::size_t train_hi,
                                         const std::vector<Window>& windows,
                                         const NormStats& stats);

void write_history_csv(const TrainHistory& history, const std::string& path);
void write_metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows,
                       const std::string& path);

}  // namespace traffic
