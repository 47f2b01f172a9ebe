#pragma once

// Full forecasting model: per-step graph convolution, per-node temporal
// encoder, external-feature embedding, three-way fusion, and a one-shot
// multi-horizon affine head.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "traffic/autodiff.hpp"
#include "traffic/graph.hpp"
#include "traffic/temporal.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

struct ModelConfig {
    std::size_t nodes = 0;            // N
    std::size_t in_features = 3;      // F: per-node observation width
    std::size_t window = 12;          // T: history length
    std::size_t horizon = 3;          // H: steps predicted jointly
    std::size_t out_features = 1;     // F_out: predicted channels per node
    std::size_t external_dim = 5;     // M: external feature width
    std::size_t spatial_dim = 16;     // D_s: graph-conv output width
    std::size_t model_dim = 32;       // D: shared branch width
    std::size_t external_embed_dim = 8;  // D_e
    std::size_t ff_dim = 64;          // encoder feed-forward width
    std::size_t gcn_layers = 2;
    std::size_t encoder_blocks = 2;
    std::size_t heads = 4;
    Activation gcn_activation = Activation::Relu;

    // Ablation switches. Disabling a branch removes its parameters; the
    // fused vector keeps its layout (the external slot becomes zeros).
    bool use_gnn = true;
    bool use_temporal = true;
    bool use_external = true;

    void validate() const;
    std::size_t fused_dim() const { return 2 * model_dim + external_embed_dim; }
    std::size_t head_out() const { return horizon * out_features; }
    // Width entering the shared projection: spatial features when the graph
    // branch is on, raw observations otherwise.
    std::size_t proj_in() const { return use_gnn ? spatial_dim : in_features; }
};

struct ModelParams {
    ModelConfig cfg;
    std::vector<GraphConvLayer> gcn;
    Tensor in_proj;  // proj_in x D, no bias
    std::vector<EncoderBlock> blocks;
    Tensor ext_w, ext_b;  // M x D_e, D_e
    Tensor head_w, head_b;

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

    // Visits every learnable tensor with a stable name, in a fixed order
    // shared with lift_model.
    void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    std::vector<std::string> param_names() const;
    std::size_t param_count() const;
};

struct ObservationWindow {
    Tensor x;  // T x N x F
    Tensor z;  // T x M
};

struct Forecast {
    Tensor values;  // H x N x F_out
    std::size_t horizon = 0;
    std::int64_t anchor_minutes = 0;  // timestamp of the last observation fed in
};

struct LiftedModel {
    const ModelConfig* cfg = nullptr;
    std::vector<ad::Value> gcn_w, gcn_b;
    ad::Value in_proj;
    std::vector<LiftedBlock> blocks;
    ad::Value ext_w, ext_b;
    ad::Value head_w, head_b;
    // Same tensors in for_each order; grads are read back through these.
    std::vector<std::pair<std::string, ad::Value>> named;
};

LiftedModel lift_model(ad::Tape& tape, const ModelParams& params, bool trainable);

// Raw model output, one row per node holding the H*F_out horizon values.
ad::Value forward_values(ad::Tape& tape, const LiftedModel& model, const RoadGraph& graph,
                         const ObservationWindow& window, AttentionSink sink = nullptr);

Forecast forward(const ModelParams& params, const RoadGraph& graph, const ObservationWindow& window,
                 AttentionSink sink = nullptr);

// Layout bridges between the H x N x F_out forecast tensor and the
// N x (H*F_out) matrix the head produces.
Tensor target_to_matrix(const Tensor& y);
Tensor matrix_to_forecast(const Tensor& m, std::size_t horizon, std::size_t out_features);

// Mean squared error over all forecast entries.
double predict_loss(const ModelParams& params, const RoadGraph& graph, const ObservationWindow& window,
                    const Tensor& target);

// sum(sq_err * weight) / sum(weight); weight marks entries that count
// (imputed targets carry weight 0). Throws if every weight is zero.
ad::Value weighted_mse(ad::Tape& tape, ad::Value pred, const Tensor& target_mat, const Tensor& weight_mat);

// e_t = relu(z * We + be)
Tensor embed_external(const Tensor& z_t, const Tensor& ext_w, const Tensor& ext_b);
// [h_gnn | h_tr | e_t]
Tensor fuse(const Tensor& h_gnn, const Tensor& h_tr, const Tensor& e_t);

}  // namespace traffic
