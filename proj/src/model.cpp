#include "traffic/model.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

namespace traffic {

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ValidationError("model config: " + what);
    };
    require(nodes >= 1, "node count must be at least 1");
    require(in_features >= 1, "in_features must be at least 1");
    require(window >= 1, "window must be at least 1");
    require(horizon >= 1, "horizon must be at least 1");
    require(out_features >= 1, "out_features must be at least 1");
    require(external_dim >= 1, "external_dim must be at least 1");
    require(model_dim >= 1, "model_dim must be at least 1");
    require(external_embed_dim >= 1, "external_embed_dim must be at least 1");
    if (use_gnn) {
        require(gcn_layers >= 1, "gcn_layers must be at least 1 when the graph branch is on");
        require(spatial_dim >= 1, "spatial_dim must be at least 1");
    }
    if (use_temporal) {
        require(encoder_blocks >= 1, "encoder_blocks must be at least 1 when the temporal branch is on");
        require(heads >= 1, "heads must be at least 1");
        require(model_dim % heads == 0, "model_dim must be divisible by heads");
        require(model_dim % 2 == 0, "model_dim must be even (positional encoding pairs channels)");
        require(ff_dim >= 1, "ff_dim must be at least 1");
    }
}

namespace {

// Shared traversal: every learnable tensor, stable names, fixed order.
// Initialization, optimizer state, checkpoints, and tape lifting all key
// off this order.
template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
    for (std::size_t l = 0; l < p.gcn.size(); ++l) {
        const std::string pre = "gcn." + std::to_string(l) + ".";
        fn(pre + "weight", p.gcn[l].weight);
        fn(pre + "bias", p.gcn[l].bias);
    }
    fn("in_proj", p.in_proj);
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        const std::string pre = "temporal." + std::to_string(b) + ".";
        auto& blk = p.blocks[b];
        for (std::size_t h = 0; h < blk.attn.heads(); ++h) {
            const std::string hs = std::to_string(h);
            fn(pre + "attn.wq." + hs, blk.attn.wq[h]);
            fn(pre + "attn.wk." + hs, blk.attn.wk[h]);
            fn(pre + "attn.wv." + hs, blk.attn.wv[h]);
        }
        fn(pre + "attn.wo", blk.attn.wo);
        fn(pre + "ffn.w1", blk.ffn_w1);
        fn(pre + "ffn.b1", blk.ffn_b1);
        fn(pre + "ffn.w2", blk.ffn_w2);
        fn(pre + "ffn.b2", blk.ffn_b2);
        fn(pre + "ln1.gain", blk.ln1_gain);
        fn(pre + "ln1.bias", blk.ln1_bias);
        fn(pre + "ln2.gain", blk.ln2_gain);
        fn(pre + "ln2.bias", blk.ln2_bias);
    }
    if (p.cfg.use_external) {
        fn("external.weight", p.ext_w);
        fn("external.bias", p.ext_b);
    }
    fn("head.weight", p.head_w);
    fn("head.bias", p.head_b);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;

    std::mt19937_64 rng(seed);
    auto uniform_init = [&rng](Shape shape, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = dist(rng);
        return t;
    };

    if (cfg.use_gnn) {
        for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
            const std::size_t fan_in = l == 0 ? cfg.in_features : cfg.spatial_dim;
            GraphConvLayer layer;
            layer.weight = uniform_init({fan_in, cfg.spatial_dim}, fan_in);
            layer.bias = uniform_init({cfg.spatial_dim}, fan_in);
            layer.activation = cfg.gcn_activation;
            p.gcn.push_back(std::move(layer));
        }
    }
    p.in_proj = uniform_init({cfg.proj_in(), cfg.model_dim}, cfg.proj_in());

    if (cfg.use_temporal) {
        const std::size_t d_k = cfg.model_dim / cfg.heads;
        for (std::size_t b = 0; b < cfg.encoder_blocks; ++b) {
            EncoderBlock blk;
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                blk.attn.wq.push_back(uniform_init({cfg.model_dim, d_k}, cfg.model_dim));
                blk.attn.wk.push_back(uniform_init({cfg.model_dim, d_k}, cfg.model_dim));
                blk.attn.wv.push_back(uniform_init({cfg.model_dim, d_k}, cfg.model_dim));
            }
            blk.attn.wo = uniform_init({cfg.heads * d_k, cfg.model_dim}, cfg.heads * d_k);
            blk.ffn_w1 = uniform_init({cfg.model_dim, cfg.ff_dim}, cfg.model_dim);
            blk.ffn_b1 = uniform_init({cfg.ff_dim}, cfg.model_dim);
            blk.ffn_w2 = uniform_init({cfg.ff_dim, cfg.model_dim}, cfg.ff_dim);
            blk.ffn_b2 = uniform_init({cfg.model_dim}, cfg.ff_dim);
            blk.ln1_gain = Tensor::full({cfg.model_dim}, 1.0);
            blk.ln1_bias = Tensor({cfg.model_dim});
            blk.ln2_gain = Tensor::full({cfg.model_dim}, 1.0);
            blk.ln2_bias = Tensor({cfg.model_dim});
            p.blocks.push_back(std::move(blk));
        }
    }

    if (cfg.use_external) {
        p.ext_w = uniform_init({cfg.external_dim, cfg.external_embed_dim}, cfg.external_dim);
        p.ext_b = uniform_init({cfg.external_embed_dim}, cfg.external_dim);
    }

    p.head_w = uniform_init({cfg.fused_dim(), cfg.head_out()}, cfg.fused_dim());
    p.head_b = uniform_init({cfg.head_out()}, cfg.fused_dim());
    return p;
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_params(*this, fn);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    visit_params(*this, fn);
}

std::vector<std::string> ModelParams::param_names() const {
    std::vector<std::string> names;
    for_each([&](const std::string& name, const Tensor&) { names.push_back(name); });
    return names;
}

std::size_t ModelParams::param_count() const {
    std::size_t count = 0;
    for_each([&](const std::string&, const Tensor& t) { count += t.size(); });
    return count;
}

LiftedModel lift_model(ad::Tape& tape, const ModelParams& params, bool trainable) {
    LiftedModel m;
    m.cfg = &params.cfg;

    std::unordered_map<std::string, ad::Value> by_name;
    params.for_each([&](const std::string& name, const Tensor& t) {
        ad::Value v = trainable ? tape.leaf(t) : tape.constant(t);
        m.named.emplace_back(name, v);
        by_name.emplace(name, v);
    });
    auto get = [&](const std::string& name) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw InternalError("lift_model: missing parameter " + name);
        return it->second;
    };

    for (std::size_t l = 0; l < params.gcn.size(); ++l) {
        const std::string pre = "gcn." + std::to_string(l) + ".";
        m.gcn_w.push_back(get(pre + "weight"));
        m.gcn_b.push_back(get(pre + "bias"));
    }
    m.in_proj = get("in_proj");
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        const std::string pre = "temporal." + std::to_string(b) + ".";
        LiftedBlock blk;
        for (std::size_t h = 0; h < params.blocks[b].attn.heads(); ++h) {
            const std::string hs = std::to_string(h);
            blk.attn.wq.push_back(get(pre + "attn.wq." + hs));
            blk.attn.wk.push_back(get(pre + "attn.wk." + hs));
            blk.attn.wv.push_back(get(pre + "attn.wv." + hs));
        }
        blk.attn.wo = get(pre + "attn.wo");
        blk.ffn_w1 = get(pre + "ffn.w1");
        blk.ffn_b1 = get(pre + "ffn.b1");
        blk.ffn_w2 = get(pre + "ffn.w2");
        blk.ffn_b2 = get(pre + "ffn.b2");
        blk.ln1_gain = get(pre + "ln1.gain");
        blk.ln1_bias = get(pre + "ln1.bias");
        blk.ln2_gain = get(pre + "ln2.gain");
        blk.ln2_bias = get(pre + "ln2.bias");
        m.blocks.push_back(std::move(blk));
    }
    if (params.cfg.use_external) {
        m.ext_w = get("external.weight");
        m.ext_b = get("external.bias");
    }
    m.head_w = get("head.weight");
    m.head_b = get("head.bias");
    return m;
}

ad::Value forward_values(ad::Tape& tape, const LiftedModel& model, const RoadGraph& graph,
                         const ObservationWindow& window, AttentionSink sink) {
    const ModelConfig& cfg = *model.cfg;
    const std::size_t steps = cfg.window, n = cfg.nodes;
    if (window.x.shape() != Shape{steps, n, cfg.in_features}) {
        throw ShapeError("forward: observations " + shape_str(window.x.shape()) + ", expected " +
                         shape_str({steps, n, cfg.in_features}));
    }
    if (window.z.shape() != Shape{steps, cfg.external_dim}) {
        throw ShapeError("forward: external features " + shape_str(window.z.shape()) + ", expected " +
                         shape_str({steps, cfg.external_dim}));
    }
    if (!window.x.all_finite() || !window.z.all_finite()) {
        throw ValidationError("forward: non-finite value in observation window");
    }
    if (graph.n() != n) {
        throw ShapeError("forward: graph has " + std::to_string(graph.n()) + " nodes, model expects " +
                         std::to_string(n));
    }

    // (a) spatial features per time step, projected to the shared width
    ad::Value prop = tape.constant(graph.propagation());
    std::vector<ad::Value> projected;
    projected.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        ad::Value h = tape.constant(slice_axis0(window.x, t, t + 1).reshaped({n, cfg.in_features}));
        if (cfg.use_gnn) {
            for (std::size_t l = 0; l < model.gcn_w.size(); ++l) {
                h = graph_conv(tape, h, prop, model.gcn_w[l], model.gcn_b[l], cfg.gcn_activation);
            }
        }
        projected.push_back(tape.matmul(h, model.in_proj));
    }

    // (b, c) temporal summary per node; spatial summary = last-step features
    ad::Value h_last = projected.back();
    ad::Value h_tr = h_last;
    if (cfg.use_temporal) {
        ad::Value stacked = tape.concat(projected, 0);  // (T*N) x D, row t*N+i
        std::vector<ad::Value> rows;
        rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::size_t> idx(steps);
            for (std::size_t t = 0; t < steps; ++t) idx[t] = t * n + i;
            rows.push_back(temporal_encode(tape, tape.gather_rows(stacked, idx), model.blocks, sink));
        }
        h_tr = tape.concat(rows, 0);
    }

    // (d) external embedding at the last step, shared across nodes
    ad::Value ext;
    if (cfg.use_external) {
        Tensor z_last = slice_axis0(window.z, steps - 1, steps).reshaped({1, cfg.external_dim});
        ad::Value e = tape.relu(tape.add_rows(tape.matmul(tape.constant(z_last), model.ext_w), model.ext_b));
        ext = tape.add_rows(tape.constant(Tensor({n, cfg.external_embed_dim})),
                            tape.reshape(e, {cfg.external_embed_dim}));
    } else {
        ext = tape.constant(Tensor({n, cfg.external_embed_dim}));
    }

    // (e) fuse and project to all horizons at once
    ad::Value fused = tape.concat({h_last, h_tr, ext}, 1);
    return tape.add_rows(tape.matmul(fused, model.head_w), model.head_b);
}

Tensor target_to_matrix(const Tensor& y) {
    if (y.rank() != 3) throw ShapeError("target_to_matrix: expected rank-3, got " + shape_str(y.shape()));
    const std::size_t h = y.shape()[0], n = y.shape()[1], f = y.shape()[2];
    Tensor m({n, h * f});
    for (std::size_t t = 0; t < h; ++t)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < f; ++c) m(i, t * f + c) = y(t, i, c);
    return m;
}

Tensor matrix_to_forecast(const Tensor& m, std::size_t horizon, std::size_t out_features) {
    if (m.rank() != 2 || m.cols() != horizon * out_features) {
        throw ShapeError("matrix_to_forecast: " + shape_str(m.shape()) + " does not hold " +
                         std::to_string(horizon) + "x" + std::to_string(out_features) + " per row");
    }
    const std::size_t n = m.rows();
    Tensor y({horizon, n, out_features});
    for (std::size_t t = 0; t < horizon; ++t)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < out_features; ++c) y(t, i, c) = m(i, t * out_features + c);
    return y;
}

Forecast forward(const ModelParams& params, const RoadGraph& graph, const ObservationWindow& window,
                 AttentionSink sink) {
    ad::Tape tape;
    LiftedModel lifted = lift_model(tape, params, /*trainable=*/false);
    Tensor out = forward_values(tape, lifted, graph, window, sink).val();
    if (!out.all_finite()) throw InternalError("forward produced non-finite values");
    Forecast f;
    f.values = matrix_to_forecast(out, params.cfg.horizon, params.cfg.out_features);
    f.horizon = params.cfg.horizon;
    return f;
}

double predict_loss(const ModelParams& params, const RoadGraph& graph, const ObservationWindow& window,
                    const Tensor& target) {
    Forecast f = forward(params, graph, window);
    if (!target.same_shape(f.values)) {
        throw ShapeError("predict_loss: target " + shape_str(target.shape()) + " vs forecast " +
                         shape_str(f.values.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = f.values.at(i) - target.at(i);
        acc += d * d;
    }
    return acc / static_cast<double>(target.size());
}

ad::Value weighted_mse(ad::Tape& tape, ad::Value pred, const Tensor& target_mat, const Tensor& weight_mat) {
    if (!pred.val().same_shape(target_mat) || !pred.val().same_shape(weight_mat)) {
        throw ShapeError("weighted_mse: shapes disagree, " + shape_str(pred.val().shape()) + " / " +
                         shape_str(target_mat.shape()) + " / " + shape_str(weight_mat.shape()));
    }
    const double total = sum(weight_mat);
    if (total <= 0.0) throw ValidationError("weighted_mse: every target entry has zero weight");
    ad::Value diff = tape.sub(pred, tape.constant(target_mat));
    ad::Value weighted = tape.mul(tape.mul(diff, diff), tape.constant(weight_mat));
    return tape.scale(tape.sum(weighted), 1.0 / total);
}

Tensor embed_external(const Tensor& z_t, const Tensor& ext_w, const Tensor& ext_b) {
    if (z_t.rank() != 1 || z_t.size() != ext_w.rows()) {
        throw ShapeError("embed_external: input " + shape_str(z_t.shape()) + " vs weights " +
                         shape_str(ext_w.shape()));
    }
    Tensor row = z_t.reshaped({1, z_t.size()});
    return relu(add_rows(matmul(row, ext_w), ext_b)).reshaped({ext_w.cols()});
}

Tensor fuse(const Tensor& h_gnn, const Tensor& h_tr, const Tensor& e_t) {
    if (h_gnn.rank() != 1 || h_tr.rank() != 1 || e_t.rank() != 1) {
        throw ShapeError("fuse: expected rank-1 inputs");
    }
    if (!h_gnn.same_shape(h_tr)) {
        throw ShapeError("fuse: branch widths differ, " + shape_str(h_gnn.shape()) + " vs " +
                         shape_str(h_tr.shape()));
    }
    return concat({h_gnn, h_tr, e_t}, 0);
}

}  // namespace traffic
