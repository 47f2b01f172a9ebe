#include "traffic/temporal.hpp"

#include <cmath>

namespace traffic {

std::pair<ad::Value, ad::Value> scaled_dot_attention(ad::Tape& tape, ad::Value q, ad::Value k, ad::Value v) {
    const Tensor& qv = q.val();
    const Tensor& kv = k.val();
    const Tensor& vv = v.val();
    if (qv.rank() != 2 || !qv.same_shape(kv) || !qv.same_shape(vv)) {
        throw ShapeError("attention: Q/K/V shapes disagree, " + shape_str(qv.shape()) + " / " +
                         shape_str(kv.shape()) + " / " + shape_str(vv.shape()));
    }
    const double d_k = static_cast<double>(qv.cols());
    if (d_k < 1.0) throw ShapeError("attention: key dimension must be at least 1");
    ad::Value scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(d_k));
    ad::Value weights = tape.softmax_rows(scores);
    return {tape.matmul(weights, v), weights};
}

ad::Value multi_head_attention(ad::Tape& tape, ad::Value xseq, const LiftedAttention& params,
                               AttentionSink sink) {
    const std::size_t heads = params.wq.size();
    if (heads == 0) throw ShapeError("attention: at least one head required");
    const Tensor& x = xseq.val();
    const std::size_t dim = x.cols();
    if (dim % heads != 0) {
        throw ShapeError("attention: model dimension " + std::to_string(dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    std::vector<ad::Value> contexts;
    contexts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto [ctx, weights] = scaled_dot_attention(tape, tape.matmul(xseq, params.wq[h]),
                                                   tape.matmul(xseq, params.wk[h]),
                                                   tape.matmul(xseq, params.wv[h]));
        if (sink) sink->push_back(weights.val());
        contexts.push_back(ctx);
    }
    return tape.matmul(tape.concat(contexts, 1), params.wo);
}

Tensor positional_encoding(std::size_t len, std::size_t dim) {
    if (dim % 2 != 0) throw ValidationError("positional encoding requires an even dimension, got " +
                                            std::to_string(dim));
    Tensor pe({len, dim});
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t i = 0; i < dim / 2; ++i) {
            const double rate = std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(dim));
            const double angle = static_cast<double>(t) / rate;
            pe(t, 2 * i) = std::sin(angle);
            pe(t, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

namespace {

ad::Value layer_norm_affine(ad::Tape& tape, ad::Value x, ad::Value gain, ad::Value bias) {
    return tape.add_rows(tape.mul_rows(tape.layer_norm_rows(x, kLayerNormEps), gain), bias);
}

}  // namespace

ad::Value encoder_block(ad::Tape& tape, ad::Value xseq, const LiftedBlock& block, AttentionSink sink) {
    ad::Value attended = multi_head_attention(tape, xseq, block.attn, sink);
    ad::Value h = layer_norm_affine(tape, tape.add(xseq, attended), block.ln1_gain, block.ln1_bias);
    ad::Value ff = tape.add_rows(
        tape.matmul(tape.relu(tape.add_rows(tape.matmul(h, block.ffn_w1), block.ffn_b1)), block.ffn_w2),
        block.ffn_b2);
    return layer_norm_affine(tape, tape.add(h, ff), block.ln2_gain, block.ln2_bias);
}

ad::Value temporal_encode(ad::Tape& tape, ad::Value node_seq, const std::vector<LiftedBlock>& blocks,
                          AttentionSink sink) {
    if (blocks.empty()) throw ShapeError("temporal_encode: at least one encoder block required");
    const std::size_t steps = node_seq.val().rows();
    const std::size_t dim = node_seq.val().cols();
    ad::Value h = tape.add(node_seq, tape.constant(positional_encoding(steps, dim)));
    for (const LiftedBlock& b : blocks) h = encoder_block(tape, h, b, sink);
    return tape.gather_rows(h, {steps - 1});
}

LiftedAttention lift_constant(ad::Tape& tape, const AttentionParams& p) {
    LiftedAttention out;
    for (const Tensor& t : p.wq) out.wq.push_back(tape.constant(t));
    for (const Tensor& t : p.wk) out.wk.push_back(tape.constant(t));
    for (const Tensor& t : p.wv) out.wv.push_back(tape.constant(t));
    out.wo = tape.constant(p.wo);
    return out;
}

LiftedBlock lift_constant(ad::Tape& tape, const EncoderBlock& b) {
    LiftedBlock out;
    out.attn = lift_constant(tape, b.attn);
    out.ffn_w1 = tape.constant(b.ffn_w1);
    out.ffn_b1 = tape.constant(b.ffn_b1);
    out.ffn_w2 = tape.constant(b.ffn_w2);
    out.ffn_b2 = tape.constant(b.ffn_b2);
    out.ln1_gain = tape.constant(b.ln1_gain);
    out.ln1_bias = tape.constant(b.ln1_bias);
    out.ln2_gain = tape.constant(b.ln2_gain);
    out.ln2_bias = tape.constant(b.ln2_bias);
    return out;
}

std::pair<Tensor, Tensor> scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    ad::Tape tape;
    auto [ctx, weights] =
        scaled_dot_attention(tape, tape.constant(q), tape.constant(k), tape.constant(v));
    return {ctx.val(), weights.val()};
}

Tensor multi_head_attention(const Tensor& xseq, const AttentionParams& params, AttentionSink sink) {
    ad::Tape tape;
    return multi_head_attention(tape, tape.constant(xseq), lift_constant(tape, params), sink).val();
}

Tensor encoder_block(const Tensor& xseq, const EncoderBlock& block) {
    ad::Tape tape;
    return encoder_block(tape, tape.constant(xseq), lift_constant(tape, block)).val();
}

Tensor temporal_encode(const Tensor& node_seq, const std::vector<EncoderBlock>& blocks) {
    ad::Tape tape;
    std::vector<LiftedBlock> lifted;
    lifted.reserve(blocks.size());
    for (const EncoderBlock& b : blocks) lifted.push_back(lift_constant(tape, b));
    return temporal_encode(tape, tape.constant(node_seq), lifted).val();
}

}  // namespace traffic
