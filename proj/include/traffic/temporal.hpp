#pragma once

// Transformer encoder over per-node temporal sequences: scaled dot-product
// attention, multi-head wrapper, sinusoidal positional encoding, and the
// post-norm encoder block LN(X + MHA(X)) -> LN(. + FFN(.)).

#include <utility>
#include <vector>

#include "traffic/autodiff.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

inline constexpr double kLayerNormEps = 1e-5;

struct AttentionParams {
    std::vector<Tensor> wq, wk, wv;  // per head, D x d_k
    Tensor wo;                       // (heads * d_k) x D
    std::size_t heads() const { return wq.size(); }
};

struct EncoderBlock {
    AttentionParams attn;
    Tensor ffn_w1, ffn_b1;  // D x D_ff, D_ff
    Tensor ffn_w2, ffn_b2;  // D_ff x D, D
    Tensor ln1_gain, ln1_bias;
    Tensor ln2_gain, ln2_bias;
};

// Tape-level parameter handles; populated by the model's lifting pass.
struct LiftedAttention {
    std::vector<ad::Value> wq, wk, wv;
    ad::Value wo;
};

struct LiftedBlock {
    LiftedAttention attn;
    ad::Value ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    ad::Value ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

// Optional collector of attention weight matrices (one T x T tensor per head
// per block, in evaluation order); used to audit row-stochasticity.
using AttentionSink = std::vector<Tensor>*;

// weights = softmax_rows(Q K^T / sqrt(d_k)); context = weights V.
std::pair<ad::Value, ad::Value> scaled_dot_attention(ad::Tape& tape, ad::Value q, ad::Value k, ad::Value v);

ad::Value multi_head_attention(ad::Tape& tape, ad::Value xseq, const LiftedAttention& params,
                               AttentionSink sink = nullptr);

// PE[t, 2i] = sin(t / 10000^(2i/D)), PE[t, 2i+1] = cos(t / 10000^(2i/D)).
Tensor positional_encoding(std::size_t len, std::size_t dim);

ad::Value encoder_block(ad::Tape& tape, ad::Value xseq, const LiftedBlock& block,
                        AttentionSink sink = nullptr);

// Adds positional encoding, applies the blocks, returns the last time step's
// representation as a 1 x D matrix.
ad::Value temporal_encode(ad::Tape& tape, ad::Value node_seq, const std::vector<LiftedBlock>& blocks,
                          AttentionSink sink = nullptr);

// Gradient-free convenience wrappers for direct evaluation.
std::pair<Tensor, Tensor> scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);
Tensor multi_head_attention(const Tensor& xseq, const AttentionParams& params, AttentionSink sink = nullptr);
Tensor encoder_block(const Tensor& xseq, const EncoderBlock& block);
Tensor temporal_encode(const Tensor& node_seq, const std::vector<EncoderBlock>& blocks);

LiftedAttention lift_constant(ad::Tape& tape, const AttentionParams& p);
LiftedBlock lift_constant(ad::Tape& tape, const EncoderBlock& b);

}  // namespace traffic
