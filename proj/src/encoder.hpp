#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"
#include "textprep.hpp"

namespace segcross::encoder {

struct EncoderConfig {
  size_t vocab_size = 0;
  size_t d_model = 64;
  size_t n_heads = 4;
  size_t n_layers = 2;
  size_t d_ff = 128;
  size_t max_positions = 512;
  uint64_t seed = 1;
};

void validate(const EncoderConfig& cfg);

struct AttentionHead {
  ag::Tensor wq, bq, wk, bk, wv, bv;  // [d x d_head], [d_head]
};

struct EncoderLayer {
  ag::Tensor ln1_gain, ln1_bias;
  std::vector<AttentionHead> heads;
  ag::Tensor wo, bo;  // [d x d], [d]
  ag::Tensor ln2_gain, ln2_bias;
  ag::Tensor ff_w1, ff_b1;  // [d x d_ff], [d_ff]
  ag::Tensor ff_w2, ff_b2;  // [d_ff x d], [d]
};

struct EncoderWeights {
  ag::Tensor token_embedding;     // [vocab_size x d]
  ag::Tensor position_embedding;  // [max_positions x d]
  std::vector<EncoderLayer> layers;
  ag::Tensor final_gain, final_bias;

  // Visits every parameter in a fixed canonical order; checkpoints, the
  // optimizer, and gradient checks all rely on this order being stable.
  void visit(const std::function<void(const std::string&, ag::Tensor&)>& fn);
  std::vector<ag::Tensor> parameters();
  void set_requires_grad(bool flag);
};

// Scaled uniform initialization, bound 1/sqrt(fan_in); biases and layer-norm
// offsets zero, layer-norm gains one. Deterministic for a fixed seed.
EncoderWeights init_weights(const EncoderConfig& cfg);

// Pre-norm multi-head self-attention stack over one packed batch. Returns one
// [T_max x d_model] hidden-state tensor per segment (logical [k x T_max x d]).
// Attention logits at PAD key positions receive a -1e30 additive mask before
// the softmax, so hidden states at non-PAD positions do not depend on padding.
std::vector<ag::Tensor> encode(ag::Tape& tape, const textprep::SegmentBatch& batch,
                               EncoderWeights& weights, const EncoderConfig& cfg);

}  // namespace segcross::encoder
