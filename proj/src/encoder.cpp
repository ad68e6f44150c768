#include "encoder.hpp"

#include <cmath>

namespace segcross::encoder {

using ag::Tensor;

namespace {

constexpr double kMaskValue = -1e30;
constexpr double kLayerNormEps = 1e-5;

Tensor uniform_init(Rng& rng, size_t rows, size_t cols, size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::randu(rng, {rows, cols}, -bound, bound, true);
}

}  // namespace

void validate(const EncoderConfig& cfg) {
  if (cfg.vocab_size == 0) fail(ErrorCode::Config, "encoder: vocab_size must be set");
  if (cfg.d_model == 0 || cfg.n_heads == 0 || cfg.n_layers == 0 || cfg.d_ff == 0)
    fail(ErrorCode::Config, "encoder: dimensions must be positive");
  if (cfg.d_model % cfg.n_heads != 0)
    fail(ErrorCode::Config, "encoder: d_model must be divisible by n_heads");
  if (cfg.max_positions == 0)
    fail(ErrorCode::Config, "encoder: max_positions must be positive");
}

void EncoderWeights::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("token_embedding", token_embedding);
  fn("position_embedding", position_embedding);
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto& layer = layers[l];
    fn(p + "ln1_gain", layer.ln1_gain);
    fn(p + "ln1_bias", layer.ln1_bias);
    for (size_t h = 0; h < layer.heads.size(); ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      auto& head = layer.heads[h];
      fn(hp + "wq", head.wq);
      fn(hp + "bq", head.bq);
      fn(hp + "wk", head.wk);
      fn(hp + "bk", head.bk);
      fn(hp + "wv", head.wv);
      fn(hp + "bv", head.bv);
    }
    fn(p + "wo", layer.wo);
    fn(p + "bo", layer.bo);
    fn(p + "ln2_gain", layer.ln2_gain);
    fn(p + "ln2_bias", layer.ln2_bias);
    fn(p + "ff_w1", layer.ff_w1);
    fn(p + "ff_b1", layer.ff_b1);
    fn(p + "ff_w2", layer.ff_w2);
    fn(p + "ff_b2", layer.ff_b2);
  }
  fn("final_gain", final_gain);
  fn("final_bias", final_bias);
}

std::vector<Tensor> EncoderWeights::parameters() {
  std::vector<Tensor> params;
  visit([&](const std::string&, Tensor& t) { params.push_back(t); });
  return params;
}

void EncoderWeights::set_requires_grad(bool flag) {
  visit([&](const std::string&, Tensor& t) { t.set_requires_grad(flag); });
}

EncoderWeights init_weights(const EncoderConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const size_t d = cfg.d_model;
  const size_t dh = d / cfg.n_heads;

  EncoderWeights w;
  w.token_embedding = uniform_init(rng, cfg.vocab_size, d, d);
  w.position_embedding = uniform_init(rng, cfg.max_positions, d, d);
  w.layers.resize(cfg.n_layers);
  for (auto& layer : w.layers) {
    layer.ln1_gain = Tensor::from({d}, std::vector<double>(d, 1.0), true);
    layer.ln1_bias = Tensor::zeros({d}, true);
    layer.heads.resize(cfg.n_heads);
    for (auto& head : layer.heads) {
      head.wq = uniform_init(rng, d, dh, d);
      head.bq = Tensor::zeros({dh}, true);
      head.wk = uniform_init(rng, d, dh, d);
      head.bk = Tensor::zeros({dh}, true);
      head.wv = uniform_init(rng, d, dh, d);
      head.bv = Tensor::zeros({dh}, true);
    }
    layer.wo = uniform_init(rng, d, d, d);
    layer.bo = Tensor::zeros({d}, true);
    layer.ln2_gain = Tensor::from({d}, std::vector<double>(d, 1.0), true);
    layer.ln2_bias = Tensor::zeros({d}, true);
    layer.ff_w1 = uniform_init(rng, d, cfg.d_ff, d);
    layer.ff_b1 = Tensor::zeros({cfg.d_ff}, true);
    layer.ff_w2 = uniform_init(rng, cfg.d_ff, d, cfg.d_ff);
    layer.ff_b2 = Tensor::zeros({d}, true);
  }
  w.final_gain = Tensor::from({d}, std::vector<double>(d, 1.0), true);
  w.final_bias = Tensor::zeros({d}, true);
  return w;
}

std::vector<Tensor> encode(ag::Tape& tape, const textprep::SegmentBatch& batch,
                           EncoderWeights& weights, const EncoderConfig& cfg) {
  validate(cfg);
  const size_t d = cfg.d_model;
  const size_t dh = d / cfg.n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const size_t t_max = batch.max_len;
  if (t_max > cfg.max_positions)
    fail(ErrorCode::InvalidArgument, "segment longer than encoder max_positions");

  std::vector<size_t> position_ids(t_max);
  for (size_t i = 0; i < t_max; ++i) position_ids[i] = i;

  std::vector<Tensor> hidden;
  hidden.reserve(batch.segments.size());
  for (size_t j = 0; j < batch.segments.size(); ++j) {
    const auto& ids = batch.padded_matrix[j];
    const auto& mask = batch.attention_mask[j];
    for (size_t id : ids)
      if (id >= cfg.vocab_size)
        fail(ErrorCode::InvalidArgument, "token id outside encoder vocabulary");

    // Additive key mask shared by every query row of this segment.
    Tensor key_mask = Tensor::zeros({t_max, t_max});
    for (size_t q = 0; q < t_max; ++q)
      for (size_t k = 0; k < t_max; ++k)
        if (!mask[k]) key_mask.data()[q * t_max + k] = kMaskValue;

    Tensor x = ag::add(tape, ag::gather_rows(tape, weights.token_embedding, ids),
                       ag::gather_rows(tape, weights.position_embedding, position_ids));

    for (auto& layer : weights.layers) {
      Tensor normed = ag::layer_norm_rows(tape, x, layer.ln1_gain, layer.ln1_bias,
                                          kLayerNormEps);
      Tensor heads_out;
      for (size_t h = 0; h < layer.heads.size(); ++h) {
        auto& head = layer.heads[h];
        Tensor q = ag::add_row_vector(tape, ag::matmul(tape, normed, head.wq), head.bq);
        Tensor k = ag::add_row_vector(tape, ag::matmul(tape, normed, head.wk), head.bk);
        Tensor v = ag::add_row_vector(tape, ag::matmul(tape, normed, head.wv), head.bv);
        Tensor scores = ag::scale(tape, ag::matmul(tape, q, ag::transpose(tape, k)),
                                  inv_sqrt_dh);
        scores = ag::add(tape, scores, key_mask);
        Tensor attn = ag::softmax_rows(tape, scores);
        Tensor head_out = ag::matmul(tape, attn, v);
        heads_out = h == 0 ? head_out : ag::concat_cols(tape, heads_out, head_out);
      }
      Tensor projected =
          ag::add_row_vector(tape, ag::matmul(tape, heads_out, layer.wo), layer.bo);
      x = ag::add(tape, x, projected);

      Tensor normed2 = ag::layer_norm_rows(tape, x, layer.ln2_gain, layer.ln2_bias,
                                           kLayerNormEps);
      Tensor ff = ag::relu(
          tape, ag::add_row_vector(tape, ag::matmul(tape, normed2, layer.ff_w1),
                                   layer.ff_b1));
      ff = ag::add_row_vector(tape, ag::matmul(tape, ff, layer.ff_w2), layer.ff_b2);
      x = ag::add(tape, x, ff);
    }
    x = ag::layer_norm_rows(tape, x, weights.final_gain, weights.final_bias,
                            kLayerNormEps);
    hidden.push_back(std::move(x));
  }
  return hidden;
}

}  // namespace segcross::encoder
