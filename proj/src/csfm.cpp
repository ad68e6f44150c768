#include "csfm.hpp"

#include <array>
#include <cmath>

namespace segcross::csfm {

using ag::Tensor;

Activation parse_activation(const std::string& name) {
  if (name == "none") return Activation::None;
  if (name == "relu") return Activation::Relu;
  fail(ErrorCode::Config, "unknown activation '" + name + "' (expected none or relu)");
}

std::string activation_name(Activation act) {
  return act == Activation::Relu ? "relu" : "none";
}

void CsfmWeights::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("csfm.w1", w1);
  fn("csfm.b1", b1);
  fn("csfm.w2", w2);
  fn("csfm.b2", b2);
  fn("csfm.wc", wc);
  fn("csfm.bc", bc);
}

std::vector<Tensor> CsfmWeights::parameters() {
  std::vector<Tensor> params;
  visit([&](const std::string&, Tensor& t) { params.push_back(t); });
  return params;
}

void CsfmWeights::set_requires_grad(bool flag) {
  visit([&](const std::string&, Tensor& t) { t.set_requires_grad(flag); });
}

CsfmWeights init_weights(size_t d_model, uint64_t seed) {
  Rng rng(seed);
  auto uniform = [&](size_t rows, size_t cols, size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::randu(rng, {rows, cols}, -bound, bound, true);
  };
  CsfmWeights w;
  w.w1 = uniform(2 * d_model, d_model, 2 * d_model);
  w.b1 = Tensor::zeros({d_model}, true);
  w.w2 = uniform(d_model, d_model, d_model);
  w.b2 = Tensor::zeros({d_model}, true);
  w.wc = uniform(d_model, 2, d_model);
  w.bc = Tensor::zeros({2}, true);
  return w;
}

SeparatorStates gather_separator_states(ag::Tape& tape,
                                        const textprep::SegmentBatch& batch,
                                        const std::vector<Tensor>& hidden) {
  if (hidden.size() != batch.segments.size())
    fail(ErrorCode::InvalidArgument, "encoder output does not match batch");
  SeparatorStates states;
  for (size_t j = 0; j < batch.segments.size(); ++j) {
    const auto& seg = batch.segments[j];
    if (hidden[j].rows() < seg.length())
      fail(ErrorCode::InvalidArgument, "encoder output shorter than segment");
    states.cls.push_back(ag::gather_rows(tape, hidden[j], {0}));
    states.sep.push_back(ag::gather_rows(tape, hidden[j], {seg.length() - 1}));
    states.sent.push_back(ag::gather_rows(tape, hidden[j], seg.sent_positions));
  }
  return states;
}

Tensor segment_repr(ag::Tape& tape, const Tensor& h_cls, const Tensor& h_sep) {
  if (h_cls.shape() != h_sep.shape())
    fail(ErrorCode::InvalidArgument, "segment_repr: dimension mismatch");
  return ag::sub(tape, h_cls, h_sep);
}

Tensor global_repr(ag::Tape& tape, const std::vector<Tensor>& seg_reprs) {
  if (seg_reprs.empty())
    fail(ErrorCode::InvalidArgument, "global_repr: no segment representations");
  Tensor stacked = ag::concat_rows(tape, seg_reprs);
  return ag::max_over_rows(tape, stacked).values;
}

Tensor fuse(ag::Tape& tape, const Tensor& h_global, const Tensor& h_sent,
            CsfmWeights& w, Activation act) {
  const size_t d = h_global.cols();
  if (h_sent.cols() != d)
    fail(ErrorCode::InvalidArgument, "fuse: dimension mismatch");
  if (w.w1.shape() != std::vector<size_t>{2 * d, d})
    fail(ErrorCode::InvalidArgument, "fuse: weights do not match dimension");
  Tensor tiled = h_sent.rows() == 1
                     ? h_global
                     : ag::gather_rows(tape, h_global,
                                       std::vector<size_t>(h_sent.rows(), 0));
  Tensor concat = ag::concat_cols(tape, tiled, h_sent);
  Tensor hidden = ag::add_row_vector(tape, ag::matmul(tape, concat, w.w1), w.b1);
  if (act == Activation::Relu) hidden = ag::relu(tape, hidden);
  return ag::add_row_vector(tape, ag::matmul(tape, hidden, w.w2), w.b2);
}

Classification classify(const std::vector<double>& h_fea, const CsfmWeights& w) {
  const size_t d = w.wc.shape()[0];
  if (h_fea.size() != d)
    fail(ErrorCode::InvalidArgument, "classify: dimension mismatch");
  Classification result;
  result.logits.assign(2, 0.0);
  for (size_t c = 0; c < 2; ++c) {
    double v = w.bc.data()[c];
    for (size_t i = 0; i < d; ++i) v += h_fea[i] * w.wc.data()[i * 2 + c];
    result.logits[c] = v;
  }
  const double mx = std::max(result.logits[0], result.logits[1]);
  const double e0 = std::exp(result.logits[0] - mx);
  const double e1 = std::exp(result.logits[1] - mx);
  result.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  result.label = result.logits[1] > result.logits[0] ? 1 : 0;
  return result;
}

BoundaryPrediction forward_document(ag::Tape& tape, const textprep::SegmentBatch& batch,
                                    const std::vector<Tensor>& hidden, CsfmWeights& w,
                                    bool csfm_enabled, Activation act) {
  SeparatorStates states = gather_separator_states(tape, batch, hidden);
  const size_t d = w.w2.shape()[0];

  Tensor h_global;
  if (csfm_enabled) {
    std::vector<Tensor> seg_reprs;
    seg_reprs.reserve(states.cls.size());
    for (size_t j = 0; j < states.cls.size(); ++j)
      seg_reprs.push_back(segment_repr(tape, states.cls[j], states.sep[j]));
    h_global = global_repr(tape, seg_reprs);
  } else {
    h_global = Tensor::zeros({1, d});  // ablation: same shapes, zero context
  }

  std::vector<Tensor> logit_blocks;
  BoundaryPrediction prediction;
  for (size_t j = 0; j < batch.segments.size(); ++j) {
    const auto& seg = batch.segments[j];
    if (seg.sentence_indices.empty()) continue;
    Tensor fea = fuse(tape, h_global, states.sent[j], w, act);
    Tensor logits = ag::add_row_vector(tape, ag::matmul(tape, fea, w.wc), w.bc);
    logit_blocks.push_back(logits);
    prediction.sentence_indices.insert(prediction.sentence_indices.end(),
                                       seg.sentence_indices.begin(),
                                       seg.sentence_indices.end());
  }
  if (logit_blocks.empty()) {
    prediction.logits = Tensor::zeros({0, 2});
    return prediction;
  }
  prediction.logits = logit_blocks.size() == 1 ? logit_blocks.front()
                                               : ag::concat_rows(tape, logit_blocks);
  const size_t n = prediction.logits.rows();
  prediction.probs.reserve(n);
  prediction.labels.reserve(n);
  for (size_t r = 0; r < n; ++r) {
    const double l0 = prediction.logits.data()[r * 2];
    const double l1 = prediction.logits.data()[r * 2 + 1];
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx);
    const double e1 = std::exp(l1 - mx);
    prediction.probs.push_back({e0 / (e0 + e1), e1 / (e0 + e1)});
    prediction.labels.push_back(l1 > l0 ? 1 : 0);
  }
  return prediction;
}

}  // namespace segcross::csfm
