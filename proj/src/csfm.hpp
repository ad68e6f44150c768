#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"
#include "textprep.hpp"

namespace segcross::csfm {

enum class Activation { None, Relu };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation act);

// Fusion-module parameters plus the boundary classifier head.
struct CsfmWeights {
  ag::Tensor w1, b1;  // [2d x d], [d]
  ag::Tensor w2, b2;  // [d x d], [d]
  ag::Tensor wc, bc;  // [d x 2], [2]

  void visit(const std::function<void(const std::string&, ag::Tensor&)>& fn);
  std::vector<ag::Tensor> parameters();
  void set_requires_grad(bool flag);
};

CsfmWeights init_weights(size_t d_model, uint64_t seed);

// Hidden vectors gathered at the special-token positions of one batch.
struct SeparatorStates {
  std::vector<ag::Tensor> cls;        // per segment, [1 x d]
  std::vector<ag::Tensor> sep;        // per segment, [1 x d]
  std::vector<ag::Tensor> sent;       // per segment, [n_sent_j x d]
};

SeparatorStates gather_separator_states(ag::Tape& tape,
                                        const textprep::SegmentBatch& batch,
                                        const std::vector<ag::Tensor>& hidden);

// Per-segment representation: elementwise difference of the CLS and SEP states.
ag::Tensor segment_repr(ag::Tape& tape, const ag::Tensor& h_cls, const ag::Tensor& h_sep);

// Document-level context: elementwise maximum over the segment representations.
ag::Tensor global_repr(ag::Tape& tape, const std::vector<ag::Tensor>& seg_reprs);

// Fuses rows of separator states with a shared global vector:
// concat -> Linear1 -> activation -> Linear2. `h_sent` may hold several rows;
// the global vector is tiled across them.
ag::Tensor fuse(ag::Tape& tape, const ag::Tensor& h_global, const ag::Tensor& h_sent,
                CsfmWeights& w, Activation act);

struct Classification {
  std::vector<double> logits;  // [2]
  std::vector<double> probs;   // [2]
  int label = 0;               // argmax; tie -> 0
};

// Single-vector classifier head (logits = Wc^T h + bc, softmax, argmax).
Classification classify(const std::vector<double>& h_fea, const CsfmWeights& w);

struct BoundaryPrediction {
  ag::Tensor logits;                       // [n_scored x 2], on the tape
  std::vector<std::array<double, 2>> probs;
  std::vector<uint8_t> labels;             // argmax per row; tie -> 0
  std::vector<size_t> sentence_indices;    // global index per prediction row
};

// Full pipeline over an encoded batch: gathers separator states, builds the
// global representation (or a zero vector when the fusion module is disabled),
// fuses, and classifies every SENT position in sentence order.
BoundaryPrediction forward_document(ag::Tape& tape, const textprep::SegmentBatch& batch,
                                    const std::vector<ag::Tensor>& hidden,
                                    CsfmWeights& w, bool csfm_enabled, Activation act);

}  // namespace segcross::csfm
