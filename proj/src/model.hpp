#pragma once

#include <string>
#include <vector>

#include "csfm.hpp"
#include "encoder.hpp"
#include "textprep.hpp"

namespace segcross::model {

struct ModelConfig {
  textprep::PreprocessConfig preprocess;
  encoder::EncoderConfig encoder;
  bool csfm_enabled = true;
  csfm::Activation csfm_activation = csfm::Activation::Relu;
};

// A trained (or freshly initialized) segmenter: everything needed to score
// documents, and exactly what a checkpoint file stores.
struct Model {
  ModelConfig cfg;
  textprep::Vocabulary vocab;
  encoder::EncoderWeights encoder_weights;
  csfm::CsfmWeights csfm_weights;

  std::vector<ag::Tensor> parameters();
  void set_requires_grad(bool flag);
  // Rounds every parameter through 32-bit floats, matching what a checkpoint
  // stores; called at the end of training so in-memory and reloaded models
  // produce identical outputs.
  void quantize_to_f32();
};

Model init_model(const ModelConfig& cfg, const textprep::Vocabulary& vocab);

struct DocumentPrediction {
  std::vector<uint8_t> labels;                  // per scored sentence, in order
  std::vector<std::array<double, 2>> probs;
  std::vector<double> logits;                   // flattened [n x 2]
  size_t scored_sentences = 0;
};

// Scores every sentence of a document. Packing is unbounded and processed in
// consecutive windows of at most K segments, the global representation being
// computed per window, so no sentence goes unscored at inference time.
DocumentPrediction predict_document(const textprep::TokenizedDocument& doc, Model& m);

// Checkpoint file layout: one line of UTF-8 JSON manifest (version, configs,
// vocabulary, parameter names/shapes, blob CRC-32), then '\n', then an 8-byte
// little-endian blob length, then the blob of little-endian 32-bit floats in
// declared parameter order.
void save_checkpoint(Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

inline constexpr int kCheckpointVersion = 1;

}  // namespace segcross::model
