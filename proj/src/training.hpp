#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"

namespace segcross::training {

struct TrainConfig {
  double lr = 1e-3;
  size_t epochs = 10;
  uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double positive_weight = 1.0;  // optional reweighting of boundary labels
  size_t min_freq = 1;           // vocabulary frequency cutoff
  bool csfm_enabled = true;
  csfm::Activation csfm_activation = csfm::Activation::Relu;
  bool eval_exclude_final_boundary = true;
  textprep::PreprocessConfig preprocess;
  encoder::EncoderConfig encoder;
};

void validate(const TrainConfig& cfg);

// Parses a JSON config object; absent keys keep their defaults. Layout:
// {"lr":..,"epochs":..,"seed":..,"csfm_enabled":..,"preprocess":{...},"encoder":{...}}
TrainConfig parse_train_config(const std::string& json_text);

struct EpochStats {
  size_t epoch = 0;
  double mean_loss = 0.0;
};

struct TrainResult {
  model::Model model;
  std::vector<EpochStats> loss_log;
  size_t skipped_documents = 0;  // documents with zero scored sentences
};

// Per-document stepping: pack, forward, mean cross-entropy over the document's
// SENT labels, backward, one optimizer step. Document order is reshuffled each
// epoch with a seeded generator; the whole run is deterministic per seed.
TrainResult train(std::span<const textprep::RawDocument> data, const TrainConfig& cfg);

std::string loss_log_csv(std::span<const EpochStats> log);

struct Metrics {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Metrics finalize_metrics(long long tp, long long fp, long long fn);

struct Counts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

// Positive-class counting for one document's gold/predicted label sequences.
// With exclude_final set, the last scored sentence is left out.
void count_boundaries(std::span<const uint8_t> gold, std::span<const uint8_t> pred,
                      bool exclude_final, Counts& counts);

// Boundary metrics over all scored sentences of a dataset. When
// exclude_final_boundary is set, the last scored sentence of each document is
// left out of the counts.
Metrics evaluate(std::span<const textprep::RawDocument> data, model::Model& m,
                 bool exclude_final_boundary);

struct SynthConfig {
  size_t n_docs = 200;
  size_t n_topics = 2;
  size_t min_sents_per_topic = 3;
  size_t max_sents_per_topic = 6;
  size_t vocab_per_topic = 40;
  size_t min_tokens_per_sentence = 3;
  size_t max_tokens_per_sentence = 8;
  uint64_t seed = 42;
};

// Topic-block documents over disjoint token pools; the last sentence of each
// block carries label 1. Deterministic per seed.
std::vector<textprep::RawDocument> synth_corpus(const SynthConfig& cfg);

enum class SweepMode { Evaluate, Retrain };

struct SweepRow {
  size_t max_segment_tokens = 0;
  std::optional<Metrics> metrics;  // empty when the value was skipped
  std::string note;
};

// Re-evaluates (or retrains) across candidate segment lengths M and reports
// the boundary metrics per value. Invalid values are skipped with a note; no
// trend assertion is made, the output is observational.
std::vector<SweepRow> sweep_input_length(std::span<const textprep::RawDocument> eval_data,
                                         model::Model& m,
                                         std::span<const size_t> m_values,
                                         bool exclude_final_boundary);
std::vector<SweepRow> sweep_input_length_retrain(
    std::span<const textprep::RawDocument> train_data,
    std::span<const textprep::RawDocument> eval_data, const TrainConfig& template_cfg,
    std::span<const size_t> m_values);

std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace segcross::training
