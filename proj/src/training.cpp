#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace segcross::training {

using json = nlohmann::json;

void validate(const TrainConfig& cfg) {
  // lr = 0 is allowed as a dry-run mode (parameters stay fixed).
  if (cfg.lr < 0.0) fail(ErrorCode::Config, "learning rate must not be negative");
  if (cfg.epochs < 1) fail(ErrorCode::Config, "epochs must be at least 1");
  if (cfg.positive_weight <= 0.0)
    fail(ErrorCode::Config, "positive class weight must be positive");
  textprep::validate(cfg.preprocess);
}

TrainConfig parse_train_config(const std::string& json_text) {
  TrainConfig cfg;
  if (json_text.empty()) return cfg;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad train config: ") + e.what());
  }
  try {
    if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<size_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
    if (j.contains("adam_eps")) cfg.adam_eps = j["adam_eps"].get<double>();
    if (j.contains("positive_weight"))
      cfg.positive_weight = j["positive_weight"].get<double>();
    if (j.contains("min_freq")) cfg.min_freq = j["min_freq"].get<size_t>();
    if (j.contains("csfm_enabled")) cfg.csfm_enabled = j["csfm_enabled"].get<bool>();
    if (j.contains("csfm_activation"))
      cfg.csfm_activation = csfm::parse_activation(j["csfm_activation"].get<std::string>());
    if (j.contains("eval_exclude_final_boundary"))
      cfg.eval_exclude_final_boundary = j["eval_exclude_final_boundary"].get<bool>();
    if (j.contains("preprocess")) {
      const auto& p = j["preprocess"];
      if (p.contains("L")) cfg.preprocess.max_sentence_tokens = p["L"].get<size_t>();
      if (p.contains("M")) cfg.preprocess.max_segment_tokens = p["M"].get<size_t>();
      if (p.contains("K")) cfg.preprocess.max_segments = p["K"].get<size_t>();
      if (p.contains("separator"))
        cfg.preprocess.split =
            textprep::parse_separator_mode(p["separator"].get<std::string>());
    }
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      if (e.contains("d_model")) cfg.encoder.d_model = e["d_model"].get<size_t>();
      if (e.contains("n_heads")) cfg.encoder.n_heads = e["n_heads"].get<size_t>();
      if (e.contains("n_layers")) cfg.encoder.n_layers = e["n_layers"].get<size_t>();
      if (e.contains("d_ff")) cfg.encoder.d_ff = e["d_ff"].get<size_t>();
      if (e.contains("max_positions"))
        cfg.encoder.max_positions = e["max_positions"].get<size_t>();
      if (e.contains("seed")) cfg.encoder.seed = e["seed"].get<uint64_t>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad train config: ") + e.what());
  }
  return cfg;
}

TrainResult train(std::span<const textprep::RawDocument> data, const TrainConfig& cfg) {
  validate(cfg);
  if (data.empty()) fail(ErrorCode::InvalidArgument, "train: empty dataset");

  auto vocab = textprep::build_vocabulary(data, cfg.min_freq);

  model::ModelConfig mcfg;
  mcfg.preprocess = cfg.preprocess;
  mcfg.encoder = cfg.encoder;
  mcfg.csfm_enabled = cfg.csfm_enabled;
  mcfg.csfm_activation = cfg.csfm_activation;

  TrainResult result;
  result.model = model::init_model(mcfg, vocab);
  result.model.set_requires_grad(true);

  std::vector<textprep::TokenizedDocument> docs;
  docs.reserve(data.size());
  for (const auto& raw : data)
    docs.push_back(
        textprep::tokenize_document(raw, vocab, cfg.preprocess.max_sentence_tokens));

  auto params = result.model.parameters();
  ag::Adam optimizer({cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps});

  std::vector<size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(cfg.seed);

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    size_t steps = 0;
    for (size_t idx : order) {
      const auto& doc = docs[idx];
      auto batch = textprep::pack_segments(doc, cfg.preprocess);
      auto segment_labels = textprep::align_labels(batch, doc);
      std::vector<int> labels;
      for (const auto& seg : segment_labels)
        for (uint8_t label : seg) labels.push_back(label);
      if (labels.empty()) {
        if (epoch == 0) ++result.skipped_documents;
        continue;
      }

      ag::Tape tape;
      auto hidden =
          encoder::encode(tape, batch, result.model.encoder_weights, mcfg.encoder);
      auto prediction =
          csfm::forward_document(tape, batch, hidden, result.model.csfm_weights,
                                 cfg.csfm_enabled, cfg.csfm_activation);
      ag::Tensor loss = ag::cross_entropy_mean(tape, prediction.logits, labels,
                                               cfg.positive_weight);
      for (auto& p : params) p.zero_grad();
      tape.backward(loss);
      optimizer.step(params);
      loss_sum += loss.value();
      ++steps;
    }
    result.loss_log.push_back(
        {epoch + 1, steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0});
  }

  // Checkpoints store 32-bit floats; round now so the in-memory model and a
  // reloaded checkpoint produce identical outputs.
  result.model.quantize_to_f32();
  result.model.set_requires_grad(false);
  return result;
}

std::string loss_log_csv(std::span<const EpochStats> log) {
  std::ostringstream out;
  out << "epoch,mean_loss\n";
  out.precision(17);
  for (const auto& row : log) out << row.epoch << ',' << row.mean_loss << '\n';
  return out.str();
}

Metrics finalize_metrics(long long tp, long long fp, long long fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

void count_boundaries(std::span<const uint8_t> gold, std::span<const uint8_t> pred,
                      bool exclude_final, Counts& counts) {
  if (gold.size() != pred.size())
    fail(ErrorCode::InvalidArgument, "gold/predicted label lengths differ");
  if (gold.empty()) return;
  const size_t counted = exclude_final ? gold.size() - 1 : gold.size();
  for (size_t i = 0; i < counted; ++i) {
    const bool g = gold[i] == 1;
    const bool p = pred[i] == 1;
    if (p && g) ++counts.tp;
    else if (p && !g) ++counts.fp;
    else if (!p && g) ++counts.fn;
  }
}

Metrics evaluate(std::span<const textprep::RawDocument> data, model::Model& m,
                 bool exclude_final_boundary) {
  Counts counts;
  for (const auto& raw : data) {
    auto doc = textprep::tokenize_document(raw, m.vocab,
                                           m.cfg.preprocess.max_sentence_tokens);
    auto prediction = model::predict_document(doc, m);
    if (prediction.scored_sentences == 0) continue;
    count_boundaries(
        std::span<const uint8_t>(doc.labels.data(), prediction.scored_sentences),
        prediction.labels, exclude_final_boundary, counts);
  }
  return finalize_metrics(counts.tp, counts.fp, counts.fn);
}

std::vector<textprep::RawDocument> synth_corpus(const SynthConfig& cfg) {
  if (cfg.n_topics < 2) fail(ErrorCode::Config, "synth corpus needs at least 2 topics");
  if (cfg.min_sents_per_topic < 1 || cfg.max_sents_per_topic < cfg.min_sents_per_topic)
    fail(ErrorCode::Config, "bad sentences-per-topic range");
  if (cfg.min_tokens_per_sentence < 1 ||
      cfg.max_tokens_per_sentence < cfg.min_tokens_per_sentence)
    fail(ErrorCode::Config, "bad tokens-per-sentence range");
  if (cfg.vocab_per_topic < 1) fail(ErrorCode::Config, "empty topic vocabulary");

  Rng rng(cfg.seed);
  std::vector<textprep::RawDocument> docs;
  docs.reserve(cfg.n_docs);
  for (size_t d = 0; d < cfg.n_docs; ++d) {
    textprep::RawDocument doc;
    doc.id = "synth-" + std::to_string(d);
    std::vector<size_t> topic_order(cfg.n_topics);
    std::iota(topic_order.begin(), topic_order.end(), 0);
    rng.shuffle(topic_order);
    for (size_t topic : topic_order) {
      const size_t n_sents = static_cast<size_t>(
          rng.range(static_cast<int64_t>(cfg.min_sents_per_topic),
                    static_cast<int64_t>(cfg.max_sents_per_topic)));
      for (size_t s = 0; s < n_sents; ++s) {
        const size_t n_tokens = static_cast<size_t>(
            rng.range(static_cast<int64_t>(cfg.min_tokens_per_sentence),
                      static_cast<int64_t>(cfg.max_tokens_per_sentence)));
        std::string sentence;
        for (size_t t = 0; t < n_tokens; ++t) {
          if (t > 0) sentence.push_back(' ');
          sentence += "t" + std::to_string(topic) + "w" +
                      std::to_string(rng.below(cfg.vocab_per_topic));
        }
        doc.sentences.push_back(std::move(sentence));
        doc.labels.push_back(s + 1 == n_sents ? 1 : 0);
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<SweepRow> sweep_input_length(std::span<const textprep::RawDocument> eval_data,
                                         model::Model& m,
                                         std::span<const size_t> m_values,
                                         bool exclude_final_boundary) {
  std::vector<SweepRow> rows;
  const auto original = m.cfg.preprocess.max_segment_tokens;
  for (size_t value : m_values) {
    SweepRow row;
    row.max_segment_tokens = value;
    if (value < m.cfg.preprocess.max_sentence_tokens + 3) {
      row.note = "skipped: M must exceed L + 3";
    } else if (value > m.cfg.encoder.max_positions) {
      row.note = "skipped: M exceeds encoder max_positions";
    } else {
      m.cfg.preprocess.max_segment_tokens = value;
      row.metrics = evaluate(eval_data, m, exclude_final_boundary);
      m.cfg.preprocess.max_segment_tokens = original;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SweepRow> sweep_input_length_retrain(
    std::span<const textprep::RawDocument> train_data,
    std::span<const textprep::RawDocument> eval_data, const TrainConfig& template_cfg,
    std::span<const size_t> m_values) {
  std::vector<SweepRow> rows;
  for (size_t value : m_values) {
    SweepRow row;
    row.max_segment_tokens = value;
    if (value < template_cfg.preprocess.max_sentence_tokens + 3) {
      row.note = "skipped: M must exceed L + 3";
    } else if (value > template_cfg.encoder.max_positions) {
      row.note = "skipped: M exceeds encoder max_positions";
    } else {
      TrainConfig cfg = template_cfg;
      cfg.preprocess.max_segment_tokens = value;
      auto result = train(train_data, cfg);
      row.metrics =
          evaluate(eval_data, result.model, cfg.eval_exclude_final_boundary);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "M,precision,recall,f1,note\n";
  out.precision(17);
  for (const auto& row : rows) {
    out << row.max_segment_tokens << ',';
    if (row.metrics) {
      out << row.metrics->precision << ',' << row.metrics->recall << ','
          << row.metrics->f1 << ',';
    } else {
      out << ",,,";
    }
    out << row.note << '\n';
  }
  return out.str();
}

}  // namespace segcross::training
