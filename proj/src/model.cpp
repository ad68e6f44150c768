#include "model.hpp"

#include <json.hpp>

#include "blobio.hpp"

namespace segcross::model {

using ag::Tensor;
using json = nlohmann::json;

std::vector<Tensor> Model::parameters() {
  std::vector<Tensor> params = encoder_weights.parameters();
  for (auto& p : csfm_weights.parameters()) params.push_back(p);
  return params;
}

void Model::set_requires_grad(bool flag) {
  encoder_weights.set_requires_grad(flag);
  csfm_weights.set_requires_grad(flag);
}

void Model::quantize_to_f32() {
  for (auto& p : parameters())
    for (double& v : p.data()) v = static_cast<double>(static_cast<float>(v));
}

Model init_model(const ModelConfig& cfg, const textprep::Vocabulary& vocab) {
  textprep::validate(cfg.preprocess);
  Model m;
  m.cfg = cfg;
  m.cfg.encoder.vocab_size = vocab.size();
  if (m.cfg.encoder.max_positions < cfg.preprocess.max_segment_tokens)
    fail(ErrorCode::Config, "encoder max_positions must cover segment length M");
  m.vocab = vocab;
  m.encoder_weights = encoder::init_weights(m.cfg.encoder);
  m.csfm_weights =
      csfm::init_weights(m.cfg.encoder.d_model, m.cfg.encoder.seed ^ 0x5eedc0dedULL);
  return m;
}

DocumentPrediction predict_document(const textprep::TokenizedDocument& doc, Model& m) {
  DocumentPrediction out;
  auto full = textprep::pack_segments_unbounded(doc, m.cfg.preprocess);
  if (full.segments.empty()) return out;
  for (auto& window : textprep::window_batches(full, m.cfg.preprocess.max_segments)) {
    ag::Tape tape;
    auto hidden = encoder::encode(tape, window, m.encoder_weights, m.cfg.encoder);
    auto prediction = csfm::forward_document(tape, window, hidden, m.csfm_weights,
                                             m.cfg.csfm_enabled, m.cfg.csfm_activation);
    out.labels.insert(out.labels.end(), prediction.labels.begin(), prediction.labels.end());
    out.probs.insert(out.probs.end(), prediction.probs.begin(), prediction.probs.end());
    const auto& ld = prediction.logits.data();
    out.logits.insert(out.logits.end(), ld.begin(), ld.end());
  }
  out.scored_sentences = out.labels.size();
  return out;
}

namespace {

std::string separator_to_string(const textprep::SplitSpec& spec) {
  switch (spec.mode) {
    case textprep::SeparatorMode::Newline: return "newline";
    case textprep::SeparatorMode::Period: return "period";
    case textprep::SeparatorMode::Custom: return "custom:" + spec.custom_pattern;
  }
  return "newline";
}

}  // namespace

void save_checkpoint(Model& m, const std::string& path) {
  json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = "f32";
  manifest["preprocess"] = {
      {"L", m.cfg.preprocess.max_sentence_tokens},
      {"M", m.cfg.preprocess.max_segment_tokens},
      {"K", m.cfg.preprocess.max_segments},
      {"separator", separator_to_string(m.cfg.preprocess.split)},
  };
  manifest["encoder"] = {
      {"vocab_size", m.cfg.encoder.vocab_size},
      {"d_model", m.cfg.encoder.d_model},
      {"n_heads", m.cfg.encoder.n_heads},
      {"n_layers", m.cfg.encoder.n_layers},
      {"d_ff", m.cfg.encoder.d_ff},
      {"max_positions", m.cfg.encoder.max_positions},
      {"seed", m.cfg.encoder.seed},
  };
  manifest["csfm"] = {
      {"enabled", m.cfg.csfm_enabled},
      {"activation", csfm::activation_name(m.cfg.csfm_activation)},
  };
  manifest["vocab"] = m.vocab.id_to_token;

  json params = json::array();
  std::string blob;
  auto emit = [&](const std::string& name, Tensor& t) {
    params.push_back({{"name", name}, {"shape", t.shape()}});
    blobio::append_f32(blob, t.data());
  };
  m.encoder_weights.visit(emit);
  m.csfm_weights.visit(emit);
  manifest["params"] = std::move(params);

  blobio::write_container(path, std::move(manifest), blob);
}

Model load_checkpoint(const std::string& path) {
  auto container = blobio::read_container(path);
  const json& manifest = container.manifest;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion)
      fail(ErrorCode::Format, path + ": unsupported checkpoint version " +
                                  std::to_string(version));

    ModelConfig cfg;
    const auto& prep = manifest.at("preprocess");
    cfg.preprocess.max_sentence_tokens = prep.at("L").get<size_t>();
    cfg.preprocess.max_segment_tokens = prep.at("M").get<size_t>();
    cfg.preprocess.max_segments = prep.at("K").get<size_t>();
    cfg.preprocess.split =
        textprep::parse_separator_mode(prep.at("separator").get<std::string>());
    const auto& enc = manifest.at("encoder");
    cfg.encoder.vocab_size = enc.at("vocab_size").get<size_t>();
    cfg.encoder.d_model = enc.at("d_model").get<size_t>();
    cfg.encoder.n_heads = enc.at("n_heads").get<size_t>();
    cfg.encoder.n_layers = enc.at("n_layers").get<size_t>();
    cfg.encoder.d_ff = enc.at("d_ff").get<size_t>();
    cfg.encoder.max_positions = enc.at("max_positions").get<size_t>();
    cfg.encoder.seed = enc.at("seed").get<uint64_t>();
    cfg.csfm_enabled = manifest.at("csfm").at("enabled").get<bool>();
    cfg.csfm_activation =
        csfm::parse_activation(manifest.at("csfm").at("activation").get<std::string>());

    textprep::Vocabulary vocab;
    vocab.id_to_token = manifest.at("vocab").get<std::vector<std::string>>();
    const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                               "[SENT]"};
    if (vocab.id_to_token.size() < specials.size())
      fail(ErrorCode::Format, path + ": vocabulary too small");
    for (size_t i = 0; i < specials.size(); ++i)
      if (vocab.id_to_token[i] != specials[i])
        fail(ErrorCode::Format, path + ": special tokens out of order");
    for (size_t i = specials.size(); i < vocab.id_to_token.size(); ++i)
      vocab.token_to_id.emplace(vocab.id_to_token[i], i);
    if (vocab.size() != cfg.encoder.vocab_size)
      fail(ErrorCode::Format, path + ": vocabulary size does not match encoder");

    Model m = init_model(cfg, vocab);
    size_t offset = 0;
    size_t index = 0;
    const json& params = manifest.at("params");
    auto fill = [&](const std::string& name, Tensor& t) {
      if (index >= params.size())
        fail(ErrorCode::Format, path + ": manifest lists too few parameters");
      const json& entry = params.at(index++);
      if (entry.at("name").get<std::string>() != name ||
          entry.at("shape").get<std::vector<size_t>>() != t.shape())
        fail(ErrorCode::Format, path + ": parameter '" + name +
                                    "' does not match manifest");
      t.data() = blobio::read_f32(container.blob, offset, t.numel());
      offset += t.numel() * 4;
    };
    m.encoder_weights.visit(fill);
    m.csfm_weights.visit(fill);
    if (index != params.size())
      fail(ErrorCode::Format, path + ": manifest lists extra parameters");
    if (offset != container.blob.size())
      fail(ErrorCode::Format, path + ": blob size does not match parameters");
    m.set_requires_grad(false);  // checkpoints load inference-ready
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, path + ": bad manifest: " + e.what());
  }
}

}  // namespace segcross::model
