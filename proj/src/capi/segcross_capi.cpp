#include "segcross/segcross.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunker.hpp"
#include "model.hpp"
#include "textprep.hpp"
#include "training.hpp"
#include "util.hpp"

using namespace segcross;

struct sx_corpus {
  std::vector<textprep::RawDocument> docs;
};

struct sx_model {
  model::Model m;
};

struct sx_chunk_list {
  std::vector<chunker::Chunk> chunks;
};

struct sx_index {
  chunker::RetrievalIndex index;
};

struct sx_hits {
  std::vector<chunker::Hit> hits;
  std::vector<std::string> texts;
};

namespace {

thread_local std::string g_last_error;

sx_status map_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return SX_ERR_INVALID_ARGUMENT;
    case ErrorCode::Config: return SX_ERR_CONFIG;
    case ErrorCode::Io: return SX_ERR_IO;
    case ErrorCode::Parse: return SX_ERR_PARSE;
    case ErrorCode::Format: return SX_ERR_FORMAT;
    case ErrorCode::Endpoint: return SX_ERR_ENDPOINT;
    case ErrorCode::Internal: return SX_ERR_INTERNAL;
  }
  return SX_ERR_INTERNAL;
}

template <typename Fn>
sx_status guard(Fn&& fn) {
  try {
    fn();
    return SX_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SX_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SX_ERR_INTERNAL;
  }
}

sx_status invalid(const char* message) {
  g_last_error = message;
  return SX_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* sx_status_name(sx_status status) {
  switch (status) {
    case SX_OK: return "ok";
    case SX_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SX_ERR_CONFIG: return "configuration error";
    case SX_ERR_IO: return "io error";
    case SX_ERR_PARSE: return "parse error";
    case SX_ERR_FORMAT: return "format error";
    case SX_ERR_ENDPOINT: return "endpoint error";
    case SX_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* sx_last_error(void) { return g_last_error.c_str(); }

void sx_string_free(char* s) { std::free(s); }

sx_status sx_corpus_open_jsonl(const char* path, sx_corpus** out) {
  if (!path || !out) return invalid("path and out must be non-null");
  return guard([&] {
    auto corpus = std::make_unique<sx_corpus>();
    corpus->docs = textprep::load_jsonl(path);
    *out = corpus.release();
  });
}

sx_status sx_corpus_write_jsonl(const sx_corpus* corpus, const char* path) {
  if (!corpus || !path) return invalid("corpus and path must be non-null");
  return guard([&] { textprep::save_jsonl(corpus->docs, path); });
}

sx_status sx_corpus_synth(int n_topics, int n_docs, uint64_t seed, sx_corpus** out) {
  if (!out) return invalid("out must be non-null");
  if (n_topics < 0 || n_docs < 0) return invalid("counts must be non-negative");
  return guard([&] {
    training::SynthConfig cfg;
    cfg.n_topics = static_cast<size_t>(n_topics);
    cfg.n_docs = static_cast<size_t>(n_docs);
    cfg.seed = seed;
    auto corpus = std::make_unique<sx_corpus>();
    corpus->docs = training::synth_corpus(cfg);
    *out = corpus.release();
  });
}

sx_status sx_corpus_slice(const sx_corpus* corpus, size_t begin, size_t end,
                          sx_corpus** out) {
  if (!corpus || !out) return invalid("corpus and out must be non-null");
  if (begin > end || end > corpus->docs.size())
    return invalid("slice bounds out of range");
  return guard([&] {
    auto sliced = std::make_unique<sx_corpus>();
    sliced->docs.assign(corpus->docs.begin() + begin, corpus->docs.begin() + end);
    *out = sliced.release();
  });
}

size_t sx_corpus_doc_count(const sx_corpus* corpus) {
  return corpus ? corpus->docs.size() : 0;
}

void sx_corpus_free(sx_corpus* corpus) { delete corpus; }

sx_status sx_convert_wiki727k(const char* input_path, const char* output_path) {
  if (!input_path || !output_path) return invalid("paths must be non-null");
  return guard([&] { textprep::convert_wiki727k(input_path, output_path); });
}

sx_status sx_train(const sx_corpus* data, const char* config_json,
                   int64_t seed_override, sx_model** out_model, char** out_loss_csv) {
  if (!data || !out_model) return invalid("data and out_model must be non-null");
  return guard([&] {
    training::TrainConfig cfg =
        training::parse_train_config(config_json ? config_json : "");
    if (seed_override >= 0) {
      cfg.seed = static_cast<uint64_t>(seed_override);
      cfg.encoder.seed = static_cast<uint64_t>(seed_override) ^ 0x9e3779b97f4a7c15ULL;
    }
    auto result = training::train(data->docs, cfg);
    auto handle = std::make_unique<sx_model>();
    handle->m = std::move(result.model);
    if (out_loss_csv)
      *out_loss_csv = dup_string(training::loss_log_csv(result.loss_log));
    *out_model = handle.release();
  });
}

sx_status sx_model_open(const char* path, sx_model** out) {
  if (!path || !out) return invalid("path and out must be non-null");
  return guard([&] {
    auto handle = std::make_unique<sx_model>();
    handle->m = model::load_checkpoint(path);
    *out = handle.release();
  });
}

sx_status sx_model_save(const sx_model* model, const char* path) {
  if (!model || !path) return invalid("model and path must be non-null");
  return guard([&] {
    model::save_checkpoint(const_cast<sx_model*>(model)->m, path);
  });
}

void sx_model_free(sx_model* model) { delete model; }

sx_status sx_evaluate(const sx_model* model, const sx_corpus* data,
                      int include_final_boundary, sx_metrics* out) {
  if (!model || !data || !out) return invalid("model, data and out must be non-null");
  return guard([&] {
    auto metrics = training::evaluate(data->docs, const_cast<sx_model*>(model)->m,
                                      include_final_boundary == 0);
    out->tp = metrics.tp;
    out->fp = metrics.fp;
    out->fn = metrics.fn;
    out->precision = metrics.precision;
    out->recall = metrics.recall;
    out->f1 = metrics.f1;
  });
}

sx_status sx_segment_text(const sx_model* model, const char* doc_id, const char* text,
                          const char* separator_mode, char** out_json) {
  if (!model || !doc_id || !text || !out_json)
    return invalid("model, doc_id, text and out_json must be non-null");
  return guard([&] {
    auto& m = const_cast<sx_model*>(model)->m;
    textprep::SplitSpec split = separator_mode && *separator_mode
                                    ? textprep::parse_separator_mode(separator_mode)
                                    : m.cfg.preprocess.split;
    textprep::RawDocument raw;
    raw.id = doc_id;
    raw.sentences = textprep::split_sentences(text, split);
    raw.labels.assign(raw.sentences.size(), 0);
    auto doc = textprep::tokenize_document(raw, m.vocab,
                                           m.cfg.preprocess.max_sentence_tokens);
    auto prediction = model::predict_document(doc, m);
    auto spans = textprep::reconstruct_partition(
        prediction.labels.size(),
        std::span<const uint8_t>(prediction.labels.data(), prediction.labels.size()));
    nlohmann::json j;
    j["id"] = raw.id;
    j["labels"] = std::vector<int>(prediction.labels.begin(), prediction.labels.end());
    nlohmann::json span_array = nlohmann::json::array();
    for (const auto& s : spans) span_array.push_back({s.first, s.last});
    j["paragraph_spans"] = std::move(span_array);
    *out_json = dup_string(j.dump());
  });
}

sx_status sx_sweep_eval(const sx_model* model, const sx_corpus* data,
                        const size_t* m_values, size_t n_values,
                        int include_final_boundary, char** out_csv) {
  if (!model || !data || !out_csv)
    return invalid("model, data and out_csv must be non-null");
  if (n_values > 0 && !m_values) return invalid("m_values must be non-null");
  return guard([&] {
    auto rows = training::sweep_input_length(
        data->docs, const_cast<sx_model*>(model)->m,
        std::span<const size_t>(m_values, n_values), include_final_boundary == 0);
    *out_csv = dup_string(training::sweep_csv(rows));
  });
}

sx_status sx_chunk_text(const sx_model* model, const char* text, size_t max_chunk_chars,
                        size_t max_depth, sx_chunk_list** out) {
  if (!model || !text || !out) return invalid("model, text and out must be non-null");
  return guard([&] {
    chunker::ChunkerConfig cfg;
    cfg.max_chunk_chars = max_chunk_chars;
    cfg.max_depth = max_depth;
    auto& m = const_cast<sx_model*>(model)->m;
    auto list = std::make_unique<sx_chunk_list>();
    list->chunks = chunker::split_recursive(text, chunker::model_segmenter(m), cfg);
    *out = list.release();
  });
}

sx_status sx_chunk_list_open_jsonl(const char* path, sx_chunk_list** out) {
  if (!path || !out) return invalid("path and out must be non-null");
  return guard([&] {
    auto list = std::make_unique<sx_chunk_list>();
    list->chunks = chunker::load_chunks_jsonl(path);
    *out = list.release();
  });
}

sx_status sx_chunk_list_write_jsonl(const sx_chunk_list* chunks, const char* path) {
  if (!chunks || !path) return invalid("chunks and path must be non-null");
  return guard([&] { chunker::save_chunks_jsonl(chunks->chunks, path); });
}

sx_status sx_chunk_list_to_jsonl(const sx_chunk_list* chunks, char** out) {
  if (!chunks || !out) return invalid("chunks and out must be non-null");
  return guard([&] { *out = dup_string(chunker::chunks_to_jsonl(chunks->chunks)); });
}

size_t sx_chunk_list_count(const sx_chunk_list* chunks) {
  return chunks ? chunks->chunks.size() : 0;
}

const char* sx_chunk_list_text(const sx_chunk_list* chunks, size_t i) {
  if (!chunks || i >= chunks->chunks.size()) return nullptr;
  return chunks->chunks[i].text.c_str();
}

void sx_chunk_list_free(sx_chunk_list* chunks) { delete chunks; }

sx_status sx_index_build(const sx_chunk_list* chunks, const char* embedder_kind,
                         size_t dim, uint64_t seed, const char* endpoint_url,
                         sx_index** out) {
  if (!chunks || !out) return invalid("chunks and out must be non-null");
  return guard([&] {
    chunker::EmbedderSpec spec;
    const std::string kind = embedder_kind ? embedder_kind : "hashed";
    if (kind == "hashed" || kind == "hashed-ngram") {
      spec.kind = chunker::EmbedderKind::HashedNgram;
    } else if (kind == "external" || kind == "external-endpoint") {
      spec.kind = chunker::EmbedderKind::ExternalEndpoint;
    } else {
      fail(ErrorCode::Config, "unknown embedder kind '" + kind + "'");
    }
    spec.dim = dim;
    spec.seed = seed;
    if (endpoint_url) spec.endpoint = endpoint_url;
    auto handle = std::make_unique<sx_index>();
    handle->index = chunker::build_index(chunks->chunks, spec);
    *out = handle.release();
  });
}

sx_status sx_index_save(const sx_index* index, const char* path) {
  if (!index || !path) return invalid("index and path must be non-null");
  return guard([&] { chunker::save_index(index->index, path); });
}

sx_status sx_index_open(const char* path, sx_index** out) {
  if (!path || !out) return invalid("path and out must be non-null");
  return guard([&] {
    auto handle = std::make_unique<sx_index>();
    handle->index = chunker::load_index(path);
    *out = handle.release();
  });
}

void sx_index_free(sx_index* index) { delete index; }

sx_status sx_index_query(const sx_index* index, const char* question, size_t top_k,
                         sx_hits** out) {
  if (!index || !question || !out)
    return invalid("index, question and out must be non-null");
  return guard([&] {
    auto hits = std::make_unique<sx_hits>();
    hits->hits = chunker::query_index(index->index, question, top_k);
    for (const auto& hit : hits->hits) {
      const auto& chunks = index->index.chunks;
      auto it = std::find_if(chunks.begin(), chunks.end(),
                             [&](const auto& c) { return c.id == hit.chunk_id; });
      hits->texts.push_back(it != chunks.end() ? it->text : "");
    }
    *out = hits.release();
  });
}

size_t sx_hits_count(const sx_hits* hits) { return hits ? hits->hits.size() : 0; }

int sx_hits_chunk_id(const sx_hits* hits, size_t i) {
  return hits && i < hits->hits.size() ? hits->hits[i].chunk_id : -1;
}

double sx_hits_score(const sx_hits* hits, size_t i) {
  return hits && i < hits->hits.size() ? hits->hits[i].score : 0.0;
}

const char* sx_hits_text(const sx_hits* hits, size_t i) {
  return hits && i < hits->texts.size() ? hits->texts[i].c_str() : nullptr;
}

void sx_hits_free(sx_hits* hits) { delete hits; }

sx_status sx_assemble_context(const sx_hits* hits, const char* template_str,
                              const char* question, char** out_prompt) {
  if (!hits || !template_str || !question || !out_prompt)
    return invalid("hits, template, question and out must be non-null");
  return guard([&] {
    *out_prompt = dup_string(
        chunker::assemble_context(hits->texts, template_str, question));
  });
}

sx_status sx_complete(const char* prompt, const char* endpoint_url, int timeout_ms,
                      int retries, char** out_answer) {
  if (!prompt || !out_answer) return invalid("prompt and out_answer must be non-null");
  return guard([&] {
    chunker::EndpointConfig cfg;
    if (endpoint_url) cfg.url = endpoint_url;
    cfg.timeout_ms = timeout_ms;
    cfg.retries = retries;
    *out_answer = dup_string(chunker::complete(prompt, cfg));
  });
}

}  // extern "C"
