#include "chunker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "blobio.hpp"

namespace segcross::chunker {

using json = nlohmann::json;

void validate(const ChunkerConfig& cfg) {
  if (cfg.max_chunk_chars == 0)
    fail(ErrorCode::Config, "chunk threshold must be positive");
  if (cfg.max_depth < 1) fail(ErrorCode::Config, "max depth must be at least 1");
  if (cfg.min_sentences_per_chunk < 1)
    fail(ErrorCode::Config, "min sentences per chunk must be at least 1");
}

BoundaryFn model_segmenter(model::Model& m) {
  return [&m](const std::vector<std::string>& sentences) {
    textprep::RawDocument raw;
    raw.id = "chunk";
    raw.sentences = sentences;
    raw.labels.assign(sentences.size(), 0);
    auto doc = textprep::tokenize_document(raw, m.vocab,
                                           m.cfg.preprocess.max_sentence_tokens);
    auto prediction = model::predict_document(doc, m);
    return prediction.labels;
  };
}

std::vector<Chunk> split_recursive(std::string_view text, const BoundaryFn& segmenter,
                                   const ChunkerConfig& cfg) {
  validate(cfg);
  if (text.empty()) fail(ErrorCode::InvalidArgument, "cannot chunk empty text");

  auto spans = textprep::split_spans_for_chunking(text);
  if (spans.empty()) spans.push_back({0, text.size()});  // whitespace-only input

  struct Item {
    size_t first, last, depth;
  };
  std::vector<Item> work{{0, spans.size() - 1, 0}};
  std::vector<Chunk> out;

  while (!work.empty()) {
    const Item item = work.back();
    work.pop_back();
    const size_t byte_begin = spans[item.first].begin;
    const size_t byte_end = spans[item.last].end;
    const size_t len = byte_end - byte_begin;
    const size_t count = item.last - item.first + 1;

    const bool splittable = count >= 2 && count > cfg.min_sentences_per_chunk &&
                            item.depth < cfg.max_depth;
    if (len <= cfg.max_chunk_chars || !splittable) {
      Chunk chunk;
      chunk.id = static_cast<int>(out.size());
      chunk.text.assign(text.substr(byte_begin, len));
      chunk.first_sentence = item.first;
      chunk.last_sentence = item.last;
      chunk.char_len = len;
      chunk.depth = item.depth;
      chunk.oversize = len > cfg.max_chunk_chars;
      out.push_back(std::move(chunk));
      continue;
    }

    std::vector<std::string> sentences;
    sentences.reserve(count);
    for (size_t i = item.first; i <= item.last; ++i)
      sentences.emplace_back(
          text.substr(spans[i].begin, spans[i].end - spans[i].begin));
    auto labels = segmenter(sentences);
    if (labels.size() != count)
      fail(ErrorCode::Internal, "segmenter returned wrong label count");

    auto paragraphs = textprep::reconstruct_partition(count, labels);
    std::vector<std::pair<size_t, size_t>> pieces;
    if (paragraphs.size() < 2) {
      // No internal boundary: midpoint fallback keeps the recursion making
      // progress.
      const size_t left = (count + 1) / 2;
      pieces.emplace_back(item.first, item.first + left - 1);
      pieces.emplace_back(item.first + left, item.last);
    } else {
      for (const auto& p : paragraphs)
        pieces.emplace_back(item.first + p.first, item.first + p.last);
    }
    for (auto it = pieces.rbegin(); it != pieces.rend(); ++it)
      work.push_back({it->first, it->second, item.depth + 1});
  }
  return out;
}

namespace {

int env_int(const char* name, int fallback) {
  const char* value = std::getenv(name);
  if (!value || !*value) return fallback;
  return std::atoi(value);
}

std::string env_string(const char* name) {
  const char* value = std::getenv(name);
  return value ? value : "";
}

int resolve_timeout(int timeout_ms) {
  return timeout_ms >= 0 ? timeout_ms : env_int("SEGCROSS_HTTP_TIMEOUT_MS", 5000);
}

int resolve_retries(int retries) {
  return retries >= 0 ? retries : env_int("SEGCROSS_HTTP_RETRIES", 2);
}

struct ParsedUrl {
  std::string base;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos)
    fail(ErrorCode::Config, "endpoint URL must include a scheme: " + url);
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

json post_json(const std::string& url, const json& body, int timeout_ms, int retries) {
  const ParsedUrl parsed = parse_url(url);
  httplib::Client client(parsed.base);
  client.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
  client.set_write_timeout(std::chrono::milliseconds(timeout_ms));

  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    auto res = client.Post(parsed.path, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;  // retryable
    }
    if (res->status >= 500) {
      last_error = "endpoint returned status " + std::to_string(res->status);
      continue;  // retryable
    }
    if (res->status < 200 || res->status >= 300)
      fail(ErrorCode::Endpoint,
           url + ": endpoint returned status " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, url + ": malformed endpoint response: " + e.what());
    }
  }
  fail(ErrorCode::Endpoint, url + ": " + last_error);
}

uint64_t hash_gram(std::string_view gram, uint64_t seed) {
  uint64_t h = 1469598103934665603ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : gram) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void validate(const EmbedderSpec& spec) {
  if (spec.dim == 0) fail(ErrorCode::Config, "embedding dimension must be positive");
  if (spec.kind == EmbedderKind::HashedNgram && spec.dim < 8)
    fail(ErrorCode::Config, "hashed-ngram embedder needs dim >= 8");
}

Embedding embed(std::string_view text, const EmbedderSpec& spec) {
  validate(spec);
  Embedding result;
  result.values.assign(spec.dim, 0.0);
  if (text.empty()) return result;  // zero vector, flagged un-normalizable

  if (spec.kind == EmbedderKind::HashedNgram) {
    if (text.size() < 3) {
      result.values[hash_gram(text, spec.seed) % spec.dim] += 1.0;
    } else {
      for (size_t i = 0; i + 3 <= text.size(); ++i)
        result.values[hash_gram(text.substr(i, 3), spec.seed) % spec.dim] += 1.0;
    }
    double norm = 0.0;
    for (double v : result.values) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : result.values) v /= norm;
    result.normalizable = true;
    return result;
  }

  std::string url = spec.endpoint.empty() ? env_string("SEGCROSS_EMBED_URL") : spec.endpoint;
  if (url.empty())
    fail(ErrorCode::Config,
         "external embedder needs an endpoint URL (flag or SEGCROSS_EMBED_URL)");
  json response = post_json(url, {{"input", std::string(text)}},
                            resolve_timeout(spec.timeout_ms), resolve_retries(spec.retries));
  if (!response.contains("embedding") || !response["embedding"].is_array())
    fail(ErrorCode::Parse, url + ": response missing \"embedding\" array");
  auto values = response["embedding"].get<std::vector<double>>();
  if (values.size() != spec.dim)
    fail(ErrorCode::Parse, url + ": embedding dimension " +
                               std::to_string(values.size()) + " does not match " +
                               std::to_string(spec.dim));
  result.values = std::move(values);
  double norm = 0.0;
  for (double v : result.values) norm += v * v;
  result.normalizable = norm > 0.0;
  return result;
}

namespace {

// Rows are stored direction-only; cosine similarity is scale-invariant, and
// unit rows keep self-similarity exact across the f32 persistence round trip.
void normalize_rows(RetrievalIndex& index) {
  const size_t dim = index.spec.dim;
  index.norms.assign(index.chunks.size(), 0.0);
  for (size_t i = 0; i < index.chunks.size(); ++i) {
    double norm = 0.0;
    for (size_t c = 0; c < dim; ++c) {
      const double v = index.matrix[i * dim + c];
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm <= 0.0)
      fail(ErrorCode::InvalidArgument,
           "chunk " + std::to_string(index.chunks[i].id) + " has a zero embedding");
    for (size_t c = 0; c < dim; ++c) index.matrix[i * dim + c] /= norm;
    index.norms[i] = 1.0;
  }
}

}  // namespace

RetrievalIndex build_index(std::span<const Chunk> chunks, const EmbedderSpec& spec) {
  validate(spec);
  RetrievalIndex index;
  index.spec = spec;
  index.chunks.assign(chunks.begin(), chunks.end());
  index.matrix.resize(chunks.size() * spec.dim);
  for (size_t i = 0; i < index.chunks.size(); ++i) {
    Embedding e = embed(index.chunks[i].text, spec);
    if (!e.normalizable)
      fail(ErrorCode::InvalidArgument,
           "chunk " + std::to_string(index.chunks[i].id) + " cannot be embedded");
    std::copy(e.values.begin(), e.values.end(), index.matrix.begin() + i * spec.dim);
  }
  normalize_rows(index);
  return index;
}

void save_index(const RetrievalIndex& index, const std::string& path) {
  json manifest;
  manifest["version"] = 1;
  manifest["dtype"] = "f32";
  manifest["embedder"] = {
      {"kind", index.spec.kind == EmbedderKind::HashedNgram ? "hashed-ngram"
                                                            : "external-endpoint"},
      {"dim", index.spec.dim},
      {"seed", index.spec.seed},
      {"endpoint", index.spec.endpoint},
  };
  json chunks = json::array();
  for (const auto& chunk : index.chunks) {
    chunks.push_back({{"id", chunk.id},
                      {"first_sentence", chunk.first_sentence},
                      {"last_sentence", chunk.last_sentence},
                      {"char_len", chunk.char_len},
                      {"depth", chunk.depth},
                      {"oversize", chunk.oversize},
                      {"text", chunk.text}});
  }
  manifest["chunks"] = std::move(chunks);
  std::string blob;
  blobio::append_f32(blob, index.matrix);
  blobio::write_container(path, std::move(manifest), blob);
}

RetrievalIndex load_index(const std::string& path) {
  auto container = blobio::read_container(path);
  const json& manifest = container.manifest;
  RetrievalIndex index;
  try {
    if (manifest.at("version").get<int>() != 1)
      fail(ErrorCode::Format, path + ": unsupported index version");
    const auto& spec = manifest.at("embedder");
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "hashed-ngram") {
      index.spec.kind = EmbedderKind::HashedNgram;
    } else if (kind == "external-endpoint") {
      index.spec.kind = EmbedderKind::ExternalEndpoint;
    } else {
      fail(ErrorCode::Format, path + ": unknown embedder kind '" + kind + "'");
    }
    index.spec.dim = spec.at("dim").get<size_t>();
    index.spec.seed = spec.at("seed").get<uint64_t>();
    index.spec.endpoint = spec.at("endpoint").get<std::string>();
    for (const auto& c : manifest.at("chunks")) {
      Chunk chunk;
      chunk.id = c.at("id").get<int>();
      chunk.first_sentence = c.at("first_sentence").get<size_t>();
      chunk.last_sentence = c.at("last_sentence").get<size_t>();
      chunk.char_len = c.at("char_len").get<size_t>();
      chunk.depth = c.at("depth").get<size_t>();
      chunk.oversize = c.at("oversize").get<bool>();
      chunk.text = c.at("text").get<std::string>();
      index.chunks.push_back(std::move(chunk));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, path + ": bad manifest: " + e.what());
  }
  index.matrix = blobio::read_f32(container.blob, 0, index.chunks.size() * index.spec.dim);
  if (index.chunks.size() * index.spec.dim * 4 != container.blob.size())
    fail(ErrorCode::Format, path + ": blob size does not match chunk count");
  normalize_rows(index);
  return index;
}

std::vector<Hit> retrieve_topk(const RetrievalIndex& index,
                               std::span<const double> query_vec, size_t k) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "top-k must be at least 1");
  if (index.chunks.empty()) fail(ErrorCode::InvalidArgument, "index is empty");
  if (query_vec.size() != index.spec.dim)
    fail(ErrorCode::InvalidArgument, "query dimension does not match index");
  double query_norm = 0.0;
  for (double v : query_vec) query_norm += v * v;
  query_norm = std::sqrt(query_norm);
  if (query_norm <= 0.0)
    fail(ErrorCode::InvalidArgument, "query embedding has zero norm");

  std::vector<Hit> hits(index.chunks.size());
  const size_t dim = index.spec.dim;
  for (size_t i = 0; i < index.chunks.size(); ++i) {
    double dot = 0.0;
    for (size_t c = 0; c < dim; ++c) dot += query_vec[c] * index.matrix[i * dim + c];
    hits[i].chunk_id = index.chunks[i].id;
    hits[i].score = dot / (query_norm * index.norms[i]);
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_id < b.chunk_id;
  });
  hits.resize(std::min(k, hits.size()));
  return hits;
}

std::vector<Hit> query_index(const RetrievalIndex& index, const std::string& question,
                             size_t k) {
  Embedding e = embed(question, index.spec);
  if (!e.normalizable)
    fail(ErrorCode::InvalidArgument, "query cannot be embedded (empty or zero vector)");
  return retrieve_topk(index, e.values, k);
}

namespace {

void replace_all(std::string& s, const std::string& needle, const std::string& value) {
  size_t pos = 0;
  while ((pos = s.find(needle, pos)) != std::string::npos) {
    s.replace(pos, needle.size(), value);
    pos += value.size();
  }
}

}  // namespace

std::string assemble_context(std::span<const std::string> chunk_texts,
                             const std::string& template_str,
                             const std::string& question) {
  if (template_str.find("{context}") == std::string::npos ||
      template_str.find("{question}") == std::string::npos)
    fail(ErrorCode::InvalidArgument,
         "template must contain {context} and {question} placeholders");
  std::string context;
  for (size_t i = 0; i < chunk_texts.size(); ++i) {
    if (i > 0) context += "\n\n";
    context += chunk_texts[i];
  }
  std::string out = template_str;
  replace_all(out, "{context}", context);
  replace_all(out, "{question}", question);
  return out;
}

std::string complete(const std::string& prompt, const EndpointConfig& cfg) {
  std::string url = cfg.url.empty() ? env_string("SEGCROSS_COMPLETE_URL") : cfg.url;
  if (url.empty())
    fail(ErrorCode::Config,
         "completion needs an endpoint URL (flag or SEGCROSS_COMPLETE_URL)");
  json response = post_json(url, {{"prompt", prompt}}, resolve_timeout(cfg.timeout_ms),
                            resolve_retries(cfg.retries));
  if (!response.contains("text") || !response["text"].is_string())
    fail(ErrorCode::Parse, url + ": response missing \"text\" string");
  return response["text"].get<std::string>();
}

std::string chunks_to_jsonl(std::span<const Chunk> chunks) {
  std::ostringstream out;
  for (const auto& chunk : chunks) {
    json j = {{"id", chunk.id},
              {"first_sentence", chunk.first_sentence},
              {"last_sentence", chunk.last_sentence},
              {"char_len", chunk.char_len},
              {"depth", chunk.depth},
              {"oversize", chunk.oversize},
              {"text", chunk.text}};
    out << j.dump() << '\n';
  }
  return out.str();
}

void save_chunks_jsonl(std::span<const Chunk> chunks, const std::string& path) {
  write_file(path, chunks_to_jsonl(chunks));
}

std::vector<Chunk> load_chunks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open chunk file: " + path);
  std::vector<Chunk> chunks;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      Chunk chunk;
      chunk.id = j.at("id").get<int>();
      chunk.first_sentence = j.at("first_sentence").get<size_t>();
      chunk.last_sentence = j.at("last_sentence").get<size_t>();
      chunk.char_len = j.at("char_len").get<size_t>();
      chunk.depth = j.at("depth").get<size_t>();
      chunk.oversize = j.at("oversize").get<bool>();
      chunk.text = j.at("text").get<std::string>();
      chunks.push_back(std::move(chunk));
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return chunks;
}

}  // namespace segcross::chunker
