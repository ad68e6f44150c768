#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"

namespace segcross::chunker {

struct Chunk {
  int id = 0;
  std::string text;
  size_t first_sentence = 0;  // global sentence indices, inclusive
  size_t last_sentence = 0;
  size_t char_len = 0;
  size_t depth = 0;     // recursion depth at creation
  bool oversize = false;  // exceeded the threshold but could not be split further
};

struct ChunkerConfig {
  size_t max_chunk_chars = 2000;
  size_t max_depth = 8;
  size_t min_sentences_per_chunk = 1;
};

void validate(const ChunkerConfig& cfg);

// Boundary labels over a list of sentences; the real segmenter wraps a model,
// tests substitute scripted stubs.
using BoundaryFn =
    std::function<std::vector<uint8_t>(const std::vector<std::string>& sentences)>;

BoundaryFn model_segmenter(model::Model& m);

// Worklist splitter. A piece within the threshold is emitted; an oversize
// piece is segmented by the model (midpoint sentence split when the model
// returns no internal boundary); pieces whose depth reaches max_depth, or
// which cannot be split below min_sentences_per_chunk, are emitted as-is and
// flagged oversize when they still exceed the threshold. Chunk texts are raw
// byte spans of the input, so their concatenation reproduces it exactly.
std::vector<Chunk> split_recursive(std::string_view text, const BoundaryFn& segmenter,
                                   const ChunkerConfig& cfg);

enum class EmbedderKind { HashedNgram, ExternalEndpoint };

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::HashedNgram;
  size_t dim = 256;
  uint64_t seed = 42;    // hashed-ngram only
  std::string endpoint;  // external only; SEGCROSS_EMBED_URL when empty
  int timeout_ms = -1;   // <0: SEGCROSS_HTTP_TIMEOUT_MS or 5000
  int retries = -1;      // <0: SEGCROSS_HTTP_RETRIES or 2
};

void validate(const EmbedderSpec& spec);

struct Embedding {
  std::vector<double> values;
  bool normalizable = false;  // false for empty text (zero vector)
};

// Hashed character 3-gram counts bucketed into `dim` slots and L2-normalized,
// or a call to the external embedding endpoint. Deterministic for the hashed
// kind.
Embedding embed(std::string_view text, const EmbedderSpec& spec);

struct RetrievalIndex {
  EmbedderSpec spec;
  std::vector<Chunk> chunks;
  std::vector<double> matrix;  // [n_chunks x dim], row-major
  std::vector<double> norms;
};

RetrievalIndex build_index(std::span<const Chunk> chunks, const EmbedderSpec& spec);

// Same container layout as checkpoints: JSON manifest (embedder spec, chunk
// spans and texts) + little-endian f32 matrix blob.
void save_index(const RetrievalIndex& index, const std::string& path);
RetrievalIndex load_index(const std::string& path);

struct Hit {
  int chunk_id = 0;
  double score = 0.0;
};

// Cosine similarity, descending; ties broken by ascending chunk id; returns
// min(k, n) entries. A zero-norm query is an error.
std::vector<Hit> retrieve_topk(const RetrievalIndex& index,
                               std::span<const double> query_vec, size_t k);

std::vector<Hit> query_index(const RetrievalIndex& index, const std::string& question,
                             size_t k);

// Joins chunk texts with blank lines and substitutes {context} and {question}
// in the template.
std::string assemble_context(std::span<const std::string> chunk_texts,
                             const std::string& template_str,
                             const std::string& question);

struct EndpointConfig {
  std::string url;      // SEGCROSS_COMPLETE_URL when empty
  int timeout_ms = -1;  // <0: SEGCROSS_HTTP_TIMEOUT_MS or 5000
  int retries = -1;     // <0: SEGCROSS_HTTP_RETRIES or 2
};

// POST {"prompt": ...} -> {"text": ...}; transport only, no response shaping.
std::string complete(const std::string& prompt, const EndpointConfig& cfg);

// Chunk list persistence as JSONL, one object per chunk.
std::string chunks_to_jsonl(std::span<const Chunk> chunks);
void save_chunks_jsonl(std::span<const Chunk> chunks, const std::string& path);
std::vector<Chunk> load_chunks_jsonl(const std::string& path);

}  // namespace segcross::chunker
