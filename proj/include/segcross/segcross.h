/*
 * segcross — text semantic segmentation with cross-segment fusion, plus a
 * retrieval-oriented chunk splitter.
 *
 * C API over the C++ core. All objects are opaque handles created by
 * sx_*_open / sx_*_build / sx_train calls and released with the matching
 * sx_*_free. Functions return SX_OK on success; on failure they return an
 * error code and leave a human-readable detail message in sx_last_error()
 * (thread-local). Strings returned through char** out-parameters are owned
 * by the caller and must be released with sx_string_free().
 */

#ifndef SEGCROSS_H
#define SEGCROSS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SX_API __declspec(dllexport)
#else
#define SX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sx_status {
  SX_OK = 0,
  SX_ERR_INVALID_ARGUMENT = 1,
  SX_ERR_CONFIG = 2,
  SX_ERR_IO = 3,
  SX_ERR_PARSE = 4,
  SX_ERR_FORMAT = 5,   /* bad/unsupported checkpoint or index container */
  SX_ERR_ENDPOINT = 6, /* HTTP endpoint failure */
  SX_ERR_INTERNAL = 7
} sx_status;

SX_API const char* sx_status_name(sx_status status);

/* Detail message for the most recent failure on this thread. */
SX_API const char* sx_last_error(void);

SX_API void sx_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Corpus: documents as sentences plus gold boundary labels.           */
/* ------------------------------------------------------------------ */

typedef struct sx_corpus sx_corpus;

/* Canonical dataset format: one JSON object per line,
 * {"id": string, "sentences": [string], "labels": [0|1]}. */
SX_API sx_status sx_corpus_open_jsonl(const char* path, sx_corpus** out);
SX_API sx_status sx_corpus_write_jsonl(const sx_corpus* corpus, const char* path);

/* Deterministic synthetic corpus: per document, one block of sentences per
 * topic drawn from disjoint token pools, label 1 on each block's last
 * sentence. */
SX_API sx_status sx_corpus_synth(int n_topics, int n_docs, uint64_t seed,
                                 sx_corpus** out);

/* Half-open [begin, end) slice of the document list. */
SX_API sx_status sx_corpus_slice(const sx_corpus* corpus, size_t begin, size_t end,
                                 sx_corpus** out);
SX_API size_t sx_corpus_doc_count(const sx_corpus* corpus);
SX_API void sx_corpus_free(sx_corpus* corpus);

/* Converts a WIKI-727k-style plain-text export (lines starting with
 * "========" begin a new gold paragraph) into the canonical JSONL format.
 * input_path may be a single file or a directory of files. */
SX_API sx_status sx_convert_wiki727k(const char* input_path, const char* output_path);

/* ------------------------------------------------------------------ */
/* Model: trainable encoder + fusion module + boundary classifier.     */
/* ------------------------------------------------------------------ */

typedef struct sx_model sx_model;

/* Trains on a corpus. config_json may be NULL/empty for defaults; recognized
 * keys include lr, epochs, seed, csfm_enabled, csfm_activation,
 * positive_weight, preprocess{L,M,K,separator}, encoder{d_model,n_heads,
 * n_layers,d_ff,max_positions,seed}. seed_override >= 0 replaces both the
 * shuffle and the initialization seeds. out_loss_csv (optional) receives the
 * per-epoch loss log as CSV. */
SX_API sx_status sx_train(const sx_corpus* data, const char* config_json,
                          int64_t seed_override, sx_model** out_model,
                          char** out_loss_csv);

SX_API sx_status sx_model_open(const char* path, sx_model** out);
SX_API sx_status sx_model_save(const sx_model* model, const char* path);
SX_API void sx_model_free(sx_model* model);

typedef struct sx_metrics {
  long long tp, fp, fn;
  double precision, recall, f1;
} sx_metrics;

/* Boundary precision/recall/F1 on the positive class. When
 * include_final_boundary is 0, each document's last scored sentence is
 * excluded from the counts. */
SX_API sx_status sx_evaluate(const sx_model* model, const sx_corpus* data,
                             int include_final_boundary, sx_metrics* out);

/* Segments raw text. separator_mode is "newline", "period", or
 * "custom:<regex>". Returns one JSON line:
 * {"id":..., "labels":[...], "paragraph_spans":[[first,last],...]}. */
SX_API sx_status sx_segment_text(const sx_model* model, const char* doc_id,
                                 const char* text, const char* separator_mode,
                                 char** out_json);

/* Re-evaluates the model across candidate segment lengths M and returns a CSV
 * table "M,precision,recall,f1,note". Invalid values are noted, not fatal. */
SX_API sx_status sx_sweep_eval(const sx_model* model, const sx_corpus* data,
                               const size_t* m_values, size_t n_values,
                               int include_final_boundary, char** out_csv);

/* ------------------------------------------------------------------ */
/* Chunking and retrieval.                                             */
/* ------------------------------------------------------------------ */

typedef struct sx_chunk_list sx_chunk_list;

/* Splits text into retrieval chunks: pieces within max_chunk_chars are kept,
 * oversize pieces are recursively re-segmented by the model up to max_depth.
 * Concatenating the chunk texts reproduces the input exactly. */
SX_API sx_status sx_chunk_text(const sx_model* model, const char* text,
                               size_t max_chunk_chars, size_t max_depth,
                               sx_chunk_list** out);

SX_API sx_status sx_chunk_list_open_jsonl(const char* path, sx_chunk_list** out);
SX_API sx_status sx_chunk_list_write_jsonl(const sx_chunk_list* chunks,
                                           const char* path);
/* Same JSONL as sx_chunk_list_write_jsonl, returned as a string. */
SX_API sx_status sx_chunk_list_to_jsonl(const sx_chunk_list* chunks, char** out);
SX_API size_t sx_chunk_list_count(const sx_chunk_list* chunks);
SX_API const char* sx_chunk_list_text(const sx_chunk_list* chunks, size_t i);
SX_API void sx_chunk_list_free(sx_chunk_list* chunks);

typedef struct sx_index sx_index;

/* embedder_kind is "hashed" (seeded character-3-gram hashing, the default
 * deterministic embedder) or "external" (POST {"input": text} to endpoint_url
 * or $SEGCROSS_EMBED_URL, expecting {"embedding": [float]}). */
SX_API sx_status sx_index_build(const sx_chunk_list* chunks, const char* embedder_kind,
                                size_t dim, uint64_t seed, const char* endpoint_url,
                                sx_index** out);
SX_API sx_status sx_index_save(const sx_index* index, const char* path);
SX_API sx_status sx_index_open(const char* path, sx_index** out);
SX_API void sx_index_free(sx_index* index);

typedef struct sx_hits sx_hits;

/* Top-k chunks by cosine similarity; ties broken by ascending chunk id. */
SX_API sx_status sx_index_query(const sx_index* index, const char* question,
                                size_t top_k, sx_hits** out);
SX_API size_t sx_hits_count(const sx_hits* hits);
SX_API int sx_hits_chunk_id(const sx_hits* hits, size_t i);
SX_API double sx_hits_score(const sx_hits* hits, size_t i);
SX_API const char* sx_hits_text(const sx_hits* hits, size_t i);
SX_API void sx_hits_free(sx_hits* hits);

/* Joins the hit texts in rank order (blank-line separated) and substitutes
 * {context} and {question} in template_str. */
SX_API sx_status sx_assemble_context(const sx_hits* hits, const char* template_str,
                                     const char* question, char** out_prompt);

/* POST {"prompt": ...} to endpoint_url (or $SEGCROSS_COMPLETE_URL), expecting
 * {"text": ...}. timeout_ms/retries < 0 fall back to $SEGCROSS_HTTP_TIMEOUT_MS
 * (default 5000) and $SEGCROSS_HTTP_RETRIES (default 2). */
SX_API sx_status sx_complete(const char* prompt, const char* endpoint_url,
                             int timeout_ms, int retries, char** out_answer);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SEGCROSS_H */
