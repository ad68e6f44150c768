#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "util.hpp"

namespace segcross::textprep {

// Fixed special-token ids. Regular tokens start at kNumSpecials.
inline constexpr size_t kPadId = 0;
inline constexpr size_t kUnkId = 1;
inline constexpr size_t kClsId = 2;
inline constexpr size_t kSepId = 3;
inline constexpr size_t kSentId = 4;
inline constexpr size_t kNumSpecials = 5;

struct Vocabulary {
  std::map<std::string, size_t> token_to_id;  // regular tokens only
  std::vector<std::string> id_to_token;       // full table, specials included
  size_t size() const { return id_to_token.size(); }
};

enum class SeparatorMode { Newline, Period, Custom };

struct SplitSpec {
  SeparatorMode mode = SeparatorMode::Newline;
  std::string custom_pattern;  // ECMAScript regex, Custom mode only
};

SplitSpec parse_separator_mode(const std::string& text);

struct PreprocessConfig {
  size_t max_sentence_tokens = 32;  // L
  size_t max_segment_tokens = 64;   // M, including CLS/SEP/SENT specials
  size_t max_segments = 4;          // K
  SplitSpec split;
};

// Enforces 0 < L <= M - 3 and K >= 1 so that every (truncated) sentence fits
// into some segment together with its SENT token and the CLS/SEP pair.
void validate(const PreprocessConfig& cfg);

// A document before tokenization: raw sentence strings plus gold labels.
struct RawDocument {
  std::string id;
  std::vector<std::string> sentences;
  std::vector<uint8_t> labels;  // 1 = sentence ends a paragraph
};

struct Sentence {
  std::string text;
  std::vector<size_t> token_ids;  // <= L after truncation
  size_t original_index = 0;
};

struct TokenizedDocument {
  std::string doc_id;
  std::vector<Sentence> sentences;
  std::vector<uint8_t> labels;
  size_t total_tokens = 0;
};

struct DocumentSegment {
  std::vector<size_t> token_ids;        // [CLS] ... [SEP]
  std::vector<size_t> sent_positions;   // indices of SENT tokens in token_ids
  std::vector<size_t> sentence_indices; // covered global sentence indices
  size_t length() const { return token_ids.size(); }
};

struct SegmentBatch {
  std::string doc_id;
  std::vector<DocumentSegment> segments;
  std::vector<std::vector<size_t>> padded_matrix;   // [k x T_max], PAD filled
  std::vector<std::vector<uint8_t>> attention_mask; // 1 on non-PAD positions
  size_t max_len = 0;                               // T_max
  size_t dropped_sentences = 0;
};

// Byte spans tiling the input text exactly; used where reconstruction must be
// byte-exact (the chunker). Each span's trimmed content is non-empty.
struct SentenceSpan {
  size_t begin = 0;
  size_t end = 0;  // exclusive
};

std::vector<std::string> split_sentences(std::string_view raw_text, const SplitSpec& spec);
std::vector<SentenceSpan> split_sentence_spans(std::string_view raw_text, const SplitSpec& spec);

// Splitter used for raw retrieval documents: sentence breaks after newlines
// and after Latin/CJK full stops at end of sentence.
std::vector<SentenceSpan> split_spans_for_chunking(std::string_view raw_text);

std::vector<std::string> tokenize_words(std::string_view text);
Sentence tokenize_sentence(std::string_view text, const Vocabulary& vocab, size_t max_tokens);

Vocabulary build_vocabulary(std::span<const RawDocument> corpus, size_t min_freq);

TokenizedDocument tokenize_document(const RawDocument& raw, const Vocabulary& vocab,
                                    size_t max_tokens);

// Greedy left-to-right packing of a document into bounded segments. A sentence
// (cost |tokens| + 1 for its SENT) joins the current segment iff
// payload + cost + 2 <= M, the +2 covering CLS and SEP. Documents packing into
// more than K segments keep the first K and record the dropped sentences.
SegmentBatch pack_segments(const TokenizedDocument& doc, const PreprocessConfig& cfg);

// Same packing without the K cap; used by windowed inference so that no
// sentence goes unscored.
SegmentBatch pack_segments_unbounded(const TokenizedDocument& doc, const PreprocessConfig& cfg);

// Slices a batch into consecutive windows of at most `window` segments, each
// re-padded to its own T_max.
std::vector<SegmentBatch> window_batches(const SegmentBatch& batch, size_t window);

// Gold label list per segment, one entry per SENT position.
std::vector<std::vector<uint8_t>> align_labels(const SegmentBatch& batch,
                                               const TokenizedDocument& doc);

// Paragraphs as inclusive [first, last] sentence-index ranges. Runs end at
// label-1 sentences; a trailing run without a closing 1 forms the final
// paragraph. The ranges tile [0, n).
struct ParagraphSpan {
  size_t first = 0;
  size_t last = 0;
};
std::vector<ParagraphSpan> reconstruct_partition(size_t n_sentences,
                                                 std::span<const uint8_t> labels);

// Canonical dataset format: one JSON object per line,
// {"id": string, "sentences": [string], "labels": [0|1]}.
std::vector<RawDocument> load_jsonl(const std::string& path);
void save_jsonl(std::span<const RawDocument> docs, const std::string& path);

// WIKI-727k-style export: any line starting with "========" begins a new gold
// paragraph. One document per file; `id` defaults to the file stem.
RawDocument parse_wiki727k(std::string_view text, const std::string& id);
void convert_wiki727k(const std::string& input_path, const std::string& output_path);

}  // namespace segcross::textprep
