#include "textprep.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace segcross::textprep {

namespace {

using json = nlohmann::json;

bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }

std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space_byte(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space_byte(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Positions immediately after each separator occurrence, strictly inside the
// text. Spans between consecutive cut positions tile the input exactly.
std::vector<size_t> separator_cuts(std::string_view text, const SplitSpec& spec) {
  std::vector<size_t> cuts;
  switch (spec.mode) {
    case SeparatorMode::Newline:
      for (size_t i = 0; i < text.size(); ++i)
        if (text[i] == '\n') cuts.push_back(i + 1);
      break;
    case SeparatorMode::Period:
      for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '.') continue;
        if (i + 1 == text.size() ||
            is_space_byte(static_cast<unsigned char>(text[i + 1])))
          cuts.push_back(i + 1);
      }
      break;
    case SeparatorMode::Custom: {
      if (spec.custom_pattern.empty())
        fail(ErrorCode::Config, "custom separator mode requires a pattern");
      std::regex re;
      try {
        re.assign(spec.custom_pattern);
      } catch (const std::regex_error& e) {
        fail(ErrorCode::Config,
             std::string("invalid separator pattern: ") + e.what());
      }
      auto begin = std::cregex_iterator(text.data(), text.data() + text.size(), re);
      for (auto it = begin; it != std::cregex_iterator(); ++it) {
        if (it->length() == 0) continue;  // empty matches would not advance
        cuts.push_back(static_cast<size_t>(it->position() + it->length()));
      }
      break;
    }
  }
  while (!cuts.empty() && cuts.back() >= text.size()) cuts.pop_back();
  return cuts;
}

std::vector<SentenceSpan> spans_from_cuts(std::string_view text,
                                          const std::vector<size_t>& cuts) {
  std::vector<SentenceSpan> spans;
  if (text.empty()) return spans;
  size_t begin = 0;
  auto push = [&](size_t end) {
    if (end <= begin) return;
    std::string_view body = text.substr(begin, end - begin);
    if (trim(body).empty() && !spans.empty()) {
      spans.back().end = end;  // fold whitespace-only pieces into the left span
    } else {
      spans.push_back({begin, end});
    }
    begin = end;
  };
  for (size_t cut : cuts) push(cut);
  push(text.size());
  // A leading whitespace-only span folds right instead.
  if (spans.size() >= 2 && trim(text.substr(spans[0].begin, spans[0].end - spans[0].begin)).empty()) {
    spans[1].begin = spans[0].begin;
    spans.erase(spans.begin());
  }
  return spans;
}

}  // namespace

SplitSpec parse_separator_mode(const std::string& text) {
  SplitSpec spec;
  if (text == "newline") {
    spec.mode = SeparatorMode::Newline;
  } else if (text == "period") {
    spec.mode = SeparatorMode::Period;
  } else if (text.rfind("custom:", 0) == 0) {
    spec.mode = SeparatorMode::Custom;
    spec.custom_pattern = text.substr(7);
    if (spec.custom_pattern.empty())
      fail(ErrorCode::Config, "custom separator mode requires a pattern");
  } else {
    fail(ErrorCode::Config,
         "unknown separator mode '" + text + "' (expected newline, period, or custom:<regex>)");
  }
  return spec;
}

void validate(const PreprocessConfig& cfg) {
  if (cfg.max_sentence_tokens == 0)
    fail(ErrorCode::Config, "max sentence tokens (L) must be positive");
  if (cfg.max_segments == 0)
    fail(ErrorCode::Config, "max segments (K) must be at least 1");
  if (cfg.max_segment_tokens < cfg.max_sentence_tokens + 3)
    fail(ErrorCode::Config,
         "max segment tokens (M) must be at least L + 3 so any sentence fits a segment");
}

std::vector<SentenceSpan> split_sentence_spans(std::string_view raw_text,
                                               const SplitSpec& spec) {
  auto spans = spans_from_cuts(raw_text, separator_cuts(raw_text, spec));
  // Whole-whitespace input yields a single span with empty content; treat as none.
  if (spans.size() == 1 &&
      trim(raw_text.substr(spans[0].begin, spans[0].end - spans[0].begin)).empty())
    spans.clear();
  return spans;
}

std::vector<std::string> split_sentences(std::string_view raw_text, const SplitSpec& spec) {
  std::vector<std::string> out;
  for (const auto& span : split_sentence_spans(raw_text, spec)) {
    std::string_view body = raw_text.substr(span.begin, span.end - span.begin);
    out.emplace_back(trim(body));
  }
  return out;
}

std::vector<SentenceSpan> split_spans_for_chunking(std::string_view text) {
  std::vector<size_t> cuts;
  for (size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '\n') {
      cuts.push_back(i + 1);
    } else if (c == '.') {
      if (i + 1 == text.size() || is_space_byte(static_cast<unsigned char>(text[i + 1])))
        cuts.push_back(i + 1);
    } else if (c == 0xE3 && i + 2 < text.size() &&
               static_cast<unsigned char>(text[i + 1]) == 0x80 &&
               static_cast<unsigned char>(text[i + 2]) == 0x82) {
      cuts.push_back(i + 3);  // U+3002 ideographic full stop
    }
  }
  while (!cuts.empty() && cuts.back() >= text.size()) cuts.pop_back();
  auto spans = spans_from_cuts(text, cuts);
  if (spans.size() == 1 &&
      trim(text.substr(spans[0].begin, spans[0].end - spans[0].begin)).empty())
    spans.clear();
  return spans;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return words;
}

Sentence tokenize_sentence(std::string_view text, const Vocabulary& vocab,
                           size_t max_tokens) {
  if (max_tokens == 0)
    fail(ErrorCode::Config, "max sentence tokens (L) must be positive");
  Sentence s;
  s.text.assign(text);
  auto words = tokenize_words(text);
  for (const auto& w : words) {
    if (s.token_ids.size() >= max_tokens) break;
    auto it = vocab.token_to_id.find(w);
    s.token_ids.push_back(it != vocab.token_to_id.end() ? it->second : kUnkId);
  }
  // Punctuation-only sentences still need a presence in the segment.
  if (s.token_ids.empty() && !trim(text).empty()) s.token_ids.push_back(kUnkId);
  return s;
}

Vocabulary build_vocabulary(std::span<const RawDocument> corpus, size_t min_freq) {
  struct Entry {
    size_t freq = 0;
    size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  size_t order = 0;
  for (const auto& doc : corpus) {
    for (const auto& sentence : doc.sentences) {
      for (auto& w : tokenize_words(sentence)) {
        auto [it, inserted] = counts.try_emplace(std::move(w));
        if (inserted) it->second.first_seen = order++;
        ++it->second.freq;
      }
    }
  }
  std::vector<std::pair<std::string, Entry>> kept;
  kept.reserve(counts.size());
  for (auto& [token, entry] : counts)
    if (entry.freq >= min_freq) kept.emplace_back(token, entry);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second.freq != b.second.freq) return a.second.freq > b.second.freq;
    return a.second.first_seen < b.second.first_seen;
  });

  Vocabulary vocab;
  vocab.id_to_token = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[SENT]"};
  for (auto& [token, entry] : kept) {
    vocab.token_to_id.emplace(token, vocab.id_to_token.size());
    vocab.id_to_token.push_back(token);
  }
  return vocab;
}

TokenizedDocument tokenize_document(const RawDocument& raw, const Vocabulary& vocab,
                                    size_t max_tokens) {
  if (raw.sentences.size() != raw.labels.size())
    fail(ErrorCode::InvalidArgument,
         "document '" + raw.id + "': one label per sentence required");
  TokenizedDocument doc;
  doc.doc_id = raw.id;
  doc.sentences.reserve(raw.sentences.size());
  for (size_t i = 0; i < raw.sentences.size(); ++i) {
    if (raw.labels[i] > 1)
      fail(ErrorCode::InvalidArgument,
           "document '" + raw.id + "': labels must be 0 or 1");
    Sentence s = tokenize_sentence(raw.sentences[i], vocab, max_tokens);
    s.original_index = i;
    doc.total_tokens += s.token_ids.size();
    doc.sentences.push_back(std::move(s));
  }
  doc.labels = raw.labels;
  return doc;
}

namespace {

SegmentBatch pack_impl(const TokenizedDocument& doc, const PreprocessConfig& cfg,
                       size_t k_cap) {
  validate(cfg);
  const size_t M = cfg.max_segment_tokens;

  SegmentBatch batch;
  batch.doc_id = doc.doc_id;

  std::vector<std::vector<size_t>> groups;  // sentence indices per segment
  std::vector<size_t> current;
  size_t payload = 0;  // token cost of sentences in the open segment, SENT included
  for (size_t i = 0; i < doc.sentences.size(); ++i) {
    const auto& s = doc.sentences[i];
    if (s.token_ids.size() > cfg.max_sentence_tokens)
      fail(ErrorCode::InvalidArgument,
           "sentence exceeds L tokens; truncate before packing");
    const size_t cost = s.token_ids.size() + 1;
    if (!current.empty() && payload + cost + 2 > M) {
      groups.push_back(std::move(current));
      current.clear();
      payload = 0;
    }
    current.push_back(i);
    payload += cost;
  }
  if (!current.empty()) groups.push_back(std::move(current));

  if (groups.size() > k_cap) {
    for (size_t g = k_cap; g < groups.size(); ++g)
      batch.dropped_sentences += groups[g].size();
    groups.resize(k_cap);
  }

  for (const auto& group : groups) {
    DocumentSegment seg;
    seg.token_ids.push_back(kClsId);
    for (size_t idx : group) {
      const auto& ids = doc.sentences[idx].token_ids;
      seg.token_ids.insert(seg.token_ids.end(), ids.begin(), ids.end());
      seg.sent_positions.push_back(seg.token_ids.size());
      seg.token_ids.push_back(kSentId);
      seg.sentence_indices.push_back(idx);
    }
    seg.token_ids.push_back(kSepId);
    batch.max_len = std::max(batch.max_len, seg.length());
    batch.segments.push_back(std::move(seg));
  }

  batch.padded_matrix.resize(batch.segments.size());
  batch.attention_mask.resize(batch.segments.size());
  for (size_t j = 0; j < batch.segments.size(); ++j) {
    auto& row = batch.padded_matrix[j];
    auto& mask = batch.attention_mask[j];
    row.assign(batch.max_len, kPadId);
    mask.assign(batch.max_len, 0);
    const auto& ids = batch.segments[j].token_ids;
    std::copy(ids.begin(), ids.end(), row.begin());
    std::fill(mask.begin(), mask.begin() + ids.size(), 1);
  }
  return batch;
}

}  // namespace

SegmentBatch pack_segments(const TokenizedDocument& doc, const PreprocessConfig& cfg) {
  return pack_impl(doc, cfg, cfg.max_segments);
}

SegmentBatch pack_segments_unbounded(const TokenizedDocument& doc,
                                     const PreprocessConfig& cfg) {
  return pack_impl(doc, cfg, std::numeric_limits<size_t>::max());
}

std::vector<SegmentBatch> window_batches(const SegmentBatch& batch, size_t window) {
  if (window == 0) fail(ErrorCode::InvalidArgument, "window size must be positive");
  std::vector<SegmentBatch> out;
  for (size_t start = 0; start < batch.segments.size(); start += window) {
    const size_t end = std::min(start + window, batch.segments.size());
    SegmentBatch w;
    w.doc_id = batch.doc_id;
    w.segments.assign(batch.segments.begin() + start, batch.segments.begin() + end);
    for (const auto& seg : w.segments) w.max_len = std::max(w.max_len, seg.length());
    w.padded_matrix.resize(w.segments.size());
    w.attention_mask.resize(w.segments.size());
    for (size_t j = 0; j < w.segments.size(); ++j) {
      w.padded_matrix[j].assign(w.max_len, kPadId);
      w.attention_mask[j].assign(w.max_len, 0);
      const auto& ids = w.segments[j].token_ids;
      std::copy(ids.begin(), ids.end(), w.padded_matrix[j].begin());
      std::fill(w.attention_mask[j].begin(), w.attention_mask[j].begin() + ids.size(), 1);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<std::vector<uint8_t>> align_labels(const SegmentBatch& batch,
                                               const TokenizedDocument& doc) {
  std::vector<std::vector<uint8_t>> out;
  out.reserve(batch.segments.size());
  for (const auto& seg : batch.segments) {
    if (seg.sent_positions.size() != seg.sentence_indices.size())
      fail(ErrorCode::InvalidArgument, "segment batch is inconsistent");
    std::vector<uint8_t> labels;
    labels.reserve(seg.sentence_indices.size());
    for (size_t idx : seg.sentence_indices) {
      if (idx >= doc.labels.size())
        fail(ErrorCode::InvalidArgument,
             "segment batch does not match document '" + doc.doc_id + "'");
      labels.push_back(doc.labels[idx]);
    }
    out.push_back(std::move(labels));
  }
  return out;
}

std::vector<ParagraphSpan> reconstruct_partition(size_t n_sentences,
                                                 std::span<const uint8_t> labels) {
  if (labels.size() != n_sentences)
    fail(ErrorCode::InvalidArgument,
         "reconstruct_partition: one label per scored sentence required");
  std::vector<ParagraphSpan> spans;
  size_t start = 0;
  for (size_t i = 0; i < n_sentences; ++i) {
    if (labels[i] == 1) {
      spans.push_back({start, i});
      start = i + 1;
    }
  }
  if (start < n_sentences) spans.push_back({start, n_sentences - 1});
  return spans;
}

std::vector<RawDocument> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open dataset: " + path);
  std::vector<RawDocument> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse,
           path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("sentences") ||
        !j.contains("labels"))
      fail(ErrorCode::Parse, path + ":" + std::to_string(line_no) +
                                 ": expected {id, sentences, labels}");
    RawDocument doc;
    try {
      doc.id = j.at("id").get<std::string>();
      doc.sentences = j.at("sentences").get<std::vector<std::string>>();
      for (const auto& v : j.at("labels")) {
        const int label = v.get<int>();
        if (label != 0 && label != 1)
          fail(ErrorCode::Parse, path + ":" + std::to_string(line_no) +
                                     ": labels must be 0 or 1");
        doc.labels.push_back(static_cast<uint8_t>(label));
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse,
           path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (doc.sentences.size() != doc.labels.size())
      fail(ErrorCode::Parse, path + ":" + std::to_string(line_no) +
                                 ": sentences and labels differ in length");
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_jsonl(std::span<const RawDocument> docs, const std::string& path) {
  std::ostringstream out;
  for (const auto& doc : docs) {
    json j;
    j["id"] = doc.id;
    j["sentences"] = doc.sentences;
    std::vector<int> labels(doc.labels.begin(), doc.labels.end());
    j["labels"] = labels;
    out << j.dump() << '\n';
  }
  write_file(path, out.str());
}

RawDocument parse_wiki727k(std::string_view text, const std::string& id) {
  RawDocument doc;
  doc.id = id;
  size_t paragraph_start = 0;  // index of first sentence in the open paragraph
  auto close_paragraph = [&]() {
    if (doc.labels.size() > paragraph_start) doc.labels.back() = 1;
    paragraph_start = doc.labels.size();
  };
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, (nl == std::string_view::npos ? text.size() : nl) - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    if (line.rfind("========", 0) == 0) {
      close_paragraph();
      continue;
    }
    std::string_view body = trim(line);
    if (body.empty()) continue;
    doc.sentences.emplace_back(body);
    doc.labels.push_back(0);
  }
  close_paragraph();
  return doc;
}

void convert_wiki727k(const std::string& input_path, const std::string& output_path) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(input_path, ec)) {
    for (const auto& entry : fs::directory_iterator(input_path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else {
    files.emplace_back(input_path);
  }
  std::vector<RawDocument> docs;
  for (const auto& file : files) {
    RawDocument doc = parse_wiki727k(read_file(file.string()), file.stem().string());
    if (!doc.sentences.empty()) docs.push_back(std::move(doc));
  }
  save_jsonl(docs, output_path);
}

}  // namespace segcross::textprep
