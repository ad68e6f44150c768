#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "helpers.hpp"
#include "textprep.hpp"

using namespace segcross;
using namespace segcross::textprep;

namespace {

// Scan oracle: splits after each period followed by space or end of text.
std::vector<std::string> period_scan_oracle(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    if (text[i] == '.' &&
        (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n')) {
      while (i + 1 < text.size() && (text[i + 1] == ' ' || text[i + 1] == '\n')) ++i;
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty() && cur.find_first_not_of(" \t\n") != std::string::npos)
    out.push_back(cur);
  return out;
}

// Independent replay of the greedy packing recurrence: groups of sentence
// indices plus the number of sentences dropped by the K cap.
struct PackOracle {
  std::vector<std::vector<size_t>> groups;
  std::vector<size_t> lengths;  // with CLS/SEP/SENT counted
  size_t dropped = 0;
};

PackOracle pack_oracle(const std::vector<size_t>& sentence_tokens, size_t M, size_t K) {
  PackOracle oracle;
  std::vector<size_t> current;
  size_t payload = 0;
  for (size_t i = 0; i < sentence_tokens.size(); ++i) {
    const size_t cost = sentence_tokens[i] + 1;
    if (!current.empty() && payload + cost + 2 > M) {
      oracle.groups.push_back(current);
      oracle.lengths.push_back(payload + 2);
      current.clear();
      payload = 0;
    }
    current.push_back(i);
    payload += cost;
  }
  if (!current.empty()) {
    oracle.groups.push_back(current);
    oracle.lengths.push_back(payload + 2);
  }
  while (oracle.groups.size() > K) {
    oracle.dropped += oracle.groups.back().size();
    oracle.groups.pop_back();
    oracle.lengths.pop_back();
  }
  return oracle;
}

TokenizedDocument doc_with_token_counts(const std::vector<size_t>& counts) {
  TokenizedDocument doc;
  doc.doc_id = "synthetic";
  for (size_t i = 0; i < counts.size(); ++i) {
    Sentence s;
    s.original_index = i;
    s.token_ids.assign(counts[i], kUnkId);
    doc.total_tokens += counts[i];
    doc.sentences.push_back(std::move(s));
  }
  doc.labels.assign(counts.size(), 0);
  return doc;
}

Vocabulary tiny_vocab(const std::vector<std::string>& words) {
  std::vector<RawDocument> corpus(1);
  corpus[0].id = "v";
  std::string joined;
  for (const auto& w : words) joined += w + " ";
  corpus[0].sentences = {joined};
  corpus[0].labels = {0};
  return build_vocabulary(corpus, 1);
}

}  // namespace

TEST_CASE("split_sentences modes") {
  SUBCASE("newline basics") {
    SplitSpec spec;
    CHECK(split_sentences("A.\nB.\n", spec) == std::vector<std::string>{"A.", "B."});
    CHECK(split_sentences("", spec).empty());
    CHECK(split_sentences("   \n \n", spec).empty());
    // interior blank lines are separator bytes, not sentences
    CHECK(split_sentences("A.\n\n\nB.", spec) == std::vector<std::string>{"A.", "B."});
  }
  SUBCASE("period mode matches the scan oracle") {
    SplitSpec spec;
    spec.mode = SeparatorMode::Period;
    CHECK(split_sentences("x. y. z.", spec) ==
          std::vector<std::string>{"x.", "y.", "z."});
    Rng rng(31);
    const std::string alphabet = "ab. cd";
    for (int iter = 0; iter < 200; ++iter) {
      std::string text;
      const size_t len = rng.below(40);
      for (size_t i = 0; i < len; ++i) text.push_back(alphabet[rng.below(alphabet.size())]);
      auto got = split_sentences(text, spec);
      auto expected = period_scan_oracle(text);
      // oracle keeps separator bytes; compare after trimming
      std::vector<std::string> trimmed;
      for (auto& s : expected) {
        const auto b = s.find_first_not_of(" \t\n");
        const auto e = s.find_last_not_of(" \t\n");
        if (b != std::string::npos) trimmed.push_back(s.substr(b, e - b + 1));
      }
      CHECK(got == trimmed);
    }
  }
  SUBCASE("custom pattern") {
    SplitSpec spec = parse_separator_mode("custom:;");
    CHECK(split_sentences("a;b;c", spec) == std::vector<std::string>{"a", "b", "c"});
    CHECK_THROWS_AS(parse_separator_mode("custom:"), Error);
    CHECK_THROWS_AS(parse_separator_mode("bogus"), Error);
    CHECK_THROWS_AS(split_sentences("x", parse_separator_mode("custom:[")), Error);
  }
  SUBCASE("spans tile the input exactly") {
    Rng rng(77);
    const std::string alphabet = "ab .\nc";
    for (int iter = 0; iter < 300; ++iter) {
      std::string text;
      const size_t len = rng.below(60);
      for (size_t i = 0; i < len; ++i) text.push_back(alphabet[rng.below(alphabet.size())]);
      for (auto mode : {SeparatorMode::Newline, SeparatorMode::Period}) {
        SplitSpec spec;
        spec.mode = mode;
        auto spans = split_sentence_spans(text, spec);
        std::string rebuilt;
        for (const auto& span : spans)
          rebuilt += text.substr(span.begin, span.end - span.begin);
        if (!spans.empty()) {
          CHECK(spans.front().begin == 0);
          CHECK(spans.back().end == text.size());
        }
        CHECK(rebuilt == (spans.empty() ? "" : text));
      }
    }
  }
}

TEST_CASE("tokenize") {
  Vocabulary vocab = tiny_vocab({"the", "cat"});
  SUBCASE("known words") {
    Sentence s = tokenize_sentence("the cat", vocab, 8);
    CHECK(s.token_ids.size() == 2);
    for (size_t id : s.token_ids) CHECK(id >= kNumSpecials);
  }
  SUBCASE("truncation keeps the prefix") {
    Sentence s = tokenize_sentence("the cat the cat the", vocab, 3);
    CHECK(s.token_ids.size() == 3);
    CHECK(s.token_ids[0] == vocab.token_to_id.at("the"));
    CHECK(s.token_ids[1] == vocab.token_to_id.at("cat"));
    CHECK(s.token_ids[2] == vocab.token_to_id.at("the"));
  }
  SUBCASE("out of vocabulary maps to UNK") {
    Sentence s = tokenize_sentence("Zzqx!", vocab, 8);
    CHECK(s.token_ids == std::vector<size_t>{kUnkId});
  }
  SUBCASE("lowercasing and punctuation split") {
    Sentence s = tokenize_sentence("The,CAT.", vocab, 8);
    CHECK(s.token_ids == std::vector<size_t>{vocab.token_to_id.at("the"),
                                             vocab.token_to_id.at("cat")});
  }
  SUBCASE("punctuation-only text yields a single UNK") {
    Sentence s = tokenize_sentence("!!!", vocab, 8);
    CHECK(s.token_ids == std::vector<size_t>{kUnkId});
  }
}

TEST_CASE("build_vocabulary") {
  SUBCASE("frequency cutoff") {
    std::vector<RawDocument> corpus(1);
    corpus[0].id = "d";
    corpus[0].sentences = {"a a b"};
    corpus[0].labels = {0};
    Vocabulary vocab = build_vocabulary(corpus, 2);
    CHECK(vocab.token_to_id.count("a") == 1);
    CHECK(vocab.token_to_id.count("b") == 0);
    CHECK(vocab.size() == kNumSpecials + 1);
  }
  SUBCASE("empty corpus keeps only specials") {
    std::vector<RawDocument> corpus(1);
    corpus[0].id = "d";
    corpus[0].sentences = {""};
    corpus[0].labels = {0};
    Vocabulary vocab = build_vocabulary(corpus, 1);
    CHECK(vocab.size() == kNumSpecials);
    CHECK(vocab.id_to_token[kPadId] == "[PAD]");
    CHECK(vocab.id_to_token[kSentId] == "[SENT]");
  }
  SUBCASE("deterministic id assignment") {
    std::vector<RawDocument> corpus(2);
    corpus[0].id = "a";
    corpus[0].sentences = {"red green blue", "green blue"};
    corpus[0].labels = {0, 1};
    corpus[1].id = "b";
    corpus[1].sentences = {"blue yellow"};
    corpus[1].labels = {1};
    Vocabulary first = build_vocabulary(corpus, 1);
    Vocabulary second = build_vocabulary(corpus, 1);
    CHECK(first.token_to_id == second.token_to_id);
    CHECK(first.id_to_token == second.id_to_token);
    // most frequent first, ties by first occurrence
    CHECK(first.id_to_token[kNumSpecials] == "blue");
    CHECK(first.id_to_token[kNumSpecials + 1] == "green");
    CHECK(first.id_to_token[kNumSpecials + 2] == "red");
    CHECK(first.id_to_token[kNumSpecials + 3] == "yellow");
  }
}

TEST_CASE("pack_segments") {
  PreprocessConfig cfg;
  cfg.max_sentence_tokens = 8;
  cfg.max_segment_tokens = 12;
  cfg.max_segments = 4;

  SUBCASE("worked example: M=12, lengths 4/4/4") {
    auto doc = doc_with_token_counts({4, 4, 4});
    auto batch = pack_segments(doc, cfg);
    REQUIRE(batch.segments.size() == 2);
    CHECK(batch.segments[0].sentence_indices == std::vector<size_t>{0, 1});
    CHECK(batch.segments[1].sentence_indices == std::vector<size_t>{2});
    CHECK(batch.segments[0].length() == 12);
    CHECK(batch.segments[1].length() == 7);
    CHECK(batch.dropped_sentences == 0);
    // structure: CLS ... SEP with SENT at recorded positions
    for (const auto& seg : batch.segments) {
      CHECK(seg.token_ids.front() == kClsId);
      CHECK(seg.token_ids.back() == kSepId);
      for (size_t i = 0; i < seg.sent_positions.size(); ++i)
        CHECK(seg.token_ids[seg.sent_positions[i]] == kSentId);
    }
  }
  SUBCASE("single sentence") {
    auto doc = doc_with_token_counts({4});
    auto batch = pack_segments(doc, cfg);
    REQUIRE(batch.segments.size() == 1);
    CHECK(batch.segments[0].length() == 7);  // CLS + 4 + SENT + SEP
  }
  SUBCASE("K cap drops the tail") {
    cfg.max_segments = 1;
    auto doc = doc_with_token_counts({4, 4, 4});
    auto batch = pack_segments(doc, cfg);
    REQUIRE(batch.segments.size() == 1);
    CHECK(batch.segments[0].sentence_indices == std::vector<size_t>{0, 1});
    CHECK(batch.dropped_sentences == 1);
    auto oracle = pack_oracle({4, 4, 4}, 12, 1);
    CHECK(oracle.dropped == 1);
  }
  SUBCASE("padding and mask") {
    auto doc = doc_with_token_counts({4, 4, 4});
    auto batch = pack_segments(doc, cfg);
    CHECK(batch.max_len == 12);
    CHECK(batch.padded_matrix[1].size() == 12);
    for (size_t t = 0; t < batch.max_len; ++t) {
      CHECK(batch.attention_mask[1][t] == (t < 7 ? 1 : 0));
      if (t >= 7) CHECK(batch.padded_matrix[1][t] == kPadId);
    }
  }
  SUBCASE("config validation") {
    PreprocessConfig bad;
    bad.max_sentence_tokens = 10;
    bad.max_segment_tokens = 12;  // must be at least L + 3
    CHECK_THROWS_AS(validate(bad), Error);
    bad.max_segment_tokens = 13;
    CHECK_NOTHROW(validate(bad));
    PreprocessConfig zero_k;
    zero_k.max_segments = 0;
    CHECK_THROWS_AS(validate(zero_k), Error);
  }
  SUBCASE("over-long sentence rejected") {
    auto doc = doc_with_token_counts({9});  // cfg.L == 8
    CHECK_THROWS_AS(pack_segments(doc, cfg), Error);
  }
  SUBCASE("empty document") {
    auto doc = doc_with_token_counts({});
    auto batch = pack_segments(doc, cfg);
    CHECK(batch.segments.empty());
    CHECK(batch.max_len == 0);
  }
  SUBCASE("determinism") {
    auto doc = doc_with_token_counts({3, 5, 2, 8, 1});
    auto a = pack_segments(doc, cfg);
    auto b = pack_segments(doc, cfg);
    REQUIRE(a.segments.size() == b.segments.size());
    for (size_t j = 0; j < a.segments.size(); ++j)
      CHECK(a.segments[j].token_ids == b.segments[j].token_ids);
  }
  SUBCASE("random instances match the replay oracle") {
    Rng rng(41);
    for (int iter = 0; iter < 300; ++iter) {
      const size_t L = 1 + rng.below(12);
      const size_t M = L + 3 + rng.below(40);
      const size_t K = 1 + rng.below(6);
      const size_t n = rng.below(40);
      std::vector<size_t> counts(n);
      for (auto& c : counts) c = 1 + rng.below(L);
      PreprocessConfig rcfg;
      rcfg.max_sentence_tokens = L;
      rcfg.max_segment_tokens = M;
      rcfg.max_segments = K;
      auto doc = doc_with_token_counts(counts);
      auto batch = pack_segments(doc, rcfg);
      auto oracle = pack_oracle(counts, M, K);
      REQUIRE(batch.segments.size() == oracle.groups.size());
      CHECK(batch.dropped_sentences == oracle.dropped);
      std::vector<size_t> flat;
      for (size_t j = 0; j < batch.segments.size(); ++j) {
        CHECK(batch.segments[j].sentence_indices == oracle.groups[j]);
        CHECK(batch.segments[j].length() == oracle.lengths[j]);
        CHECK(batch.segments[j].length() <= M);
        flat.insert(flat.end(), batch.segments[j].sentence_indices.begin(),
                    batch.segments[j].sentence_indices.end());
      }
      // round trip: kept sentences are exactly the first n - dropped, in order
      std::vector<size_t> expected(n - oracle.dropped);
      std::iota(expected.begin(), expected.end(), 0);
      CHECK(flat == expected);
    }
  }
}

TEST_CASE("align_labels") {
  PreprocessConfig cfg;
  cfg.max_sentence_tokens = 8;
  cfg.max_segment_tokens = 12;
  cfg.max_segments = 4;
  auto doc = doc_with_token_counts({4, 4, 4});
  doc.labels = {0, 1, 0};

  SUBCASE("split preserves order") {
    auto batch = pack_segments(doc, cfg);
    auto labels = align_labels(batch, doc);
    REQUIRE(labels.size() == 2);
    CHECK(labels[0] == std::vector<uint8_t>{0, 1});
    CHECK(labels[1] == std::vector<uint8_t>{0});
  }
  SUBCASE("identity when one segment holds everything") {
    cfg.max_segment_tokens = 64;
    auto batch = pack_segments(doc, cfg);
    auto labels = align_labels(batch, doc);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0] == std::vector<uint8_t>{0, 1, 0});
  }
  SUBCASE("K-capped batch drops trailing labels") {
    cfg.max_segments = 1;
    auto batch = pack_segments(doc, cfg);
    auto labels = align_labels(batch, doc);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0] == std::vector<uint8_t>{0, 1});
  }
  SUBCASE("mismatched document is an error") {
    auto batch = pack_segments(doc, cfg);
    auto other = doc_with_token_counts({4});
    CHECK_THROWS_AS(align_labels(batch, other), Error);
  }
}

TEST_CASE("reconstruct_partition") {
  SUBCASE("two closed runs") {
    std::vector<uint8_t> labels = {0, 1, 0, 1};
    auto spans = reconstruct_partition(4, labels);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].first == 0);
    CHECK(spans[0].last == 1);
    CHECK(spans[1].first == 2);
    CHECK(spans[1].last == 3);
  }
  SUBCASE("no boundaries forms one paragraph") {
    std::vector<uint8_t> labels = {0, 0, 0};
    auto spans = reconstruct_partition(3, labels);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].first == 0);
    CHECK(spans[0].last == 2);
  }
  SUBCASE("all boundaries form singletons") {
    std::vector<uint8_t> labels = {1, 1, 1};
    auto spans = reconstruct_partition(3, labels);
    REQUIRE(spans.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
      CHECK(spans[i].first == i);
      CHECK(spans[i].last == i);
    }
  }
  SUBCASE("partition property: union is everything, pieces disjoint") {
    Rng rng(13);
    for (int iter = 0; iter < 500; ++iter) {
      const size_t n = rng.below(30);
      std::vector<uint8_t> labels(n);
      for (auto& l : labels) l = static_cast<uint8_t>(rng.below(2));
      auto spans = reconstruct_partition(n, labels);
      size_t covered = 0;
      size_t expect_start = 0;
      for (const auto& span : spans) {
        CHECK(span.first == expect_start);  // contiguous and disjoint
        CHECK(span.last >= span.first);
        covered += span.last - span.first + 1;
        expect_start = span.last + 1;
      }
      CHECK(covered == n);
      if (n > 0) CHECK(spans.back().last == n - 1);
    }
  }
  SUBCASE("length mismatch is an error") {
    std::vector<uint8_t> labels = {0, 1};
    CHECK_THROWS_AS(reconstruct_partition(3, labels), Error);
  }
}

TEST_CASE("jsonl round trip and validation") {
  sxtest::TempDir tmp("textprep");
  SUBCASE("round trip") {
    std::vector<RawDocument> docs(2);
    docs[0].id = "a";
    docs[0].sentences = {"hello world", "second sentence"};
    docs[0].labels = {0, 1};
    docs[1].id = "b";
    docs[1].sentences = {"unicode \xc3\xa9\xe3\x80\x82"};
    docs[1].labels = {1};
    const std::string path = tmp.file("corpus.jsonl");
    save_jsonl(docs, path);
    auto loaded = load_jsonl(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == docs[0].id);
    CHECK(loaded[0].sentences == docs[0].sentences);
    CHECK(loaded[0].labels == docs[0].labels);
    CHECK(loaded[1].sentences == docs[1].sentences);
  }
  SUBCASE("bad labels rejected") {
    const std::string path = tmp.file("bad.jsonl");
    write_file(path, "{\"id\":\"x\",\"sentences\":[\"a\"],\"labels\":[2]}\n");
    CHECK_THROWS_AS(load_jsonl(path), Error);
    write_file(path, "{\"id\":\"x\",\"sentences\":[\"a\"],\"labels\":[0,1]}\n");
    CHECK_THROWS_AS(load_jsonl(path), Error);
    write_file(path, "not json\n");
    CHECK_THROWS_AS(load_jsonl(path), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_jsonl(tmp.file("absent.jsonl")), Error);
  }
}

TEST_CASE("wiki727k conversion") {
  SUBCASE("paragraph markers close paragraphs") {
    const std::string text =
        "========,1,Preface.\n"
        "First sentence.\n"
        "Second sentence.\n"
        "========,2,History.\n"
        "Third sentence.\n";
    RawDocument doc = parse_wiki727k(text, "sample");
    CHECK(doc.id == "sample");
    REQUIRE(doc.sentences.size() == 3);
    CHECK(doc.labels == std::vector<uint8_t>{0, 1, 1});
  }
  SUBCASE("blank lines and trailing text") {
    const std::string text = "Alpha.\n\nBeta.\n========\nGamma.";
    RawDocument doc = parse_wiki727k(text, "d");
    REQUIRE(doc.sentences.size() == 3);
    CHECK(doc.labels == std::vector<uint8_t>{0, 1, 1});
  }
  SUBCASE("file conversion round trip") {
    sxtest::TempDir tmp("wiki");
    write_file(tmp.file("doc1.txt"), "========\nA.\nB.\n========\nC.\n");
    convert_wiki727k(tmp.file("doc1.txt"), tmp.file("out.jsonl"));
    auto docs = load_jsonl(tmp.file("out.jsonl"));
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].id == "doc1");
    CHECK(docs[0].labels == std::vector<uint8_t>{0, 1, 1});
  }
}

TEST_CASE("window_batches") {
  PreprocessConfig cfg;
  cfg.max_sentence_tokens = 4;
  cfg.max_segment_tokens = 7;  // one sentence per segment at most
  cfg.max_segments = 2;
  auto doc = doc_with_token_counts({4, 4, 4, 4, 4});
  auto full = pack_segments_unbounded(doc, cfg);
  REQUIRE(full.segments.size() == 5);
  auto windows = window_batches(full, 2);
  REQUIRE(windows.size() == 3);
  CHECK(windows[0].segments.size() == 2);
  CHECK(windows[2].segments.size() == 1);
  std::vector<size_t> flat;
  for (const auto& w : windows)
    for (const auto& seg : w.segments)
      flat.insert(flat.end(), seg.sentence_indices.begin(), seg.sentence_indices.end());
  CHECK(flat == std::vector<size_t>{0, 1, 2, 3, 4});
}
